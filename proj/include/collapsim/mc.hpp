#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "collapsim/curves.hpp"
#include "collapsim/rng.hpp"
#include "collapsim/scenario.hpp"

namespace collapsim {

enum class Outcome { kMov, kNotMov, kNone };

// One stochastic realization of the experiment. bin_counts always holds the
// per-bin detection counts on the scenario grid; event_times is filled only
// when event recording is requested.
struct Trajectory {
  std::optional<double> collapse_time;  // none = survived the horizon
  Outcome outcome = Outcome::kNone;     // kNone iff collapse_time is none
  std::vector<std::int32_t> bin_counts;
  std::vector<double> event_times;
  std::uint64_t seed_id = 0;
};

struct OutcomeCounts {
  std::int64_t n_mov = 0;
  std::int64_t n_not_mov = 0;
  std::int64_t n_none = 0;
  std::int64_t total() const { return n_mov + n_not_mov + n_none; }
};

// Trajectory i derives its randomness purely from (master_seed, i).
struct SeedPolicy {
  std::uint64_t master_seed = 0;
};

enum class EmissionMode { kPoisson, kDeterministic };

struct McOptions {
  EmissionMode emission = EmissionMode::kPoisson;
  bool keep_trajectories = false;  // retain per-trajectory records
  bool record_events = false;      // retain raw event times per trajectory
  int n_threads = 0;               // 0 = automatic
};

// Ensemble averages. mean_all covers every trajectory; mean_to_dc only those
// with outcome kMov; mean_to_zero only those with outcome kNotMov.
// Trajectories that never collapse contribute to mean_all only and are
// counted in outcome_counts.n_none. Empirical curves carry per-bin stderr.
struct EnsembleSummary {
  std::int64_t n_trajectories = 0;
  RateCurve mean_all;
  RateCurve mean_to_dc;
  RateCurve mean_to_zero;
  OutcomeCounts outcome_counts;
  // Collapse times of the collapsed trajectories, in trajectory order.
  std::vector<double> collapse_times;
  std::optional<double> median_collapse_time;
  // Filled only when McOptions::keep_trajectories is set.
  std::vector<Trajectory> trajectories;
};

// Precomputed per-scenario data shared across trajectories: one hazard
// quadrature, the branch weights, and the interferometer working point.
struct ScenarioTables {
  ExperimentScenario sc;
  BranchWeights w;
  CumulativeHazard hazard;
  double p0 = 0.0;  // detection probability at rest
};
ScenarioTables make_scenario_tables(const ExperimentScenario& sc,
                                    const BranchWeights& w);

// Inverse-CDF sampling of the collapse time: draw u, solve H(t) = -ln u on
// the precomputed cumulative hazard; none when the horizon survives.
std::optional<double> sample_collapse_time(const CumulativeHazard& hazard,
                                           Rng& rng);

// Born rule over the two branches.
Outcome sample_outcome(const BranchWeights& w, Rng& rng);

// One trajectory: collapse time, Born outcome, then photon detections as an
// inhomogeneous Poisson stream (emissions at the input rate, thinned by the
// detection probability of the current state).
Trajectory simulate_trajectory(const ScenarioTables& tables,
                               const McOptions& options, Rng& rng,
                               std::uint64_t seed_id = 0);
Trajectory simulate_trajectory(const ExperimentScenario& sc,
                               const BranchWeights& w, Rng& rng);

// n independent trajectories on substreams of policy.master_seed, aggregated
// into fixed accumulation blocks so the result is bit-identical for any
// worker count.
EnsembleSummary run_ensemble(const ExperimentScenario& sc,
                             const BranchWeights& w, std::int64_t n,
                             const SeedPolicy& policy,
                             const McOptions& options = {});

}  // namespace collapsim
