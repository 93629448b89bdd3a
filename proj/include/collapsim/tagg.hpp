#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "collapsim/mc.hpp"
#include "collapsim/scenario.hpp"

namespace collapsim {

// Two-arm Mach-Zehnder variant: a split single photon displaces either the
// "+" mirror or the "-" mirror, producing a three-branch superposition
// {+, -, 0} that decays through three independent reduction channels.

// One arm's actuation hardware and its decay-rate model.
struct ArmSpec {
  PhotodiodeSpec photodiode{};
  PiezoSpec piezo{};
  MirrorSpec mirror{};
  DriveCircuitSpec drive{};
  CollapseModelConfig model{};
  void validate() const;
  double displacement(double t, const PhysicalConstants& consts) const;
  double decay_rate_at(double t, const PhysicalConstants& consts) const;
};

struct MZScenario {
  PhysicalConstants constants{};
  // Fringe parameters and input rate; the phase here always uses the doubled
  // (4 pi) convention of the twice-reflected geometry, and the
  // coupling_transmission field is unused (the splitter coefficients below
  // set the branch weights).
  InterferometerSpec interferometer{};
  double splitter_T2 = 0.0;   // |transmission|^2
  double splitter_R2 = 0.0;   // |reflection|^2; T2 + R2 <= 1
  double eta_plus = 0.0;      // detection efficiency, "+" diode
  double eta_minus = 0.0;     // detection efficiency, "-" diode
  ArmSpec arm_plus{};
  ArmSpec arm_minus{};
  RateTable gamma_ps{};       // power-supply decay rate; empty means 0
  TimeGrid grid{};
  bool inverted = false;      // ds_minus(t) = -|arm_minus displacement|
  void validate() const;

  double ds_plus(double t) const;
  double ds_minus(double t) const;  // sign-flipped in the inverted variant
  double gamma_plus(double t) const;
  double gamma_minus(double t) const;
  double gamma_ps_rate(double t) const;
};

// Born weights of the three branches; sums to 1 exactly by construction.
struct MZWeights {
  double w_plus = 0.0;
  double w_minus = 0.0;
  double w_zero = 1.0;
  double of(int branch) const {  // 0: +, 1: -, 2: zero
    return branch == 0 ? w_plus : branch == 1 ? w_minus : w_zero;
  }
};

// Nonempty subset of the branches {+, -, 0} still in superposition.
struct SupportSet {
  std::array<bool, 3> has{true, true, true};  // indices: 0 "+", 1 "-", 2 "0"
  int size() const { return (has[0] ? 1 : 0) + (has[1] ? 1 : 0) +
                            (has[2] ? 1 : 0); }
  bool singleton() const { return size() == 1; }
  int sole_branch() const;  // requires singleton()
  bool operator==(const SupportSet&) const = default;
};

// Reduction channels. Each distinguishes a fixed branch subset A: it is
// active while the support intersects both A and its complement, and firing
// splits the support into those two cells, keeping one by Born's rule.
enum class MZChannel { kMirrorPlus, kMirrorMinus, kPowerSupply };

struct MZReductionEvent {
  double time = 0.0;
  MZChannel channel{};
  SupportSet before{}, after{};
};

struct MZTrajectory {
  SupportSet final_support{};
  std::optional<int> final_branch;  // set iff the support ended a singleton
  std::vector<std::int32_t> bin_counts;
  std::vector<MZReductionEvent> reductions;
  std::uint64_t seed_id = 0;
};

struct MZEnsembleSummary {
  std::int64_t n_trajectories = 0;
  RateCurve mean_to_dc_plus;   // over trajectories fully reduced to "+"
  RateCurve mean_all;
  std::array<std::int64_t, 3> branch_counts{0, 0, 0};  // +, -, zero
  std::int64_t n_unresolved = 0;
  std::vector<MZTrajectory> trajectories;  // kept on request
};

// Detection probability of the monitor diode:
//   alpha sin^2(4 pi (ds_plus - ds_minus) / lambda + phi0) + beta.
double mz_detection_probability(double ds_plus, double ds_minus,
                                const InterferometerSpec& itf);

// (T2 eta_plus, R2 eta_minus, remainder); rejects a negative remainder.
MZWeights mz_weights(double T2, double R2, double eta_plus, double eta_minus);

struct MZCurves {
  RateCurve dc_plus;
  RateCurve zero;
  RateCurve dc_minus;
};
MZCurves mz_curves(const MZScenario& sc);

// The three cumulative channel hazards on one shared node layout.
struct MZHazards {
  CumulativeHazard plus, minus, ps;
};
MZHazards make_mz_hazards(const MZScenario& sc);

// Closed-form conditional mean over trajectories that reduce to "+":
//   dc+ - w_minus (dc+ - dc-) [E3 + (1 - e^{-Hps}) E_pm / (w_plus + w_minus)]
//       - w_zero  (dc+ - N0 ) [E3 + (1 - e^{-Hm })  E_pps / (w_zero + w_plus)]
// with E3 = e^{-(Hp+Hm+Hps)}, E_pm = e^{-(Hp+Hm)}, E_pps = e^{-(Hp+Hps)}.
// Rejects w_plus = 0.
RateCurve mz_mean_to_dc_plus(const MZScenario& sc);
RateCurve mz_mean_to_dc_plus(const MZScenario& sc, const MZHazards& hazards);

// Detection probability of the monitor diode for a partially reduced state:
// the Born-renormalized mixture of the per-branch probabilities over the
// support.
double mz_support_probability(const MZScenario& sc, const MZWeights& w,
                              const SupportSet& support, double t);

// Precomputed shared tables for trajectory simulation.
struct MZTables {
  MZScenario sc;
  MZWeights w;
  MZHazards hazards;
};
MZTables make_mz_tables(const MZScenario& sc);

// One competing-channels trajectory: channels race with exact per-channel
// inverse-CDF waiting times (global-time hazards), each firing keeps one
// Born-selected cell of the partition; photons stream as in mc-sim with the
// support mixture as the thinning probability.
MZTrajectory mz_simulate_trajectory(const MZTables& tables,
                                    const McOptions& options, Rng& rng,
                                    std::uint64_t seed_id = 0);
MZTrajectory mz_simulate_trajectory(const MZScenario& sc, Rng& rng);

MZEnsembleSummary mz_run_ensemble(const MZScenario& sc, std::int64_t n,
                                  const SeedPolicy& policy,
                                  const McOptions& options = {});

}  // namespace collapsim
