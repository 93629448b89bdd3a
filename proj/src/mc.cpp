#include "collapsim/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include "collapsim/detail/binned_accum.hpp"
#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

using detail::GroupAccumulator;
using detail::group_curve;
using detail::kAccumulationBlocks;
using detail::resolve_thread_count;

struct BlockAccumulator {
  GroupAccumulator mov, not_mov, none;
  std::vector<double> collapse_times;  // trajectory order within the block
  std::vector<Trajectory> trajectories;
  explicit BlockAccumulator(std::size_t bins)
      : mov(bins), not_mov(bins), none(bins) {}
};

}  // namespace

ScenarioTables make_scenario_tables(const ExperimentScenario& sc,
                                    const BranchWeights& w) {
  return ScenarioTables{sc, w, make_hazard(sc),
                        sc.rest_detection_probability()};
}

std::optional<double> sample_collapse_time(const CumulativeHazard& hazard,
                                           Rng& rng) {
  double target = -std::log(rng.u01_positive());
  return hazard.inverse(target);
}

Outcome sample_outcome(const BranchWeights& w, Rng& rng) {
  return rng.u01() < w.w_mov ? Outcome::kMov : Outcome::kNotMov;
}

Trajectory simulate_trajectory(const ScenarioTables& tables,
                               const McOptions& options, Rng& rng,
                               std::uint64_t seed_id) {
  const ExperimentScenario& sc = tables.sc;
  const TimeGrid& grid = sc.grid;
  Trajectory traj;
  traj.seed_id = seed_id;
  traj.bin_counts.assign(static_cast<std::size_t>(grid.n_bins), 0);

  // Fixed draw order: collapse time, Born outcome, then the photon stream.
  traj.collapse_time = sample_collapse_time(tables.hazard, rng);
  traj.outcome = traj.collapse_time ? sample_outcome(tables.w, rng)
                                    : Outcome::kNone;

  double n_in = sc.interferometer.input_rate;
  if (n_in <= 0.0) return traj;
  double dt = grid.dt();
  double t = 0.0;
  std::int64_t k = 0;
  while (true) {
    if (options.emission == EmissionMode::kPoisson) {
      t += -std::log(rng.u01_positive()) / n_in;
    } else {
      t = static_cast<double>(++k) / n_in;
    }
    if (t >= grid.horizon) break;
    double accept_u = rng.u01();
    double p;
    if (traj.collapse_time && t >= *traj.collapse_time) {
      p = traj.outcome == Outcome::kMov ? sc.moving_detection_probability(t)
                                        : tables.p0;
    } else {
      p = tables.w.w_mov * sc.moving_detection_probability(t) +
          tables.w.w_not_mov * tables.p0;
    }
    if (accept_u < p) {
      int bin = static_cast<int>(t / dt);
      if (bin >= grid.n_bins) bin = grid.n_bins - 1;
      ++traj.bin_counts[static_cast<std::size_t>(bin)];
      if (options.record_events) traj.event_times.push_back(t);
    }
  }
  return traj;
}

Trajectory simulate_trajectory(const ExperimentScenario& sc,
                               const BranchWeights& w, Rng& rng) {
  ScenarioTables tables = make_scenario_tables(sc, w);
  return simulate_trajectory(tables, McOptions{}, rng);
}

EnsembleSummary run_ensemble(const ExperimentScenario& sc,
                             const BranchWeights& w, std::int64_t n,
                             const SeedPolicy& policy,
                             const McOptions& options) {
  if (n < 1) throw DomainError("ensemble size must be >= 1");
  ScenarioTables tables = make_scenario_tables(sc, w);
  std::size_t bins = static_cast<std::size_t>(sc.grid.n_bins);

  std::vector<BlockAccumulator> blocks;
  blocks.reserve(kAccumulationBlocks);
  for (int b = 0; b < kAccumulationBlocks; ++b)
    blocks.emplace_back(bins);

  // Trajectories are partitioned into fixed contiguous blocks; workers pull
  // whole blocks, so aggregation order inside each block and the final merge
  // order are both independent of the worker count.
  std::atomic<int> next_block{0};
  auto worker = [&]() {
    while (true) {
      int b = next_block.fetch_add(1);
      if (b >= kAccumulationBlocks) return;
      std::int64_t lo = n * b / kAccumulationBlocks;
      std::int64_t hi = n * (b + 1) / kAccumulationBlocks;
      BlockAccumulator& acc = blocks[static_cast<std::size_t>(b)];
      for (std::int64_t i = lo; i < hi; ++i) {
        Rng rng(policy.master_seed, static_cast<std::uint64_t>(i));
        Trajectory traj = simulate_trajectory(
            tables, options, rng, static_cast<std::uint64_t>(i));
        switch (traj.outcome) {
          case Outcome::kMov:
            acc.mov.add(traj.bin_counts);
            break;
          case Outcome::kNotMov:
            acc.not_mov.add(traj.bin_counts);
            break;
          case Outcome::kNone:
            acc.none.add(traj.bin_counts);
            break;
        }
        if (traj.collapse_time)
          acc.collapse_times.push_back(*traj.collapse_time);
        if (options.keep_trajectories)
          acc.trajectories.push_back(std::move(traj));
      }
    }
  };

  int n_threads = resolve_thread_count(options.n_threads);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }

  GroupAccumulator mov(bins), not_mov(bins), none(bins), all(bins);
  EnsembleSummary summary;
  for (const BlockAccumulator& acc : blocks) {
    mov.merge(acc.mov);
    not_mov.merge(acc.not_mov);
    none.merge(acc.none);
    summary.collapse_times.insert(summary.collapse_times.end(),
                                  acc.collapse_times.begin(),
                                  acc.collapse_times.end());
    if (options.keep_trajectories)
      summary.trajectories.insert(
          summary.trajectories.end(),
          std::make_move_iterator(acc.trajectories.begin()),
          std::make_move_iterator(acc.trajectories.end()));
  }
  if (options.keep_trajectories) {
    std::vector<BlockAccumulator>().swap(blocks);
  }
  all.merge(mov);
  all.merge(not_mov);
  all.merge(none);

  summary.n_trajectories = n;
  summary.outcome_counts = {mov.n, not_mov.n, none.n};
  summary.mean_all = group_curve(sc.grid, all);
  summary.mean_to_dc = group_curve(sc.grid, mov);
  summary.mean_to_zero = group_curve(sc.grid, not_mov);

  if (!summary.collapse_times.empty()) {
    std::vector<double> sorted = summary.collapse_times;
    std::size_t m = sorted.size();
    std::nth_element(sorted.begin(), sorted.begin() + m / 2, sorted.end());
    double upper = sorted[m / 2];
    if (m % 2 == 1) {
      summary.median_collapse_time = upper;
    } else {
      double lower = *std::max_element(sorted.begin(), sorted.begin() + m / 2);
      summary.median_collapse_time = 0.5 * (lower + upper);
    }
  }
  return summary;
}

}  // namespace collapsim
