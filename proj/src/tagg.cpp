#include "collapsim/tagg.hpp"

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

// Branch subsets distinguished by each channel, indexed by MZChannel.
constexpr std::array<std::array<bool, 3>, 3> kDistinguished{{
    {true, false, false},  // mirror "+" separates branch +
    {false, true, false},  // mirror "-" separates branch -
    {true, true, false},   // power supply separates {+,-} from 0
}};

bool channel_active(const SupportSet& s, int channel) {
  const auto& a = kDistinguished[static_cast<std::size_t>(channel)];
  bool inside = false, outside = false;
  for (int b = 0; b < 3; ++b) {
    if (!s.has[static_cast<std::size_t>(b)]) continue;
    (a[static_cast<std::size_t>(b)] ? inside : outside) = true;
  }
  return inside && outside;
}

struct BlockAccumulator {
  GroupAccumulator plus, minus, zero, unresolved;
  std::vector<MZTrajectory> trajectories;
  explicit BlockAccumulator(std::size_t bins)
      : plus(bins), minus(bins), zero(bins), unresolved(bins) {}
};

}  // namespace

void ArmSpec::validate() const {
  photodiode.validate();
  piezo.validate();
  mirror.validate();
  drive.validate();
  model.validate();
}

double ArmSpec::displacement(double t, const PhysicalConstants& consts) const {
  return mirror_displacement(t, photodiode, piezo, drive, consts);
}

double ArmSpec::decay_rate_at(double t,
                              const PhysicalConstants& consts) const {
  if (model.kind == ModelKind::kCustomTable)
    return model_decay_rate(0.0, t, 0.0, model, consts);
  double k = dp_quadratic_coefficient(piezo, mirror, consts);
  return model_decay_rate(displacement(t, consts), t, k, model, consts);
}

void MZScenario::validate() const {
  constants.validate();
  interferometer.validate();
  if (splitter_T2 < 0.0 || splitter_T2 > 1.0)
    throw DomainError("tagg.splitter_T2 must lie in [0, 1]");
  if (splitter_R2 < 0.0 || splitter_R2 > 1.0)
    throw DomainError("tagg.splitter_R2 must lie in [0, 1]");
  if (splitter_T2 + splitter_R2 > 1.0 + 1e-12)
    throw DomainError("tagg.splitter_T2 + splitter_R2 must be <= 1");
  if (eta_plus < 0.0 || eta_plus > 1.0)
    throw DomainError("tagg.eta_plus must lie in [0, 1]");
  if (eta_minus < 0.0 || eta_minus > 1.0)
    throw DomainError("tagg.eta_minus must lie in [0, 1]");
  arm_plus.validate();
  arm_minus.validate();
  if (!gamma_ps.empty()) gamma_ps.validate();
  grid.validate();
}

double MZScenario::ds_plus(double t) const {
  return arm_plus.displacement(t, constants);
}

double MZScenario::ds_minus(double t) const {
  double ds = arm_minus.displacement(t, constants);
  return inverted ? -ds : ds;
}

double MZScenario::gamma_plus(double t) const {
  return arm_plus.decay_rate_at(t, constants);
}

double MZScenario::gamma_minus(double t) const {
  return arm_minus.decay_rate_at(t, constants);
}

double MZScenario::gamma_ps_rate(double t) const {
  return gamma_ps.empty() ? 0.0 : gamma_ps.at(t);
}

int SupportSet::sole_branch() const {
  if (!singleton()) throw DomainError("support is not a singleton");
  for (int b = 0; b < 3; ++b)
    if (has[static_cast<std::size_t>(b)]) return b;
  return -1;  // unreachable: size() >= 1
}

double mz_detection_probability(double ds_plus, double ds_minus,
                                const InterferometerSpec& itf) {
  itf.validate();
  double s = std::sin(4.0 * kPi * (ds_plus - ds_minus) / itf.wavelength +
                      itf.phi0);
  return itf.alpha * s * s + itf.beta;
}

MZWeights mz_weights(double T2, double R2, double eta_plus, double eta_minus) {
  if (T2 < 0.0 || T2 > 1.0 || R2 < 0.0 || R2 > 1.0)
    throw DomainError("splitter coefficients must lie in [0, 1]");
  if (eta_plus < 0.0 || eta_plus > 1.0 || eta_minus < 0.0 || eta_minus > 1.0)
    throw DomainError("detection efficiencies must lie in [0, 1]");
  MZWeights w;
  w.w_plus = T2 * eta_plus;
  w.w_minus = R2 * eta_minus;
  w.w_zero = 1.0 - (w.w_plus + w.w_minus);
  if (w.w_zero < 0.0) {
    if (w.w_zero < -1e-12)
      throw DomainError("branch weights exceed 1 (negative remainder)");
    w.w_zero = 0.0;
  }
  return w;
}

MZCurves mz_curves(const MZScenario& sc) {
  sc.validate();
  MZCurves out;
  for (RateCurve* c : {&out.dc_plus, &out.zero, &out.dc_minus}) {
    c->grid = sc.grid;
    c->unit = CurveUnit::kRate;
    c->values.assign(static_cast<std::size_t>(sc.grid.n_bins), 0.0);
  }
  double n_in = sc.interferometer.input_rate;
  double p00 = mz_detection_probability(0.0, 0.0, sc.interferometer);
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    std::size_t j = static_cast<std::size_t>(i);
    out.dc_plus.values[j] =
        n_in * mz_detection_probability(sc.ds_plus(t), 0.0, sc.interferometer);
    out.zero.values[j] = n_in * p00;
    out.dc_minus.values[j] =
        n_in * mz_detection_probability(0.0, sc.ds_minus(t),
                                        sc.interferometer);
  }
  return out;
}

MZHazards make_mz_hazards(const MZScenario& sc) {
  sc.validate();
  std::vector<double> knots;
  auto add_knots = [&knots](const RateTable& tab) {
    knots.insert(knots.end(), tab.t.begin(), tab.t.end());
  };
  if (sc.arm_plus.model.kind == ModelKind::kCustomTable)
    add_knots(sc.arm_plus.model.table);
  if (sc.arm_minus.model.kind == ModelKind::kCustomTable)
    add_knots(sc.arm_minus.model.table);
  if (!sc.gamma_ps.empty()) add_knots(sc.gamma_ps);
  MZScenario frozen = sc;
  int segments = 2 * sc.grid.n_bins;
  return MZHazards{
      CumulativeHazard([frozen](double t) { return frozen.gamma_plus(t); },
                       sc.grid.horizon, knots, 1e-8, segments),
      CumulativeHazard([frozen](double t) { return frozen.gamma_minus(t); },
                       sc.grid.horizon, knots, 1e-8, segments),
      CumulativeHazard([frozen](double t) { return frozen.gamma_ps_rate(t); },
                       sc.grid.horizon, knots, 1e-8, segments)};
}

RateCurve mz_mean_to_dc_plus(const MZScenario& sc) {
  return mz_mean_to_dc_plus(sc, make_mz_hazards(sc));
}

RateCurve mz_mean_to_dc_plus(const MZScenario& sc, const MZHazards& hazards) {
  sc.validate();
  MZWeights w = mz_weights(sc.splitter_T2, sc.splitter_R2, sc.eta_plus,
                           sc.eta_minus);
  if (!(w.w_plus > 0.0))
    throw DomainError(
        "conditional dc+ mean requires a nonzero '+' branch weight");
  RateCurve out;
  out.grid = sc.grid;
  out.unit = CurveUnit::kRate;
  out.values.assign(static_cast<std::size_t>(sc.grid.n_bins), 0.0);
  double n_in = sc.interferometer.input_rate;
  double n0 = n_in * mz_detection_probability(0.0, 0.0, sc.interferometer);
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    double hp = hazards.plus.eval(t);
    double hm = hazards.minus.eval(t);
    double hps = hazards.ps.eval(t);
    double e3 = std::exp(-(hp + hm + hps));
    double e_pm = std::exp(-(hp + hm));
    double e_pps = std::exp(-(hp + hps));
    double dcp = n_in * mz_detection_probability(sc.ds_plus(t), 0.0,
                                                 sc.interferometer);
    double dcm = n_in * mz_detection_probability(0.0, sc.ds_minus(t),
                                                 sc.interferometer);
    double bracket_minus =
        e3 + (1.0 - std::exp(-hps)) * e_pm / (w.w_plus + w.w_minus);
    double bracket_zero =
        e3 + (1.0 - std::exp(-hm)) * e_pps / (w.w_zero + w.w_plus);
    out.values[static_cast<std::size_t>(i)] =
        dcp - w.w_minus * (dcp - dcm) * bracket_minus -
        w.w_zero * (dcp - n0) * bracket_zero;
  }
  return out;
}

double mz_support_probability(const MZScenario& sc, const MZWeights& w,
                              const SupportSet& support, double t) {
  double total = 0.0, acc = 0.0;
  for (int b = 0; b < 3; ++b) {
    if (!support.has[static_cast<std::size_t>(b)]) continue;
    double wb = w.of(b);
    total += wb;
    double p;
    if (b == 0)
      p = mz_detection_probability(sc.ds_plus(t), 0.0, sc.interferometer);
    else if (b == 1)
      p = mz_detection_probability(0.0, sc.ds_minus(t), sc.interferometer);
    else
      p = mz_detection_probability(0.0, 0.0, sc.interferometer);
    acc += wb * p;
  }
  if (total <= 0.0)
    throw DomainError("support has zero total Born weight");
  return acc / total;
}

MZTables make_mz_tables(const MZScenario& sc) {
  sc.validate();
  return MZTables{sc,
                  mz_weights(sc.splitter_T2, sc.splitter_R2, sc.eta_plus,
                             sc.eta_minus),
                  make_mz_hazards(sc)};
}

MZTrajectory mz_simulate_trajectory(const MZTables& tables,
                                    const McOptions& options, Rng& rng,
                                    std::uint64_t seed_id) {
  const MZScenario& sc = tables.sc;
  const MZWeights& w = tables.w;
  MZTrajectory traj;
  traj.seed_id = seed_id;
  traj.bin_counts.assign(static_cast<std::size_t>(sc.grid.n_bins), 0);

  const CumulativeHazard* hazard_of[3] = {&tables.hazards.plus,
                                          &tables.hazards.minus,
                                          &tables.hazards.ps};
  // Reduction phase: active channels race with exact inverse-CDF waiting
  // times measured in global time from the last event.
  SupportSet support;
  double t0 = 0.0;
  while (!support.singleton()) {
    double best_time = 0.0;
    int best_channel = -1;
    for (int ch = 0; ch < 3; ++ch) {
      if (!channel_active(support, ch)) continue;
      double target = hazard_of[ch]->eval(t0) -
                      std::log(rng.u01_positive());
      auto fire = hazard_of[ch]->inverse(target);
      if (!fire) continue;
      double when = std::max(*fire, t0);
      if (best_channel < 0 || when < best_time) {
        best_time = when;
        best_channel = ch;
      }
    }
    if (best_channel < 0) break;  // nothing fires before the horizon

    const auto& a = kDistinguished[static_cast<std::size_t>(best_channel)];
    SupportSet inside = support, outside = support;
    double w_inside = 0.0, w_outside = 0.0;
    for (int b = 0; b < 3; ++b) {
      std::size_t j = static_cast<std::size_t>(b);
      if (!support.has[j]) continue;
      if (a[j]) {
        outside.has[j] = false;
        w_inside += w.of(b);
      } else {
        inside.has[j] = false;
        w_outside += w.of(b);
      }
    }
    MZReductionEvent ev;
    ev.time = best_time;
    ev.channel = static_cast<MZChannel>(best_channel);
    ev.before = support;
    double u = rng.u01();
    support = u * (w_inside + w_outside) < w_inside ? inside : outside;
    ev.after = support;
    traj.reductions.push_back(ev);
    t0 = best_time;
  }
  traj.final_support = support;
  if (support.singleton()) traj.final_branch = support.sole_branch();

  // Detection phase, mirroring the single-interferometer stream.
  double n_in = sc.interferometer.input_rate;
  if (n_in <= 0.0) return traj;
  double dt = sc.grid.dt();
  double t = 0.0;
  std::int64_t k = 0;
  std::size_t next_event = 0;
  SupportSet current;  // full support before the first reduction
  while (true) {
    if (options.emission == EmissionMode::kPoisson) {
      t += -std::log(rng.u01_positive()) / n_in;
    } else {
      t = static_cast<double>(++k) / n_in;
    }
    if (t >= sc.grid.horizon) break;
    while (next_event < traj.reductions.size() &&
           traj.reductions[next_event].time <= t) {
      current = traj.reductions[next_event].after;
      ++next_event;
    }
    double accept_u = rng.u01();
    double p = mz_support_probability(sc, w, current, t);
    if (accept_u < p) {
      int bin = static_cast<int>(t / dt);
      if (bin >= sc.grid.n_bins) bin = sc.grid.n_bins - 1;
      ++traj.bin_counts[static_cast<std::size_t>(bin)];
    }
  }
  return traj;
}

MZTrajectory mz_simulate_trajectory(const MZScenario& sc, Rng& rng) {
  MZTables tables = make_mz_tables(sc);
  return mz_simulate_trajectory(tables, McOptions{}, rng);
}

MZEnsembleSummary mz_run_ensemble(const MZScenario& sc, std::int64_t n,
                                  const SeedPolicy& policy,
                                  const McOptions& options) {
  if (n < 1) throw DomainError("ensemble size must be >= 1");
  MZTables tables = make_mz_tables(sc);
  std::size_t bins = static_cast<std::size_t>(sc.grid.n_bins);

  std::vector<BlockAccumulator> blocks;
  blocks.reserve(kAccumulationBlocks);
  for (int b = 0; b < kAccumulationBlocks; ++b) blocks.emplace_back(bins);

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
        MZTrajectory traj = mz_simulate_trajectory(
            tables, options, rng, static_cast<std::uint64_t>(i));
        if (!traj.final_branch) {
          acc.unresolved.add(traj.bin_counts);
        } else if (*traj.final_branch == 0) {
          acc.plus.add(traj.bin_counts);
        } else if (*traj.final_branch == 1) {
          acc.minus.add(traj.bin_counts);
        } else {
          acc.zero.add(traj.bin_counts);
        }
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

  GroupAccumulator plus(bins), minus(bins), zero(bins), unresolved(bins),
      all(bins);
  MZEnsembleSummary summary;
  for (BlockAccumulator& acc : blocks) {
    plus.merge(acc.plus);
    minus.merge(acc.minus);
    zero.merge(acc.zero);
    unresolved.merge(acc.unresolved);
    if (options.keep_trajectories)
      summary.trajectories.insert(
          summary.trajectories.end(),
          std::make_move_iterator(acc.trajectories.begin()),
          std::make_move_iterator(acc.trajectories.end()));
  }
  all.merge(plus);
  all.merge(minus);
  all.merge(zero);
  all.merge(unresolved);

  summary.n_trajectories = n;
  summary.branch_counts = {plus.n, minus.n, zero.n};
  summary.n_unresolved = unresolved.n;
  summary.mean_to_dc_plus = group_curve(sc.grid, plus);
  summary.mean_all = group_curve(sc.grid, all);
  return summary;
}

}  // namespace collapsim
