#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <doctest.h>

#include "collapsim/curves.hpp"
#include "collapsim/errors.hpp"
#include "collapsim/tagg.hpp"

using namespace collapsim;

namespace {

ArmSpec bench_arm(double series_resistance_ohm) {
  ArmSpec a;
  a.photodiode = {143.0, 12.0, 100.0, 0.85};
  a.piezo = {600e-12, 4200.0, 1.5e-3, 0.2e-3, 7600.0};
  a.mirror = {3.5e-3, 2e-3, 2650.0};
  a.drive = {series_resistance_ohm};
  return a;
}

// Symmetric splitter, both arms driven by the fast (1 kOhm) circuit.
MZScenario bench_mz() {
  MZScenario sc;
  sc.interferometer = {632.8e-9, 1.0, 0.0, kPi / 4.0, 1e7, 0.0};
  sc.splitter_T2 = 0.5;
  sc.splitter_R2 = 0.5;
  sc.eta_plus = 0.85;
  sc.eta_minus = 0.85;
  sc.arm_plus = bench_arm(1000.0);
  sc.arm_minus = bench_arm(1000.0);
  sc.grid = {12e-6, 200};
  return sc;
}

// Arms with zero actuation and table-driven decay rates: pure reduction-race
// scenarios with no mirror motion and (optionally) no photon stream.
MZScenario race_mz(double gamma_plus, double gamma_minus, double gamma_ps,
                   double horizon) {
  MZScenario sc = bench_mz();
  sc.interferometer.input_rate = 0.0;
  for (ArmSpec* arm : {&sc.arm_plus, &sc.arm_minus}) {
    arm->piezo.d33 = 0.0;
    arm->model.kind = ModelKind::kCustomTable;
  }
  sc.arm_plus.model.table = {{0.0}, {gamma_plus}};
  sc.arm_minus.model.table = {{0.0}, {gamma_minus}};
  if (gamma_ps > 0.0) sc.gamma_ps = {{0.0}, {gamma_ps}};
  sc.grid = {horizon, 10};
  return sc;
}

double fraction_within_3_sigma(const RateCurve& empirical,
                               const RateCurve& reference) {
  REQUIRE(empirical.values.size() == reference.values.size());
  REQUIRE(empirical.stderr_values.size() == empirical.values.size());
  std::size_t ok = 0;
  for (std::size_t i = 0; i < empirical.values.size(); ++i) {
    double diff = std::abs(empirical.values[i] - reference.values[i]);
    double se = empirical.stderr_values[i];
    if (se > 0.0 ? diff <= 3.0 * se
                 : diff <= 1e-9 * (std::abs(reference.values[i]) + 1.0))
      ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(empirical.values.size());
}

}  // namespace

TEST_CASE("detection probability follows the doubled-phase fringe") {
  InterferometerSpec itf{633e-9, 1.0, 0.0, 0.0, 0.0, 0.0};
  // Quarter period of the doubled phase: 4 pi ds / lambda = pi / 4.
  CHECK(mz_detection_probability(633e-9 / 16.0, 0.0, itf) ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(mz_detection_probability(0.0, -633e-9 / 16.0, itf) ==
        doctest::Approx(0.5).epsilon(1e-12));
  // Only the arm difference matters: common displacement cancels.
  InterferometerSpec tilted{633e-9, 0.8, 0.1, 0.7, 0.0, 0.0};
  for (double d : {0.0, 1e-9, 3.7e-9}) {
    CHECK(mz_detection_probability(d, d, tilted) ==
          doctest::Approx(mz_detection_probability(0.0, 0.0, tilted))
              .epsilon(1e-12));
  }
  // Period is lambda / 2 in either arm displacement.
  CHECK(mz_detection_probability(2.3e-9 + 633e-9 / 2.0, 0.0, tilted) ==
        doctest::Approx(mz_detection_probability(2.3e-9, 0.0, tilted))
            .epsilon(1e-10));
  // The two arms shift the phase in opposite directions.
  CHECK(mz_detection_probability(0.0, 1.9e-9, tilted) ==
        doctest::Approx(mz_detection_probability(-1.9e-9, 0.0, tilted))
            .epsilon(1e-12));
}

TEST_CASE("branch weights multiply splitter and efficiency factors") {
  MZWeights w = mz_weights(0.5, 0.5, 0.85, 0.85);
  CHECK(w.w_plus == doctest::Approx(0.425).epsilon(1e-15));
  CHECK(w.w_minus == doctest::Approx(0.425).epsilon(1e-15));
  CHECK(w.w_zero == doctest::Approx(0.15).epsilon(1e-12));
  CHECK(w.w_plus + w.w_minus + w.w_zero == 1.0);

  MZWeights asym = mz_weights(0.4, 0.5, 0.85, 0.8);
  CHECK(asym.w_plus == doctest::Approx(0.34).epsilon(1e-15));
  CHECK(asym.w_minus == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(asym.w_plus + asym.w_minus + asym.w_zero == 1.0);
  CHECK(asym.of(0) == asym.w_plus);
  CHECK(asym.of(1) == asym.w_minus);
  CHECK(asym.of(2) == asym.w_zero);

  CHECK_THROWS_AS(mz_weights(0.7, 0.7, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(mz_weights(-0.1, 0.5, 0.5, 0.5), DomainError);
  CHECK_THROWS_AS(mz_weights(0.5, 0.5, 1.2, 0.5), DomainError);
}

TEST_CASE("scenario validation rejects inconsistent splitters") {
  MZScenario sc = bench_mz();
  CHECK_NOTHROW(sc.validate());
  sc.splitter_R2 = 0.6;  // T2 + R2 > 1
  CHECK_THROWS_AS(sc.validate(), DomainError);
  sc = bench_mz();
  sc.eta_plus = 1.3;
  CHECK_THROWS_AS(sc.validate(), DomainError);
  sc = bench_mz();
  sc.gamma_ps = {{0.0, 1e-6}, {1e5, -1.0}};
  CHECK_THROWS_AS(sc.validate(), DomainError);
}

TEST_CASE("arm accessors match the single-interferometer building blocks") {
  MZScenario sc = bench_mz();
  PhysicalConstants consts;
  double k = dp_quadratic_coefficient(sc.arm_plus.piezo, sc.arm_plus.mirror,
                                      consts);
  for (double t : {1e-7, 5e-7, 2e-6, 9e-6}) {
    double ds = mirror_displacement(t, sc.arm_plus.photodiode,
                                    sc.arm_plus.piezo, sc.arm_plus.drive,
                                    consts);
    CHECK(sc.ds_plus(t) == doctest::Approx(ds).epsilon(1e-15));
    CHECK(sc.ds_minus(t) == doctest::Approx(ds).epsilon(1e-15));
    CHECK(sc.gamma_plus(t) ==
          doctest::Approx(decay_rate(k * ds * ds, 1.0, consts))
              .epsilon(1e-13));
  }
  sc.inverted = true;
  CHECK(sc.ds_minus(3e-6) == doctest::Approx(-sc.ds_plus(3e-6))
                                  .epsilon(1e-15));
  // The decay rate depends on the displacement magnitude only.
  CHECK(sc.gamma_minus(3e-6) == doctest::Approx(sc.gamma_plus(3e-6))
                                    .epsilon(1e-13));
  CHECK(sc.gamma_ps_rate(3e-6) == 0.0);
  sc.gamma_ps = {{0.0, 1e-6}, {2e5, 4e5}};
  CHECK(sc.gamma_ps_rate(5e-7) == doctest::Approx(3e5).epsilon(1e-12));
}

TEST_CASE("baseline curves evaluate the pure-branch rates at bin centers") {
  MZScenario sc = bench_mz();
  MZCurves curves = mz_curves(sc);
  REQUIRE(curves.dc_plus.values.size() == 200);
  double n_in = sc.interferometer.input_rate;
  double p00 = mz_detection_probability(0.0, 0.0, sc.interferometer);
  for (int i : {0, 57, 199}) {
    double t = sc.grid.center(i);
    std::size_t j = static_cast<std::size_t>(i);
    CHECK(curves.dc_plus.values[j] ==
          doctest::Approx(n_in * mz_detection_probability(
                                     sc.ds_plus(t), 0.0, sc.interferometer))
              .epsilon(1e-14));
    CHECK(curves.zero.values[j] ==
          doctest::Approx(n_in * p00).epsilon(1e-14));
    CHECK(curves.dc_minus.values[j] ==
          doctest::Approx(n_in * mz_detection_probability(
                                     0.0, sc.ds_minus(t), sc.interferometer))
              .epsilon(1e-14));
  }
  // Inverted variant with identical arms: the two conditioned baselines
  // coincide because the fringe depends on ds_plus - ds_minus only through
  // a sign-symmetric pair of evaluations.
  sc.inverted = true;
  MZCurves inv = mz_curves(sc);
  for (std::size_t j = 0; j < inv.dc_plus.values.size(); ++j)
    CHECK(inv.dc_minus.values[j] ==
          doctest::Approx(inv.dc_plus.values[j]).epsilon(1e-12));
}

TEST_CASE("piecewise-linear supply table integrates exactly") {
  MZScenario sc = race_mz(0.0, 0.0, 0.0, 6e-5);
  sc.gamma_ps = {{0.0, 2e-5, 6e-5}, {5e5, 2e5, 3e5}};
  MZHazards hz = make_mz_hazards(sc);
  // Trapezoids: (5e5+2e5)/2 * 2e-5 + (2e5+3e5)/2 * 4e-5 = 7 + 10.
  CHECK(hz.ps.total() == doctest::Approx(17.0).epsilon(1e-12));
  CHECK(hz.ps.eval(2e-5) == doctest::Approx(7.0).epsilon(1e-12));
  CHECK(hz.plus.total() == 0.0);
  CHECK(hz.minus.total() == 0.0);
  // All three hazards share one node layout.
  CHECK(hz.plus.nodes() == hz.ps.nodes());
  CHECK(hz.minus.nodes() == hz.ps.nodes());
}

TEST_CASE("conditional dc+ mean reduces to the single-stream closed form") {
  // With a dark "-" port (R2 = 0) and no supply channel, the three-branch
  // closed form must collapse onto the two-branch one. The single-stream
  // scenario uses half the wavelength because its fringe phase advances at
  // half the rate for the same displacement.
  MZScenario mz = bench_mz();
  mz.splitter_T2 = 0.5;
  mz.splitter_R2 = 0.0;
  RateCurve three = mz_mean_to_dc_plus(mz);

  ExperimentScenario single;
  single.photodiode = mz.arm_plus.photodiode;
  single.piezo = mz.arm_plus.piezo;
  single.mirror = mz.arm_plus.mirror;
  single.drive = mz.arm_plus.drive;
  single.model = mz.arm_plus.model;
  single.interferometer = mz.interferometer;
  single.interferometer.wavelength = mz.interferometer.wavelength / 2.0;
  single.interferometer.coupling_transmission = mz.splitter_T2;
  single.grid = mz.grid;
  RateCurve two = curve_mean_to_dc(
      single, branch_weights(single.interferometer.coupling_transmission,
                             single.photodiode.quantum_efficiency));

  REQUIRE(three.values.size() == two.values.size());
  for (std::size_t j = 0; j < three.values.size(); ++j)
    CHECK(three.values[j] == doctest::Approx(two.values[j]).epsilon(1e-12));
}

TEST_CASE("conditional dc+ mean with only the + channel active") {
  MZScenario sc = bench_mz();
  sc.splitter_T2 = 0.4;
  sc.splitter_R2 = 0.3;
  sc.eta_plus = 0.85;
  sc.eta_minus = 0.8;
  sc.arm_minus.model.kind = ModelKind::kCustomTable;
  sc.arm_minus.model.table = {{0.0}, {0.0}};
  MZHazards hz = make_mz_hazards(sc);
  RateCurve full = mz_mean_to_dc_plus(sc, hz);
  MZWeights w = mz_weights(0.4, 0.3, 0.85, 0.8);
  double n_in = sc.interferometer.input_rate;
  double n0 = n_in * mz_detection_probability(0.0, 0.0, sc.interferometer);
  // Hand-reduced form: both brackets collapse to exp(-H_plus).
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    double dcp = n_in * mz_detection_probability(sc.ds_plus(t), 0.0,
                                                 sc.interferometer);
    double dcm = n_in * mz_detection_probability(0.0, sc.ds_minus(t),
                                                 sc.interferometer);
    double expect = dcp - (w.w_minus * (dcp - dcm) + w.w_zero * (dcp - n0)) *
                              std::exp(-hz.plus.eval(t));
    CHECK(full.values[static_cast<std::size_t>(i)] ==
          doctest::Approx(expect).epsilon(1e-10));
  }
}

TEST_CASE("conditional dc+ mean in the inverted variant") {
  MZScenario sc = bench_mz();
  sc.inverted = true;
  sc.gamma_ps = {{0.0}, {3e5}};
  MZHazards hz = make_mz_hazards(sc);
  RateCurve full = mz_mean_to_dc_plus(sc, hz);
  MZWeights w = mz_weights(0.5, 0.5, 0.85, 0.85);
  double n_in = sc.interferometer.input_rate;
  double n0 = n_in * mz_detection_probability(0.0, 0.0, sc.interferometer);
  // dc+ equals dc-, so only the zero-branch bracket survives.
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    double dcp = n_in * mz_detection_probability(sc.ds_plus(t), 0.0,
                                                 sc.interferometer);
    double hp = hz.plus.eval(t), hm = hz.minus.eval(t), hps = hz.ps.eval(t);
    double bracket = std::exp(-(hp + hm + hps)) +
                     (1.0 - std::exp(-hm)) * std::exp(-(hp + hps)) /
                         (w.w_zero + w.w_plus);
    double expect = dcp - w.w_zero * (dcp - n0) * bracket;
    CHECK(full.values[static_cast<std::size_t>(i)] ==
          doctest::Approx(expect).epsilon(1e-12));
  }
  // Short-time limit: before the drive rises the conditional mean sits at
  // the rest rate.
  MZScenario early = sc;
  early.grid = {1e-8, 2};
  CHECK(mz_mean_to_dc_plus(early).values[0] ==
        doctest::Approx(n0).epsilon(1e-3));
}

TEST_CASE("conditional dc+ mean is flat without actuation") {
  MZScenario sc = bench_mz();
  sc.arm_plus.piezo.d33 = 0.0;
  sc.arm_minus.piezo.d33 = 0.0;
  double n0 = sc.interferometer.input_rate *
              mz_detection_probability(0.0, 0.0, sc.interferometer);
  RateCurve flat = mz_mean_to_dc_plus(sc);
  for (double v : flat.values)
    CHECK(v == doctest::Approx(n0).epsilon(1e-14));
  // A dark "+" branch has no trajectories to condition on.
  sc = bench_mz();
  sc.splitter_T2 = 0.0;
  CHECK_THROWS_AS(mz_mean_to_dc_plus(sc), DomainError);
}

TEST_CASE("support mixture renormalizes the Born weights") {
  MZScenario sc = bench_mz();
  MZWeights w = mz_weights(0.5, 0.5, 0.85, 0.85);
  double t = 2e-6;
  double pp = mz_detection_probability(sc.ds_plus(t), 0.0, sc.interferometer);
  double pm = mz_detection_probability(0.0, sc.ds_minus(t), sc.interferometer);
  double p0 = mz_detection_probability(0.0, 0.0, sc.interferometer);

  SupportSet full;
  CHECK(mz_support_probability(sc, w, full, t) ==
        doctest::Approx(w.w_plus * pp + w.w_minus * pm + w.w_zero * p0)
            .epsilon(1e-14));
  SupportSet plus_zero{{true, false, true}};
  CHECK(mz_support_probability(sc, w, plus_zero, t) ==
        doctest::Approx((w.w_plus * pp + w.w_zero * p0) /
                        (w.w_plus + w.w_zero))
            .epsilon(1e-14));
  SupportSet only_minus{{false, true, false}};
  CHECK(mz_support_probability(sc, w, only_minus, t) ==
        doctest::Approx(pm).epsilon(1e-14));
  CHECK(only_minus.sole_branch() == 1);
  CHECK_THROWS_AS(full.sole_branch(), DomainError);
  SupportSet empty{{false, false, false}};
  CHECK_THROWS_AS(mz_support_probability(sc, w, empty, t), DomainError);
}

TEST_CASE("supply-only channel splits off the zero branch at Born frequency") {
  double gamma_ps = 1e5, horizon = 6e-5;
  MZScenario sc = race_mz(0.0, 0.0, gamma_ps, horizon);
  McOptions options;
  options.keep_trajectories = true;
  MZEnsembleSummary sum = mz_run_ensemble(sc, 50000, SeedPolicy{311}, options);

  double p_fire = 1.0 - std::exp(-gamma_ps * horizon);
  CHECK(sum.branch_counts[0] == 0);
  CHECK(sum.branch_counts[1] == 0);
  double freq_zero = static_cast<double>(sum.branch_counts[2]) / 50000.0;
  double expect_zero = 0.15 * p_fire;
  double sigma = std::sqrt(expect_zero * (1.0 - expect_zero) / 50000.0);
  CHECK(std::abs(freq_zero - expect_zero) <= 3.0 * sigma);
  CHECK(sum.n_unresolved + sum.branch_counts[2] == 50000);

  std::vector<double> firing_times;
  for (const MZTrajectory& traj : sum.trajectories) {
    REQUIRE(traj.reductions.size() <= 1);
    if (traj.reductions.empty()) {
      CHECK(traj.final_support.size() == 3);
      continue;
    }
    const MZReductionEvent& ev = traj.reductions.front();
    CHECK(ev.channel == MZChannel::kPowerSupply);
    CHECK(ev.before.size() == 3);
    bool kept_zero = ev.after == SupportSet{{false, false, true}};
    bool kept_pair = ev.after == SupportSet{{true, true, false}};
    CHECK((kept_zero || kept_pair));
    CHECK(traj.final_support == ev.after);
    firing_times.push_back(ev.time);
  }
  // Firing times follow the truncated exponential law.
  std::nth_element(firing_times.begin(),
                   firing_times.begin() + firing_times.size() / 2,
                   firing_times.end());
  double median = firing_times[firing_times.size() / 2];
  double expect_median = -std::log(1.0 - 0.5 * p_fire) / gamma_ps;
  CHECK(median == doctest::Approx(expect_median).epsilon(0.03));
}

TEST_CASE("full reduction race reproduces the Born branch frequencies") {
  MZScenario sc = race_mz(3e5, 2e5, 5e5, 6e-5);
  MZEnsembleSummary sum = mz_run_ensemble(sc, 100000, SeedPolicy{47});
  CHECK(sum.n_unresolved <= 10);
  double expect[3] = {0.425, 0.425, 0.15};
  for (int b = 0; b < 3; ++b) {
    double freq = static_cast<double>(
                      sum.branch_counts[static_cast<std::size_t>(b)]) /
                  100000.0;
    double sigma = std::sqrt(expect[b] * (1.0 - expect[b]) / 100000.0);
    CHECK(std::abs(freq - expect[b]) <= 3.0 * sigma);
  }
}

TEST_CASE("trajectory stream matches the closed-form conditional mean") {
  MZScenario sc = bench_mz();
  sc.gamma_ps = {{0.0}, {5e5}};
  MZEnsembleSummary sum = mz_run_ensemble(sc, 10000, SeedPolicy{2027});
  CHECK(sum.n_unresolved == 0);

  RateCurve closed = mz_mean_to_dc_plus(sc);
  CHECK(fraction_within_3_sigma(sum.mean_to_dc_plus, closed) >= 0.99);

  // Unconditionally, reductions are invisible: the ensemble mean equals the
  // Born mixture of the three pure-branch baselines at every time.
  MZCurves base = mz_curves(sc);
  MZWeights w = mz_weights(0.5, 0.5, 0.85, 0.85);
  RateCurve mixture = base.zero;
  for (std::size_t j = 0; j < mixture.values.size(); ++j)
    mixture.values[j] = w.w_plus * base.dc_plus.values[j] +
                        w.w_minus * base.dc_minus.values[j] +
                        w.w_zero * base.zero.values[j];
  CHECK(fraction_within_3_sigma(sum.mean_all, mixture) >= 0.99);

  // Branch frequencies stay Born-distributed in the full scenario.
  double expect[3] = {0.425, 0.425, 0.15};
  for (int b = 0; b < 3; ++b) {
    double freq = static_cast<double>(
                      sum.branch_counts[static_cast<std::size_t>(b)]) /
                  10000.0;
    double sigma = std::sqrt(expect[b] * (1.0 - expect[b]) / 10000.0);
    CHECK(std::abs(freq - expect[b]) <= 3.0 * sigma);
  }
}

TEST_CASE("ensembles are deterministic and thread-count independent") {
  MZScenario sc = bench_mz();
  sc.gamma_ps = {{0.0}, {5e5}};
  sc.interferometer.input_rate = 2e6;
  McOptions serial, parallel;
  serial.n_threads = 1;
  parallel.n_threads = 4;
  MZEnsembleSummary a = mz_run_ensemble(sc, 600, SeedPolicy{99}, serial);
  MZEnsembleSummary b = mz_run_ensemble(sc, 600, SeedPolicy{99}, parallel);
  CHECK(a.mean_all.values == b.mean_all.values);
  CHECK(a.mean_to_dc_plus.values == b.mean_to_dc_plus.values);
  CHECK(a.mean_to_dc_plus.stderr_values == b.mean_to_dc_plus.stderr_values);
  CHECK(a.branch_counts == b.branch_counts);

  MZEnsembleSummary c = mz_run_ensemble(sc, 600, SeedPolicy{100}, serial);
  CHECK(a.mean_all.values != c.mean_all.values);

  CHECK_THROWS_AS(mz_run_ensemble(sc, 0, SeedPolicy{1}), DomainError);

  // A single-trajectory ensemble reproduces the bare trajectory call.
  MZTables tables = make_mz_tables(sc);
  Rng rng(99, 0);
  MZTrajectory traj = mz_simulate_trajectory(tables, serial, rng, 0);
  McOptions keep = serial;
  keep.keep_trajectories = true;
  MZEnsembleSummary one = mz_run_ensemble(sc, 1, SeedPolicy{99}, keep);
  REQUIRE(one.trajectories.size() == 1);
  CHECK(one.trajectories[0].bin_counts == traj.bin_counts);
  CHECK(one.trajectories[0].reductions.size() == traj.reductions.size());
}
