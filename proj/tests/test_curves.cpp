#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <doctest.h>

#include "collapsim/curves.hpp"
#include "collapsim/errors.hpp"

using namespace collapsim;

namespace {

ExperimentScenario bench_scenario(double series_resistance_ohm) {
  ExperimentScenario sc;
  sc.photodiode = {143.0, 12.0, 100.0, 0.85};
  sc.piezo = {600e-12, 4200.0, 1.5e-3, 0.2e-3, 7600.0};
  sc.mirror = {3.5e-3, 2e-3, 2650.0};
  sc.interferometer = {632.8e-9, 1.0, 0.0, kPi / 4.0, 1e7, 0.4};
  sc.drive = {series_resistance_ohm};
  sc.grid = {12e-6, 200};
  return sc;
}

ExperimentScenario zero_rate_scenario() {
  ExperimentScenario sc = bench_scenario(1000.0);
  sc.model.kind = ModelKind::kCustomTable;
  sc.model.table.t = {0.0};
  sc.model.table.gamma = {0.0};
  return sc;
}

}  // namespace

TEST_CASE("zero curve is the constant rest rate") {
  ExperimentScenario sc = bench_scenario(1000.0);
  RateCurve z = curve_zero(sc);
  REQUIRE(z.values.size() == 200);
  for (double v : z.values) CHECK(v == doctest::Approx(5e6).epsilon(1e-13));
  sc.interferometer.alpha = 0.0;
  sc.interferometer.beta = 0.0;
  RateCurve dark = curve_zero(sc);
  for (double v : dark.values) CHECK(v == 0.0);
}

TEST_CASE("dark-count curve starts at the zero curve and plateaus") {
  ExperimentScenario sc = bench_scenario(1000.0);
  RateCurve dc = curve_dark_count(sc);
  RateCurve z = curve_zero(sc);
  // First bin center sits dt/2 after t=0; the curve is still within the
  // early quadratic rise of the fringe term there.
  CHECK(dc.values.front() ==
        doctest::Approx(z.values.front()).epsilon(5e-3));
  CHECK(dc.values.front() > z.values.front());
  // Late bins approach the plateau rate.
  CHECK(dc.values.back() ==
        doctest::Approx(5.712467644818934e6).epsilon(1e-4));
  // Zero actuation coefficient collapses the curve onto the zero curve.
  ExperimentScenario still = sc;
  still.piezo.d33 = 0.0;
  RateCurve dc0 = curve_dark_count(still);
  for (std::size_t i = 0; i < dc0.values.size(); ++i)
    CHECK(dc0.values[i] == doctest::Approx(z.values[i]).epsilon(1e-14));
}

TEST_CASE("superposed curve is the branch-weight mixture") {
  ExperimentScenario sc = bench_scenario(1000.0);
  BranchWeights w = sc.weights();
  RateCurve sup = curve_superposed(sc, w);
  RateCurve dc = curve_dark_count(sc);
  RateCurve z = curve_zero(sc);
  for (std::size_t i = 0; i < sup.values.size(); ++i) {
    double mix = w.w_mov * dc.values[i] + w.w_not_mov * z.values[i];
    CHECK(std::abs(sup.values[i] - mix) <= 1e-12 * mix);
  }
  RateCurve all_dc = curve_superposed(sc, BranchWeights{1.0, 0.0});
  for (std::size_t i = 0; i < all_dc.values.size(); ++i)
    CHECK(all_dc.values[i] == doctest::Approx(dc.values[i]).epsilon(1e-14));
  RateCurve all_zero = curve_superposed(sc, BranchWeights{0.0, 1.0});
  for (std::size_t i = 0; i < all_zero.values.size(); ++i)
    CHECK(all_zero.values[i] == doctest::Approx(z.values[i]).epsilon(1e-14));
}

TEST_CASE("unconditional mean equals the superposed curve when no collapse") {
  ExperimentScenario sc = zero_rate_scenario();
  BranchWeights w = sc.weights();
  RateCurve mean = curve_mean_all(sc, w);
  RateCurve sup = curve_superposed(sc, w);
  for (std::size_t i = 0; i < mean.values.size(); ++i)
    CHECK(mean.values[i] == doctest::Approx(sup.values[i]).epsilon(1e-12));
}

TEST_CASE("unconditional mean reaches the collapsed mixture at late times") {
  ExperimentScenario sc = bench_scenario(1000.0);
  sc.grid = {60e-6, 200};  // far beyond both tau_p and the collapse epoch
  BranchWeights w = sc.weights();
  RateCurve mean = curve_mean_all(sc, w);
  double n_dc_inf = 5.712467644818934e6;
  double expected = w.w_mov * n_dc_inf + w.w_not_mov * 5e6;
  CHECK(mean.values.back() == doctest::Approx(expected).epsilon(1e-4));
}

TEST_CASE("conditional mean limits and bracketing") {
  ExperimentScenario sc = bench_scenario(1000.0);
  BranchWeights w = sc.weights();
  CumulativeHazard h = make_hazard(sc);
  RateCurve mean = curve_mean_to_dc(sc, w, h);
  RateCurve dc = curve_dark_count(sc);
  RateCurve sup = curve_superposed(sc, w);
  RateCurve z = curve_zero(sc);
  // Early bins sit near the zero curve (dc(0) = zero value), late bins on
  // the dark-count curve once the superposition has fully decayed.
  CHECK(mean.values.front() == doctest::Approx(z.values.front()).epsilon(5e-3));
  CHECK(mean.values.back() == doctest::Approx(dc.values.back()).epsilon(1e-9));
  for (std::size_t i = 0; i < mean.values.size(); ++i) {
    double lo = std::min(sup.values[i], dc.values[i]);
    double hi = std::max(sup.values[i], dc.values[i]);
    CHECK(mean.values[i] >= lo * (1.0 - 1e-12));
    CHECK(mean.values[i] <= hi * (1.0 + 1e-12));
  }
  // Without collapse the conditional mean falls back to the superposed curve.
  ExperimentScenario frozen = zero_rate_scenario();
  RateCurve mean0 = curve_mean_to_dc(frozen, w);
  RateCurve sup0 = curve_superposed(frozen, w);
  for (std::size_t i = 0; i < mean0.values.size(); ++i)
    CHECK(mean0.values[i] == doctest::Approx(sup0.values[i]).epsilon(1e-12));
  CHECK_THROWS_AS(curve_mean_to_dc(sc, BranchWeights{0.0, 1.0}, h),
                  DomainError);
}

TEST_CASE("probability curve is the rate curve divided by the input rate") {
  ExperimentScenario sc = bench_scenario(1000.0);
  BranchWeights w = sc.weights();
  CumulativeHazard h = make_hazard(sc);
  RateCurve prob = prob_to_mov_curve(sc, w, h);
  RateCurve mean = curve_mean_to_dc(sc, w, h);
  CHECK(prob.unit == CurveUnit::kProbability);
  for (std::size_t i = 0; i < prob.values.size(); ++i) {
    CHECK(prob.values[i] ==
          doctest::Approx(mean.values[i] / 1e7).epsilon(1e-12));
    CHECK(prob.values[i] >= 0.0);
    CHECK(prob.values[i] <= 1.0);
  }
  CHECK(prob.values.front() == doctest::Approx(0.5).epsilon(5e-3));
}

TEST_CASE("percent deviation arithmetic and error paths") {
  ExperimentScenario sc = bench_scenario(1000.0);
  RateCurve z = curve_zero(sc);
  RateCurve same = percent_deviation(z, z);
  for (double v : same.values) CHECK(v == 0.0);
  RateCurve scaled = z;
  for (double& v : scaled.values) v *= 1.1;
  RateCurve ten = percent_deviation(scaled, z);
  for (double v : ten.values) CHECK(v == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(ten.unit == CurveUnit::kDimensionless);

  // Deviation of the conditional mean from the zero curve: starts at 0,
  // asymptotes to the plateau contrast.
  BranchWeights w = sc.weights();
  sc.grid = {60e-6, 200};
  RateCurve dev = percent_deviation(curve_mean_to_dc(sc, w), curve_zero(sc));
  CHECK(std::abs(dev.values.front()) < 8e-3);
  CHECK(dev.values.back() ==
        doctest::Approx((5.712467644818934e6 - 5e6) / 5e6).epsilon(1e-4));

  RateCurve zero_ref = z;
  zero_ref.values[3] = 0.0;
  CHECK_THROWS_AS(percent_deviation(z, zero_ref), DomainError);
  RateCurve other = z;
  other.grid.n_bins = 100;
  other.values.resize(100);
  CHECK_THROWS_AS(percent_deviation(other, z), DomainError);
}

TEST_CASE("curve bundle shares one quadrature and stays consistent") {
  ExperimentScenario sc = bench_scenario(25000.0);
  sc.grid = {264e-6, 200};
  BranchWeights w = sc.weights();
  CurveSet set = make_curve_set(sc, w);
  REQUIRE(set.mean_to_dc.values.size() == 200);
  // Mixture identity bin-wise to 1e-12.
  for (std::size_t i = 0; i < set.superposed.values.size(); ++i) {
    double mix = w.w_mov * set.dark_count.values[i] +
                 w.w_not_mov * set.zero.values[i];
    CHECK(std::abs(set.superposed.values[i] - mix) <= 1e-12 * mix);
  }
  // Survival is a nonincreasing probability; displacement is nondecreasing.
  for (std::size_t i = 1; i < set.survival.values.size(); ++i) {
    CHECK(set.survival.values[i] <= set.survival.values[i - 1] + 1e-14);
    CHECK(set.displacement.values[i] >=
          set.displacement.values[i - 1] - 1e-20);
  }
  CHECK(set.survival.values.front() <= 1.0);
  CHECK(set.survival.values.front() > 0.0);
  // All rate curves nonnegative.
  for (const RateCurve* c :
       {&set.zero, &set.dark_count, &set.superposed, &set.mean_all,
        &set.mean_to_dc}) {
    for (double v : c->values) CHECK(v >= 0.0);
  }
}
