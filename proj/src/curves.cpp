#include "collapsim/curves.hpp"

#include <cmath>

#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

RateCurve blank_curve(const ExperimentScenario& sc, CurveUnit unit) {
  sc.validate();
  RateCurve c;
  c.grid = sc.grid;
  c.values.assign(static_cast<std::size_t>(sc.grid.n_bins), 0.0);
  c.unit = unit;
  return c;
}

}  // namespace

RateCurve curve_zero(const ExperimentScenario& sc) {
  RateCurve c = blank_curve(sc, CurveUnit::kRate);
  double v = sc.interferometer.input_rate * sc.rest_detection_probability();
  for (double& x : c.values) x = v;
  return c;
}

RateCurve curve_dark_count(const ExperimentScenario& sc) {
  RateCurve c = blank_curve(sc, CurveUnit::kRate);
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    c.values[static_cast<std::size_t>(i)] =
        sc.interferometer.input_rate *
        sc.moving_detection_probability(sc.grid.center(i));
  }
  return c;
}

RateCurve curve_superposed(const ExperimentScenario& sc,
                           const BranchWeights& w) {
  RateCurve c = blank_curve(sc, CurveUnit::kRate);
  double p0 = sc.rest_detection_probability();
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double p_dc = sc.moving_detection_probability(sc.grid.center(i));
    c.values[static_cast<std::size_t>(i)] =
        sc.interferometer.input_rate * (w.w_mov * p_dc + w.w_not_mov * p0);
  }
  return c;
}

RateCurve curve_mean_all(const ExperimentScenario& sc, const BranchWeights& w) {
  return curve_mean_all(sc, w, make_hazard(sc));
}

RateCurve curve_mean_all(const ExperimentScenario& sc, const BranchWeights& w,
                         const CumulativeHazard& hazard) {
  RateCurve c = blank_curve(sc, CurveUnit::kRate);
  double n0 = sc.interferometer.input_rate * sc.rest_detection_probability();
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    double n_dc = sc.interferometer.input_rate *
                  sc.moving_detection_probability(t);
    double n_sup = w.w_mov * n_dc + w.w_not_mov * n0;
    double p_sup = hazard.survival(t);
    double p_collapsed = 1.0 - p_sup;
    c.values[static_cast<std::size_t>(i)] =
        p_sup * n_sup +
        p_collapsed * (w.w_mov * n_dc + w.w_not_mov * n0);
  }
  return c;
}

RateCurve curve_mean_to_dc(const ExperimentScenario& sc,
                           const BranchWeights& w) {
  return curve_mean_to_dc(sc, w, make_hazard(sc));
}

RateCurve curve_mean_to_dc(const ExperimentScenario& sc,
                           const BranchWeights& w,
                           const CumulativeHazard& hazard) {
  if (!(w.w_mov > 0.0))
    throw DomainError(
        "conditional dark-count mean requires a nonzero moving-branch weight");
  RateCurve c = blank_curve(sc, CurveUnit::kRate);
  double n0 = sc.interferometer.input_rate * sc.rest_detection_probability();
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    double n_dc = sc.interferometer.input_rate *
                  sc.moving_detection_probability(t);
    double p_sup = hazard.survival(t);
    double direct = n_dc - w.w_not_mov * (n_dc - n0) * p_sup;
    // Equivalent mixture form; kept as a live cross-check of the quadrature
    // and the algebra.
    double n_sup = w.w_mov * n_dc + w.w_not_mov * n0;
    double mixture = p_sup * n_sup + (1.0 - p_sup) * n_dc;
    double scale = std::abs(direct) + std::abs(mixture) + 1e-300;
    if (std::abs(direct - mixture) > 1e-10 * scale)
      throw NumericalError(
          "conditional-mean consistency check failed: the two algebraic "
          "forms disagree beyond 1e-10 relative");
    c.values[static_cast<std::size_t>(i)] = direct;
  }
  return c;
}

RateCurve prob_to_mov_curve(const ExperimentScenario& sc,
                            const BranchWeights& w) {
  return prob_to_mov_curve(sc, w, make_hazard(sc));
}

RateCurve prob_to_mov_curve(const ExperimentScenario& sc,
                            const BranchWeights& w,
                            const CumulativeHazard& hazard) {
  RateCurve c = blank_curve(sc, CurveUnit::kProbability);
  double p0 = sc.rest_detection_probability();
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    double p_dc = sc.moving_detection_probability(t);
    c.values[static_cast<std::size_t>(i)] =
        p_dc - w.w_not_mov * (p_dc - p0) * hazard.survival(t);
  }
  return c;
}

RateCurve percent_deviation(const RateCurve& curve,
                            const RateCurve& reference) {
  if (!curve.grid.same_as(reference.grid))
    throw DomainError("percent deviation requires curves on the same grid");
  if (curve.values.size() != reference.values.size())
    throw DomainError("percent deviation requires equal-length curves");
  RateCurve out;
  out.grid = curve.grid;
  out.unit = CurveUnit::kDimensionless;
  out.values.resize(curve.values.size());
  for (std::size_t i = 0; i < curve.values.size(); ++i) {
    if (reference.values[i] == 0.0)
      throw DomainError("percent deviation reference has a zero bin");
    out.values[i] =
        (curve.values[i] - reference.values[i]) / reference.values[i];
  }
  return out;
}

CurveSet make_curve_set(const ExperimentScenario& sc, const BranchWeights& w) {
  return make_curve_set(sc, w, make_hazard(sc));
}

CurveSet make_curve_set(const ExperimentScenario& sc, const BranchWeights& w,
                        const CumulativeHazard& hazard) {
  CurveSet set;
  set.grid = sc.grid;
  set.zero = curve_zero(sc);
  set.dark_count = curve_dark_count(sc);
  set.superposed = curve_superposed(sc, w);
  set.mean_all = curve_mean_all(sc, w, hazard);
  set.mean_to_dc = curve_mean_to_dc(sc, w, hazard);
  set.prob_to_mov = prob_to_mov_curve(sc, w, hazard);
  set.survival.grid = sc.grid;
  set.survival.unit = CurveUnit::kDimensionless;
  set.displacement.grid = sc.grid;
  set.displacement.unit = CurveUnit::kDimensionless;
  set.survival.values.resize(static_cast<std::size_t>(sc.grid.n_bins));
  set.displacement.values.resize(static_cast<std::size_t>(sc.grid.n_bins));
  for (int i = 0; i < sc.grid.n_bins; ++i) {
    double t = sc.grid.center(i);
    set.survival.values[static_cast<std::size_t>(i)] = hazard.survival(t);
    set.displacement.values[static_cast<std::size_t>(i)] = sc.displacement(t);
  }
  return set;
}

}  // namespace collapsim
