#pragma once

#include "collapsim/scenario.hpp"

namespace collapsim {

// Closed-form expected detection-rate curves for a single-interferometer
// scenario. All curves are sampled at bin centers; operations that need the
// cumulative hazard accept a precomputed one so every curve shares a single
// quadrature (overloads without it build one internally).

// Constant zero curve: N_in * p_ph(0).
RateCurve curve_zero(const ExperimentScenario& sc);

// Dark-count curve: N_in * p_ph(ds(t)).
RateCurve curve_dark_count(const ExperimentScenario& sc);

// Superposed-state curve: N_in * (w_mov p_ph(ds(t)) + w_not_mov p_ph(0)).
RateCurve curve_superposed(const ExperimentScenario& sc,
                           const BranchWeights& w);

// Unconditional ensemble mean:
//   P_sup * N_sup + P_mov * N_dc + P_not_mov * N_0,
// with P_mov = w_mov (1 - P_sup), P_not_mov = w_not_mov (1 - P_sup).
RateCurve curve_mean_all(const ExperimentScenario& sc, const BranchWeights& w);
RateCurve curve_mean_all(const ExperimentScenario& sc, const BranchWeights& w,
                         const CumulativeHazard& hazard);

// Conditional mean over trajectories that end on the dark-count curve:
//   N_dc(t) - w_not_mov (N_dc(t) - N_0) exp(-H(t)).
// Internally cross-checked bin-wise (1e-10 relative) against the equivalent
// form P_sup N_sup + (1 - P_sup) N_dc; a mismatch raises NumericalError.
// Rejects w_mov = 0.
RateCurve curve_mean_to_dc(const ExperimentScenario& sc,
                           const BranchWeights& w);
RateCurve curve_mean_to_dc(const ExperimentScenario& sc, const BranchWeights& w,
                           const CumulativeHazard& hazard);

// Probability-tagged single-probe-photon variant (the rate curve above
// divided by N_in):
//   p_ph(ds(t)) - w_not_mov (p_ph(ds(t)) - p_ph(0)) exp(-H(t)).
RateCurve prob_to_mov_curve(const ExperimentScenario& sc,
                            const BranchWeights& w);
RateCurve prob_to_mov_curve(const ExperimentScenario& sc,
                            const BranchWeights& w,
                            const CumulativeHazard& hazard);

// Bin-wise (value - reference) / reference, dimensionless-tagged. Grids must
// match and every reference value must be nonzero.
RateCurve percent_deviation(const RateCurve& curve, const RateCurve& reference);

// All analytic curves for one scenario computed from one shared hazard
// quadrature, plus the survival probability and displacement series.
struct CurveSet {
  TimeGrid grid{};
  RateCurve zero;
  RateCurve dark_count;
  RateCurve superposed;
  RateCurve mean_all;
  RateCurve mean_to_dc;
  RateCurve prob_to_mov;
  RateCurve survival;      // dimensionless
  RateCurve displacement;  // meters, stored with the dimensionless tag
};
CurveSet make_curve_set(const ExperimentScenario& sc, const BranchWeights& w);
CurveSet make_curve_set(const ExperimentScenario& sc, const BranchWeights& w,
                        const CumulativeHazard& hazard);

}  // namespace collapsim
