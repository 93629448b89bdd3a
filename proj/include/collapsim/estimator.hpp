#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "collapsim/mc.hpp"
#include "collapsim/scenario.hpp"

namespace collapsim {

// Recovery of the cumulative decay H(t) = ∫₀ᵗ Γ and the rate Γ(t) from
// measured or simulated detection curves, by inverting the conditional-mean
// closed form. The inversion is model-free; parametric models enter only in
// model_goodness.

// Per-bin mask bits (0 = valid bin).
constexpr std::uint8_t kMaskLowContrast = 1;  // reference contrast too small
constexpr std::uint8_t kMaskOutOfRange = 2;   // y outside (0, 1 + eps_stat]
constexpr std::uint8_t kMaskCollapsed = 4;    // y at the numerical floor

struct GammaEstimate {
  TimeGrid grid{};
  // Monotone (isotonically projected) cumulative on every bin; masked bins
  // are filled by linear interpolation in time between unmasked neighbors,
  // anchored at H(0) = 0 and extended flat past the last unmasked bin.
  std::vector<double> cumulative;
  // Pre-projection cumulative; NaN on masked bins. Used for goodness tests
  // so the projection cannot hide model misfit.
  std::vector<double> raw_cumulative;
  // Smoothed derivative of `cumulative`; filled by smooth_rate, else empty.
  std::vector<double> rate;
  std::vector<std::uint8_t> mask;
  // Propagated one-sigma uncertainty of the per-bin cumulative (zero for
  // noiseless analytic inputs).
  std::vector<double> sigma;
  std::optional<std::vector<double>> ci_lower;  // bootstrap 2.5 percentile
  std::optional<std::vector<double>> ci_upper;  // bootstrap 97.5 percentile
  // Fraction of bins whose regression slope was clipped up to zero.
  double clip_fraction = 0.0;
  int n_unmasked() const;
};

// Inverts  mean(t) = dc(t) - w_not_mov (dc(t) - zero(t)) e^{-H(t)}  bin by
// bin: y = (dc - mean) / (w_not_mov (dc - zero)), H = -ln y. Bins whose
// reference contrast |dc - zero| falls below min_contrast are masked, as are
// bins with y outside (0, 1 + eps_stat] where eps_stat is three relative
// standard errors of y (1e-9 for noiseless input); y within the tolerance
// band above 1 clamps to H = 0, and y at or below the 1e-12 floor is masked
// as fully collapsed. A negative min_contrast selects the default threshold,
// 5 percent of the maximum reference contrast over the horizon. The raw
// cumulative is then projected to the nearest nondecreasing sequence
// (variance-weighted pool-adjacent-violators).
// Throws DomainError if the grids differ, w_not_mov is outside (0, 1], or
// every bin ends up masked.
GammaEstimate invert_mean_to_dc(const RateCurve& mean_to_dc,
                                const RateCurve& dc, const RateCurve& zero,
                                double w_not_mov, double min_contrast = -1.0);

// Single-probe-photon variant: the measured curve is a detection
// probability and the references are p_ph(ds(t)) and p_ph(0) computed from
// the displacement curve and the interferometer working point.
GammaEstimate invert_p_to_mov(const RateCurve& p_curve,
                              const RateCurve& ds_curve,
                              const InterferometerSpec& itf, double w_not_mov,
                              double min_contrast = -1.0);

// Local linear-regression derivative of the monotone cumulative over an odd
// window of window_bins bins (truncated at the grid edges), restricted to
// unmasked bins where at least two fall inside the window. Negative slopes
// clip to zero; the clipped fraction is recorded. Returns a copy of the
// estimate with `rate` and `clip_fraction` filled.
// Throws DomainError if window_bins is even or < 3, or exceeds the number
// of unmasked bins.
GammaEstimate smooth_rate(const GammaEstimate& estimate, int window_bins);

struct BootstrapOptions {
  int n_resamples = 200;          // >= 100
  std::uint64_t resample_seed = 0;
  double min_contrast = -1.0;     // negative = automatic threshold
};

// Percentile bootstrap over trajectories: resamples the trajectory set with
// replacement (substream-deterministic in the replicate index), recomputes
// the conditional mean over mov-outcome trajectories, reruns the inversion,
// and attaches per-bin 2.5/97.5 percentile bands of the monotone cumulative
// to the full-sample estimate.
// Throws DomainError when fewer than 10 trajectories have the mov outcome
// or n_resamples < 100; NumericalError if more than 10 percent of the
// replicates are unusable (no mov outcomes after resampling).
GammaEstimate bootstrap_bands(const std::vector<Trajectory>& trajectories,
                              const ExperimentScenario& sc,
                              const BranchWeights& w,
                              const BootstrapOptions& options = {});

// Weighted least-squares fit of a constant rate through the origin,
// H(t) = Γ t, over the unmasked raw cumulative (weights 1/sigma² when the
// estimate carries uncertainties, unweighted otherwise). Returns Γ in 1/s.
// Throws DomainError when no unmasked bin exists.
double constant_rate_fit(const GammaEstimate& estimate);

struct ModelGoodness {
  double chi_squared = 0.0;
  int n_bins = 0;       // unmasked bins entering the statistic
  double reduced = 0.0; // chi_squared / n_bins (0 when n_bins == 0)
};

// Variance-weighted squared residuals between the estimate's raw cumulative
// and the candidate model's cumulative hazard on the same grid and scenario
// hardware. Bins with zero propagated variance are compared unweighted, and
// only when no bin carries a variance estimate.
ModelGoodness model_goodness(const GammaEstimate& estimate,
                             const CollapseModelConfig& candidate,
                             const ExperimentScenario& sc);

}  // namespace collapsim
