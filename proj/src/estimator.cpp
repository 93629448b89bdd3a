#include "collapsim/estimator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "collapsim/curves.hpp"
#include "collapsim/errors.hpp"
#include "collapsim/rng.hpp"

namespace collapsim {

namespace {

constexpr double kCollapseFloor = 1e-12;
constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

// Weighted pool-adjacent-violators projection onto nondecreasing sequences.
std::vector<double> isotonic_nondecreasing(const std::vector<double>& y,
                                           const std::vector<double>& w) {
  std::size_t n = y.size();
  std::vector<double> level(n), weight(n);
  std::vector<std::size_t> count(n);
  std::size_t blocks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    level[blocks] = y[i];
    weight[blocks] = w[i];
    count[blocks] = 1;
    ++blocks;
    while (blocks > 1 && level[blocks - 2] > level[blocks - 1]) {
      double tw = weight[blocks - 2] + weight[blocks - 1];
      level[blocks - 2] =
          (level[blocks - 2] * weight[blocks - 2] +
           level[blocks - 1] * weight[blocks - 1]) /
          tw;
      weight[blocks - 2] = tw;
      count[blocks - 2] += count[blocks - 1];
      --blocks;
    }
  }
  std::vector<double> out;
  out.reserve(n);
  for (std::size_t b = 0; b < blocks; ++b)
    out.insert(out.end(), count[b], level[b]);
  return out;
}

struct References {
  std::vector<double> dc;
  std::vector<double> zero;
};

// Shared inversion core: mean curve + per-bin references.  When frozen_mask
// is given (bootstrap replicates), bin selection is inherited from the
// full-sample estimate instead of being re-derived: re-selecting per
// replicate conditions the edge bins on fluctuating high and biases the
// percentile bands low.  Hard validity (y out of range) still degrades a
// frozen-unmasked bin.
GammaEstimate invert_core(const RateCurve& mean, const References& ref,
                          double w_not_mov, double min_contrast,
                          const std::vector<std::uint8_t>* frozen_mask =
                              nullptr) {
  mean.grid.validate();
  if (!(w_not_mov > 0.0 && w_not_mov <= 1.0))
    throw DomainError("w_not_mov must lie in (0, 1]");
  std::size_t n = mean.values.size();
  if (ref.dc.size() != n || ref.zero.size() != n)
    throw DomainError("inversion curves must share one grid");
  bool have_stderr = mean.stderr_values.size() == n;

  double max_contrast = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    max_contrast = std::max(max_contrast, std::abs(ref.dc[i] - ref.zero[i]));
  double threshold = min_contrast < 0.0 ? 0.05 * max_contrast : min_contrast;

  GammaEstimate est;
  est.grid = mean.grid;
  est.raw_cumulative.assign(n, kNan);
  est.mask.assign(n, 0);
  est.sigma.assign(n, 0.0);

  for (std::size_t i = 0; i < n; ++i) {
    double contrast = ref.dc[i] - ref.zero[i];
    if (frozen_mask != nullptr) {
      if ((*frozen_mask)[i] != 0) {
        est.mask[i] = (*frozen_mask)[i];
        continue;
      }
      if (contrast == 0.0) {
        est.mask[i] |= kMaskLowContrast;
        continue;
      }
    } else {
      if (std::abs(contrast) < threshold || contrast == 0.0) {
        est.mask[i] |= kMaskLowContrast;
        continue;
      }
      // Conservative masking: once the surviving fringe signal drops below
      // six standard errors, -ln y is noise-dominated (its linearized error
      // model needs sigma_y/y small) and the bin carries no usable
      // information.
      double measured_check = ref.dc[i] - mean.values[i];
      if (have_stderr && mean.stderr_values[i] > 0.0 &&
          std::abs(measured_check) < 6.0 * mean.stderr_values[i]) {
        est.mask[i] |= kMaskLowContrast;
        continue;
      }
    }
    double measured = ref.dc[i] - mean.values[i];
    double y = measured / (w_not_mov * contrast);
    double sigma_y = 0.0;
    if (have_stderr)
      sigma_y = mean.stderr_values[i] / (w_not_mov * std::abs(contrast));
    double eps_stat = have_stderr && y > 0.0
                          ? 3.0 * sigma_y / y
                          : 1e-9;
    if (y <= kCollapseFloor) {
      est.mask[i] |= kMaskCollapsed;
      if (y <= 0.0) est.mask[i] |= kMaskOutOfRange;
      continue;
    }
    if (y > 1.0 + eps_stat) {
      est.mask[i] |= kMaskOutOfRange;
      continue;
    }
    est.raw_cumulative[i] = y > 1.0 ? 0.0 : -std::log(y);
    est.sigma[i] = sigma_y / y;  // delta method for -ln y
  }

  // Collect unmasked bins, project, and fill the full grid.
  std::vector<std::size_t> idx;
  std::vector<double> vals, weights;
  for (std::size_t i = 0; i < n; ++i)
    if (est.mask[i] == 0) {
      idx.push_back(i);
      vals.push_back(est.raw_cumulative[i]);
      double s = est.sigma[i];
      weights.push_back(s > 0.0 ? 1.0 / (s * s) : 1.0);
    }
  if (idx.empty())
    throw DomainError(
        "estimation failure: every bin is masked (no usable contrast or "
        "signal range)");
  bool any_sigma = false;
  for (std::size_t i : idx) any_sigma = any_sigma || est.sigma[i] > 0.0;
  if (!any_sigma) std::fill(weights.begin(), weights.end(), 1.0);
  std::vector<double> iso = isotonic_nondecreasing(vals, weights);

  est.cumulative.assign(n, 0.0);
  for (std::size_t k = 0; k < idx.size(); ++k)
    est.cumulative[idx[k]] = iso[k];
  // Interpolate the masked bins: anchor H(0) = 0 at t = 0, hold flat after
  // the last unmasked bin.
  for (std::size_t i = 0; i < n; ++i) {
    if (est.mask[i] == 0) continue;
    // Previous unmasked (or the t=0 anchor).
    double t0 = 0.0, h0 = 0.0;
    for (std::size_t k = idx.size(); k-- > 0;)
      if (idx[k] < i) {
        t0 = est.grid.center(static_cast<int>(idx[k]));
        h0 = iso[k];
        break;
      }
    // Next unmasked.
    bool have_next = false;
    double t1 = 0.0, h1 = 0.0;
    for (std::size_t k = 0; k < idx.size(); ++k)
      if (idx[k] > i) {
        t1 = est.grid.center(static_cast<int>(idx[k]));
        h1 = iso[k];
        have_next = true;
        break;
      }
    double t = est.grid.center(static_cast<int>(i));
    est.cumulative[i] =
        have_next ? h0 + (h1 - h0) * (t - t0) / (t1 - t0) : h0;
  }
  return est;
}

}  // namespace

int GammaEstimate::n_unmasked() const {
  int n = 0;
  for (std::uint8_t m : mask)
    if (m == 0) ++n;
  return n;
}

GammaEstimate invert_mean_to_dc(const RateCurve& mean_to_dc,
                                const RateCurve& dc, const RateCurve& zero,
                                double w_not_mov, double min_contrast) {
  if (!mean_to_dc.grid.same_as(dc.grid) || !mean_to_dc.grid.same_as(zero.grid))
    throw DomainError("inversion curves must share one grid");
  References ref{dc.values, zero.values};
  return invert_core(mean_to_dc, ref, w_not_mov, min_contrast);
}

GammaEstimate invert_p_to_mov(const RateCurve& p_curve,
                              const RateCurve& ds_curve,
                              const InterferometerSpec& itf, double w_not_mov,
                              double min_contrast) {
  if (p_curve.unit != CurveUnit::kProbability)
    throw DomainError("invert_p_to_mov expects a probability-tagged curve");
  if (!p_curve.grid.same_as(ds_curve.grid))
    throw DomainError("inversion curves must share one grid");
  itf.validate();
  References ref;
  double p0 = detection_probability(0.0, itf);
  ref.dc.reserve(ds_curve.values.size());
  for (double ds : ds_curve.values)
    ref.dc.push_back(detection_probability(ds, itf));
  ref.zero.assign(ds_curve.values.size(), p0);
  return invert_core(p_curve, ref, w_not_mov, min_contrast);
}

GammaEstimate smooth_rate(const GammaEstimate& estimate, int window_bins) {
  if (window_bins < 3 || window_bins % 2 == 0)
    throw DomainError("smoothing window must be odd and at least 3 bins");
  int n = static_cast<int>(estimate.cumulative.size());
  if (n == 0) throw DomainError("estimate has no bins");
  if (window_bins > estimate.n_unmasked())
    throw DomainError("smoothing window exceeds the unmasked span");

  GammaEstimate out = estimate;
  out.rate.assign(static_cast<std::size_t>(n), 0.0);
  int half = window_bins / 2;
  int clipped = 0;
  for (int i = 0; i < n; ++i) {
    int lo = std::max(0, i - half);
    int hi = std::min(n - 1, i + half);
    // Regression over unmasked bins in the window; fall back to all bins
    // (interpolated cumulative) if fewer than two are unmasked locally.
    // Centered sums keep the normal equations well conditioned when the
    // window span is small compared to the absolute time.
    std::vector<double> ts, hs;
    for (int pass = 0; pass < 2; ++pass) {
      ts.clear();
      hs.clear();
      for (int j = lo; j <= hi; ++j) {
        if (pass == 0 && estimate.mask[static_cast<std::size_t>(j)] != 0)
          continue;
        ts.push_back(estimate.grid.center(j));
        hs.push_back(estimate.cumulative[static_cast<std::size_t>(j)]);
      }
      if (ts.size() >= 2) break;
    }
    double t_bar = 0.0, h_bar = 0.0;
    for (std::size_t j = 0; j < ts.size(); ++j) {
      t_bar += ts[j];
      h_bar += hs[j];
    }
    t_bar /= static_cast<double>(ts.size());
    h_bar /= static_cast<double>(ts.size());
    double det = 0.0, cov = 0.0;
    for (std::size_t j = 0; j < ts.size(); ++j) {
      det += (ts[j] - t_bar) * (ts[j] - t_bar);
      cov += (ts[j] - t_bar) * (hs[j] - h_bar);
    }
    double slope = det != 0.0 ? cov / det : 0.0;
    if (slope < 0.0) {
      slope = 0.0;
      ++clipped;
    }
    out.rate[static_cast<std::size_t>(i)] = slope;
  }
  out.clip_fraction = static_cast<double>(clipped) / n;
  return out;
}

GammaEstimate bootstrap_bands(const std::vector<Trajectory>& trajectories,
                              const ExperimentScenario& sc,
                              const BranchWeights& w,
                              const BootstrapOptions& options) {
  sc.validate();
  if (options.n_resamples < 100)
    throw DomainError("bootstrap requires at least 100 resamples");
  std::size_t n_traj = trajectories.size();
  if (n_traj == 0) throw DomainError("bootstrap requires trajectories");
  std::size_t n_mov = 0;
  for (const Trajectory& tr : trajectories)
    if (tr.outcome == Outcome::kMov) ++n_mov;
  if (n_mov < 10)
    throw DomainError(
        "bootstrap requires at least 10 mov-outcome trajectories");

  RateCurve dc = curve_dark_count(sc);
  RateCurve zero = curve_zero(sc);
  References refs{dc.values, zero.values};
  std::size_t n_bins = dc.values.size();
  double dt = sc.grid.dt();

  // Freeze the contrast threshold across replicates.
  double max_contrast = 0.0;
  for (std::size_t i = 0; i < n_bins; ++i)
    max_contrast = std::max(max_contrast, std::abs(dc.values[i] - zero.values[i]));
  double threshold = options.min_contrast < 0.0 ? 0.05 * max_contrast
                                                : options.min_contrast;

  // Conditional mean over the mov-outcome members of one index multiset.
  auto conditional_mean = [&](const std::vector<std::size_t>& picks,
                              RateCurve& out) -> bool {
    std::vector<double> sum(n_bins, 0.0), sum2(n_bins, 0.0);
    std::int64_t m = 0;
    for (std::size_t p : picks) {
      const Trajectory& tr = trajectories[p];
      if (tr.outcome != Outcome::kMov) continue;
      ++m;
      for (std::size_t i = 0; i < n_bins; ++i) {
        double r = tr.bin_counts[i] / dt;
        sum[i] += r;
        sum2[i] += r * r;
      }
    }
    if (m < 2) return false;
    out.grid = sc.grid;
    out.unit = CurveUnit::kRate;
    out.values.assign(n_bins, 0.0);
    out.stderr_values.assign(n_bins, 0.0);
    for (std::size_t i = 0; i < n_bins; ++i) {
      double mean = sum[i] / m;
      out.values[i] = mean;
      double var = std::max(0.0, sum2[i] / m - mean * mean);
      out.stderr_values[i] = std::sqrt(var / m);
    }
    return true;
  };

  // Full-sample estimate.
  std::vector<std::size_t> all(n_traj);
  for (std::size_t i = 0; i < n_traj; ++i) all[i] = i;
  RateCurve mean_full;
  conditional_mean(all, mean_full);
  GammaEstimate est =
      invert_mean_to_dc(mean_full, dc, zero, w.w_not_mov, threshold);

  // Replicates.
  std::vector<std::vector<double>> replicate_cum;
  replicate_cum.reserve(static_cast<std::size_t>(options.n_resamples));
  std::vector<std::size_t> picks(n_traj);
  for (int b = 0; b < options.n_resamples; ++b) {
    Rng rng(options.resample_seed, static_cast<std::uint64_t>(b));
    for (std::size_t i = 0; i < n_traj; ++i)
      picks[i] = static_cast<std::size_t>(rng.below(n_traj));
    RateCurve mean_b;
    if (!conditional_mean(picks, mean_b)) continue;
    GammaEstimate rep;
    try {
      rep = invert_core(mean_b, refs, w.w_not_mov, threshold, &est.mask);
    } catch (const DomainError&) {
      continue;  // all bins masked in this replicate
    }
    replicate_cum.push_back(rep.cumulative);
  }
  if (replicate_cum.size() <
      static_cast<std::size_t>(options.n_resamples) * 9 / 10)
    throw NumericalError(
        "bootstrap failed: more than 10 percent of replicates had no usable "
        "mov-outcome sample");

  std::size_t nb = replicate_cum.size();
  std::vector<double> column(nb);
  auto percentile = [&](double q) {
    double pos = q * static_cast<double>(nb - 1);
    std::size_t k = static_cast<std::size_t>(pos);
    double frac = pos - static_cast<double>(k);
    double lo = column[k];
    double hi = column[std::min(k + 1, nb - 1)];
    return lo + frac * (hi - lo);
  };
  est.ci_lower.emplace(n_bins, 0.0);
  est.ci_upper.emplace(n_bins, 0.0);
  for (std::size_t i = 0; i < n_bins; ++i) {
    for (std::size_t r = 0; r < nb; ++r) column[r] = replicate_cum[r][i];
    std::sort(column.begin(), column.end());
    (*est.ci_lower)[i] = percentile(0.025);
    (*est.ci_upper)[i] = percentile(0.975);
  }
  return est;
}

double constant_rate_fit(const GammaEstimate& estimate) {
  bool have_sigma = false;
  for (std::size_t i = 0; i < estimate.mask.size(); ++i) {
    if (estimate.mask[i] == 0 && estimate.sigma[i] > 0.0) {
      have_sigma = true;
      break;
    }
  }
  double num = 0.0, den = 0.0;
  int used = 0;
  for (std::size_t i = 0; i < estimate.mask.size(); ++i) {
    if (estimate.mask[i] != 0) continue;
    double t = estimate.grid.center(static_cast<int>(i));
    double weight = have_sigma && estimate.sigma[i] > 0.0
                        ? 1.0 / (estimate.sigma[i] * estimate.sigma[i])
                        : 1.0;
    num += weight * t * estimate.raw_cumulative[i];
    den += weight * t * t;
    ++used;
  }
  if (used == 0 || den == 0.0) {
    throw DomainError("constant_rate_fit: no unmasked bins to fit");
  }
  return num / den;
}

ModelGoodness model_goodness(const GammaEstimate& estimate,
                             const CollapseModelConfig& candidate,
                             const ExperimentScenario& sc) {
  ExperimentScenario cand = sc;
  cand.model = candidate;
  cand.validate();
  std::vector<double> knots;
  if (candidate.kind == ModelKind::kCustomTable) knots = candidate.table.t;
  CumulativeHazard hazard([&cand](double t) { return gamma_of_time(t, cand); },
                          cand.grid.horizon, knots);
  ModelGoodness g;
  bool any_sigma = false;
  for (std::size_t i = 0; i < estimate.sigma.size(); ++i)
    any_sigma = any_sigma || (estimate.mask[i] == 0 && estimate.sigma[i] > 0.0);
  for (std::size_t i = 0; i < estimate.raw_cumulative.size(); ++i) {
    if (estimate.mask[i] != 0) continue;
    if (any_sigma && !(estimate.sigma[i] > 0.0)) continue;
    double predicted = hazard.eval(estimate.grid.center(static_cast<int>(i)));
    double res = estimate.raw_cumulative[i] - predicted;
    double weight = any_sigma ? 1.0 / (estimate.sigma[i] * estimate.sigma[i])
                              : 1.0;
    g.chi_squared += weight * res * res;
    ++g.n_bins;
  }
  g.reduced = g.n_bins > 0 ? g.chi_squared / g.n_bins : 0.0;
  return g;
}

}  // namespace collapsim
