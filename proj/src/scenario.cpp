#include "collapsim/scenario.hpp"

#include <algorithm>
#include <cmath>

#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

constexpr double kHazardAbsFloor = 1e-18;
constexpr int kMaxDoublings = 12;

// Composite Simpson with m (even) subintervals.
double simpson(const std::function<double(double)>& f, double a, double b,
               int m) {
  double h = (b - a) / m;
  double s = f(a) + f(b);
  for (int i = 1; i < m; ++i) s += f(a + i * h) * ((i & 1) ? 4.0 : 2.0);
  return s * h / 3.0;
}

int even_at_least(double x, int floor_value) {
  int m = std::max(floor_value, static_cast<int>(std::ceil(x)));
  return m + (m & 1);
}

}  // namespace

void TimeGrid::validate() const {
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    throw DomainError("grid.horizon must be finite and > 0");
  if (n_bins < 2) throw DomainError("grid.n_bins must be >= 2");
}

std::vector<double> TimeGrid::centers() const {
  validate();
  std::vector<double> out(static_cast<std::size_t>(n_bins));
  for (int i = 0; i < n_bins; ++i) out[static_cast<std::size_t>(i)] = center(i);
  return out;
}

void ExperimentScenario::validate() const {
  constants.validate();
  photodiode.validate();
  piezo.validate();
  mirror.validate();
  interferometer.validate();
  drive.validate();
  model.validate();
  grid.validate();
}

double ExperimentScenario::capacitance() const {
  return piezo_capacitance(piezo, constants);
}

double ExperimentScenario::time_constant() const {
  return drive_time_constant(drive, photodiode, capacitance());
}

double ExperimentScenario::displacement(double t) const {
  return mirror_displacement(t, photodiode, piezo, drive, constants);
}

double ExperimentScenario::plateau_displacement() const {
  return piezo.d33 * photodiode.excess_bias;
}

BranchWeights ExperimentScenario::weights() const {
  return branch_weights(interferometer.coupling_transmission,
                        photodiode.quantum_efficiency);
}

double ExperimentScenario::moving_detection_probability(double t) const {
  return detection_probability(displacement(t), interferometer);
}

double ExperimentScenario::rest_detection_probability() const {
  return detection_probability(0.0, interferometer);
}

double gamma_of_time(double t, const ExperimentScenario& sc) {
  if (t < 0.0) throw DomainError("time must be >= 0");
  if (sc.model.kind == ModelKind::kCustomTable)
    return model_decay_rate(0.0, t, 0.0, sc.model, sc.constants);
  double k = dp_quadratic_coefficient(sc.piezo, sc.mirror, sc.constants);
  return model_decay_rate(sc.displacement(t), t, k, sc.model, sc.constants);
}

CumulativeHazard::CumulativeHazard(std::function<double(double)> gamma,
                                   double horizon,
                                   const std::vector<double>& extra_knots,
                                   double rel_tol, int base_segments)
    : gamma_(std::move(gamma)), horizon_(horizon) {
  if (!(horizon_ > 0.0) || !std::isfinite(horizon_))
    throw DomainError("hazard horizon must be finite and > 0");
  if (base_segments < 1) base_segments = 1;
  if (!(rel_tol > 0.0)) throw DomainError("hazard rel_tol must be > 0");

  nodes_.reserve(static_cast<std::size_t>(base_segments) + extra_knots.size() +
                 2);
  for (int i = 0; i <= base_segments; ++i)
    nodes_.push_back(horizon_ * i / base_segments);
  for (double k : extra_knots)
    if (k > 0.0 && k < horizon_) nodes_.push_back(k);
  std::sort(nodes_.begin(), nodes_.end());
  // Drop near-duplicate nodes so segments keep a usable width.
  double min_gap = horizon_ * 1e-12;
  std::size_t w = 1;
  for (std::size_t i = 1; i < nodes_.size(); ++i) {
    if (nodes_[i] - nodes_[w - 1] > min_gap) nodes_[w++] = nodes_[i];
  }
  nodes_.resize(w);
  nodes_.back() = horizon_;

  std::size_t n_seg = nodes_.size() - 1;
  std::vector<double> seg(n_seg);
  seg_m_.assign(n_seg, 2);

  // First pass at the coarsest density, just to set the absolute scale.
  double rough_total = 0.0;
  for (std::size_t i = 0; i < n_seg; ++i) {
    seg[i] = simpson(gamma_, nodes_[i], nodes_[i + 1], 2);
    rough_total += seg[i];
  }
  double tol_abs = rel_tol * rough_total + kHazardAbsFloor;

  for (std::size_t i = 0; i < n_seg; ++i) {
    int m = 2;
    double prev = seg[i];
    bool converged = false;
    for (int d = 0; d < kMaxDoublings; ++d) {
      m *= 2;
      double next = simpson(gamma_, nodes_[i], nodes_[i + 1], m);
      double change = std::abs(next - prev);
      prev = next;
      if (change <= tol_abs) {
        converged = true;
        break;
      }
    }
    if (!converged)
      throw NumericalError(
          "cumulative hazard integration failed to converge; the rate varies "
          "too sharply for the requested tolerance");
    seg[i] = prev;
    seg_m_[i] = m;
    if (seg[i] < 0.0) seg[i] = 0.0;  // guards round-off on a rate >= 0
  }

  cumulative_.assign(nodes_.size(), 0.0);
  for (std::size_t i = 0; i < n_seg; ++i)
    cumulative_[i + 1] = cumulative_[i] + seg[i];
}

double CumulativeHazard::eval(double t) const {
  if (t < 0.0) throw DomainError("time must be >= 0");
  if (t >= horizon_) return cumulative_.back();
  if (t <= nodes_.front()) return 0.0;
  auto it = std::upper_bound(nodes_.begin(), nodes_.end(), t);
  std::size_t hi = static_cast<std::size_t>(it - nodes_.begin());
  std::size_t lo = hi - 1;
  double a = nodes_[lo];
  if (t <= a) return cumulative_[lo];
  double width = nodes_[hi] - a;
  int m = even_at_least(seg_m_[lo] * (t - a) / width, 2);
  return cumulative_[lo] + simpson(gamma_, a, t, m);
}

double CumulativeHazard::survival(double t) const { return std::exp(-eval(t)); }

std::optional<double> CumulativeHazard::inverse(double target) const {
  if (target < 0.0) throw DomainError("hazard target must be >= 0");
  if (target == 0.0) return 0.0;
  if (target > total()) return std::nullopt;
  auto it = std::lower_bound(cumulative_.begin(), cumulative_.end(), target);
  std::size_t hi_idx = static_cast<std::size_t>(it - cumulative_.begin());
  if (hi_idx == 0) return nodes_.front();
  double lo = nodes_[hi_idx - 1];
  double hi = nodes_[hi_idx];
  // Leftmost t with H(t) >= target.
  for (int iter = 0; iter < 200 && hi - lo > horizon_ * 1e-15; ++iter) {
    double mid = 0.5 * (lo + hi);
    if (eval(mid) >= target)
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

CumulativeHazard make_hazard(const ExperimentScenario& sc) {
  sc.validate();
  std::vector<double> knots;
  if (sc.model.kind == ModelKind::kCustomTable) knots = sc.model.table.t;
  ExperimentScenario frozen = sc;
  return CumulativeHazard(
      [frozen](double t) { return gamma_of_time(t, frozen); }, sc.grid.horizon,
      knots, 1e-8, 2 * sc.grid.n_bins);
}

double survival_probability(double t, const CumulativeHazard& hazard) {
  return hazard.survival(t);
}

OccupationProbabilities occupation_probabilities(double t,
                                                 const CumulativeHazard& h) {
  OccupationProbabilities p;
  p.superposed = h.survival(t);
  p.collapsed = 1.0 - p.superposed;
  return p;
}

double default_horizon(const ExperimentScenario& sc) {
  if (sc.model.kind == ModelKind::kCustomTable && !sc.model.table.t.empty() &&
      sc.model.table.t.back() > 0.0) {
    return sc.model.table.t.back();
  }
  double tau = sc.time_constant();
  double fallback = 8.0 * tau;
  double target = -std::log(1e-3);
  double window = fallback;
  for (int iter = 0; iter < 40; ++iter) {
    CumulativeHazard h([&sc](double t) { return gamma_of_time(t, sc); },
                       window, {}, 1e-6, 256);
    if (h.total() >= target) {
      auto t999 = h.inverse(target);
      if (t999) return std::max(fallback, 4.0 * *t999);
      break;
    }
    window *= 2.0;
  }
  return fallback;
}

}  // namespace collapsim
