#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "collapsim/physics.hpp"

namespace collapsim {

// Uniform time grid starting at t = 0 with n_bins bins of width dt =
// horizon / n_bins; bin centers are the reporting abscissae for curves and
// histograms.
struct TimeGrid {
  double horizon = 0.0;  // seconds, > 0
  int n_bins = 0;        // >= 2
  void validate() const;
  double dt() const { return horizon / n_bins; }
  double center(int i) const { return (i + 0.5) * dt(); }
  double edge(int i) const { return i * dt(); }
  std::vector<double> centers() const;
  bool same_as(const TimeGrid& other) const {
    return horizon == other.horizon && n_bins == other.n_bins;
  }
};

enum class CurveUnit { kRate, kProbability, kDimensionless };

// A sampled curve on a TimeGrid (values at bin centers). stderr_values is
// nonempty exactly for empirical (Monte Carlo) curves.
struct RateCurve {
  TimeGrid grid{};
  std::vector<double> values;
  std::vector<double> stderr_values;
  CurveUnit unit = CurveUnit::kRate;
};

// Full description of one single-interferometer experiment.
struct ExperimentScenario {
  PhysicalConstants constants{};
  PhotodiodeSpec photodiode{};
  PiezoSpec piezo{};
  MirrorSpec mirror{};
  InterferometerSpec interferometer{};
  DriveCircuitSpec drive{};
  CollapseModelConfig model{};
  TimeGrid grid{};
  void validate() const;

  double capacitance() const;        // C_p
  double time_constant() const;      // tau_p
  double displacement(double t) const;  // Δs(t)
  double plateau_displacement() const;  // d33 * V_E
  BranchWeights weights() const;  // from coupling_transmission and eta
  // p_ph at the moving-branch displacement Δs(t).
  double moving_detection_probability(double t) const;
  // p_ph at zero displacement (the non-moving branch working point).
  double rest_detection_probability() const;
};

// Collapse rate Γ(t) for the scenario's model kind:
//  - kSmeared:       Γ = k Δs(t)² / (gamma_factor ħ)
//  - kParameterFree: same with the sub-lattice enhancement factor applied
//  - kCustomTable:   interpolated from the user-supplied table
double gamma_of_time(double t, const ExperimentScenario& sc);

// Numerically integrated cumulative hazard H(t) = ∫₀ᵗ Γ(u) du with a
// monotone inverse. Nodes are fixed up front; each segment is refined by
// composite Simpson until the largest node change is below rel_tol of the
// total (doublings capped; NumericalError past the cap).
class CumulativeHazard {
 public:
  CumulativeHazard(std::function<double(double)> gamma, double horizon,
                   const std::vector<double>& extra_knots = {},
                   double rel_tol = 1e-8, int base_segments = 64);

  double horizon() const { return horizon_; }
  double total() const { return cumulative_.back(); }
  double eval(double t) const;                  // H(t), t in [0, horizon]
  double survival(double t) const;              // exp(-H(t))
  double rate(double t) const { return gamma_(t); }
  // Smallest t with H(t) = target, or nullopt if target > total().
  std::optional<double> inverse(double target) const;
  const std::vector<double>& nodes() const { return nodes_; }

 private:
  std::function<double(double)> gamma_;
  double horizon_ = 0.0;
  std::vector<double> nodes_;       // strictly increasing, nodes_[0] = 0
  std::vector<double> cumulative_;  // H at each node, cumulative_[0] = 0
  std::vector<int> seg_m_;          // converged Simpson density per segment
};

// Hazard for a scenario, with nodes on the grid's bin edges and centers plus
// any custom-table knots (so piecewise-linear tables integrate exactly).
CumulativeHazard make_hazard(const ExperimentScenario& sc);

double survival_probability(double t, const CumulativeHazard& hazard);

// (P_superposed, P_collapsed) at time t; the pair sums to 1.
struct OccupationProbabilities {
  double superposed = 1.0;
  double collapsed = 0.0;
};
OccupationProbabilities occupation_probabilities(double t,
                                                 const CumulativeHazard& h);

// Default reporting horizon: max(8 tau_p, 4 * t₉₉₉) where t₉₉₉ solves
// H(t) = -ln(1e-3); falls back to 8 tau_p when the survival never drops
// that far within the search window. Custom-table models use the table span.
double default_horizon(const ExperimentScenario& sc);

}  // namespace collapsim
