#pragma once

#include <vector>

namespace collapsim {

inline constexpr double kPi = 3.14159265358979323846;

// All internal quantities are SI. Convenience units (mm, nm, pm/V, µs, Å,
// g/cm³) exist only at config ingestion.

struct PhysicalConstants {
  double G = 6.674e-11;            // gravitational constant, m³ kg⁻¹ s⁻²
  double hbar = 1.054571817e-34;   // reduced Planck constant, J s
  double eps0 = 8.8541878128e-12;  // vacuum permittivity, F m⁻¹
  void validate() const;           // all strictly positive
};

struct PhotodiodeSpec {
  double breakdown_voltage = 0.0;    // V_B, volts; stored for documentation
                                     // only, never enters a computed quantity
  double excess_bias = 0.0;          // V_E, volts, > 0
  double internal_resistance = 0.0;  // R_di, ohms, >= 0
  double quantum_efficiency = 0.0;   // eta, in [0, 1]
  void validate() const;
};

struct PiezoSpec {
  double d33 = 0.0;              // piezoelectric coefficient, m/V, >= 0
  double rel_permittivity = 0.0; // eps_r, dimensionless
  double radius = 0.0;           // r_p, m
  double thickness = 0.0;        // d_p, m
  double density = 0.0;          // rho_p, kg/m³
  void validate() const;         // d33 >= 0, the rest strictly positive
};

struct MirrorSpec {
  double radius = 0.0;     // r_m, m
  double thickness = 0.0;  // d_m, m
  double density = 0.0;    // rho_m, kg/m³
  void validate() const;   // all strictly positive
};

struct InterferometerSpec {
  double wavelength = 0.0;  // lambda, m, > 0
  double alpha = 0.0;       // fringe amplitude, >= 0
  double beta = 0.0;        // baseline, >= 0; alpha + beta <= 1
  double phi0 = 0.0;        // working-point phase, radians
  double input_rate = 0.0;  // N_in, photons/s, >= 0
  double coupling_transmission = 0.0;  // T2 of the mirror before the
                                       // actuator photodiode, in [0, 1]
  void validate() const;
};

struct DriveCircuitSpec {
  double series_resistance = 0.0;  // R, ohms, >= 0
  void validate() const;
};

// Branch intensities; w_not_mov is always derived as 1 - w_mov so the pair
// sums to exactly 1.
struct BranchWeights {
  double w_mov = 0.0;
  double w_not_mov = 1.0;
};

struct MicroEnhancementParams {
  double lattice_constant = 2e-10;  // g, m
  double nuclei_spread = 1e-11;     // sigma, m; 0 < sigma < 10 g
  double xi0 = 100.0;               // enhancement plateau, >= 1
  void validate() const;
};

enum class ModelKind { kSmeared, kParameterFree, kCustomTable };

// Piecewise-linear rate table Γ(t); clamped to the end values outside the
// sampled range.
struct RateTable {
  std::vector<double> t;      // seconds, strictly increasing
  std::vector<double> gamma;  // 1/s, >= 0
  bool empty() const { return t.empty(); }
  double at(double time) const;
  void validate() const;
};

struct CollapseModelConfig {
  ModelKind kind = ModelKind::kSmeared;
  double gamma_factor = 1.0;           // > 0
  MicroEnhancementParams enhancement{};  // used by kParameterFree only
  RateTable table{};                     // used by kCustomTable only
  void validate() const;
};

// w_mov = T2 * eta, w_not_mov = 1 - w_mov. Rejects out-of-range inputs.
BranchWeights branch_weights(double T2, double eta);

// alpha * sin²(2π ds / lambda + phi0) + beta, in [0, 1].
double detection_probability(double ds, const InterferometerSpec& itf);

// C_p = eps0 * eps_r * π r_p² / d_p.
double piezo_capacitance(const PiezoSpec& pz, const PhysicalConstants& consts);

// tau_p = (R + R_di) * C_p.
double drive_time_constant(const DriveCircuitSpec& circuit,
                           const PhotodiodeSpec& pd, double C_p);

// Δs(t) = d33 * V_E * (1 - exp(-t / tau_p)); rejects t < 0.
double mirror_displacement(double t, const PhotodiodeSpec& pd,
                           const PiezoSpec& pz, const DriveCircuitSpec& circuit,
                           const PhysicalConstants& consts);

// Closed-form quadratic coefficient k (J·m⁻²) of the homogeneous-body
// displacement energy E(Δs) = k·Δs² for the stacked piezo + mirror discs:
// k = 2πG [ (1/3) rho_p² d_p π r_p² (1 + 0.64 d_p/r_p)
//           +      rho_m² d_m π r_m² (1 + 0.64 d_m/r_m) ].
double dp_quadratic_coefficient(const PiezoSpec& pz, const MirrorSpec& mir,
                                const PhysicalConstants& consts);

// Sub-lattice enhancement factor: xi0 for ds <= sigma, 1 for ds >= 10 g,
// log-linear in ln(ds) between; continuous and monotone nonincreasing.
double micro_enhancement(double ds, const MicroEnhancementParams& p);

// Γ = E / (gamma_factor * hbar).
double decay_rate(double E, double gamma_factor,
                  const PhysicalConstants& consts);

// Collapse rate for displacement ds at time t under a model configuration:
// k_coeff * ds^2 through decay_rate, with the sub-lattice enhancement applied
// for the parameter-free kind; custom tables ignore ds and interpolate at t
// (scaled by 1 / gamma_factor).
double model_decay_rate(double ds, double t, double k_coeff,
                        const CollapseModelConfig& model,
                        const PhysicalConstants& consts);

}  // namespace collapsim
