#include "collapsim/physics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw DomainError(what);
}

}  // namespace

void PhysicalConstants::validate() const {
  require(G > 0.0, "physical constant G must be > 0");
  require(hbar > 0.0, "physical constant hbar must be > 0");
  require(eps0 > 0.0, "physical constant eps0 must be > 0");
}

void PhotodiodeSpec::validate() const {
  require(excess_bias > 0.0, "photodiode.excess_bias must be > 0");
  require(internal_resistance >= 0.0,
          "photodiode.internal_resistance must be >= 0");
  require(quantum_efficiency >= 0.0 && quantum_efficiency <= 1.0,
          "photodiode.eta must lie in [0, 1]");
}

void PiezoSpec::validate() const {
  require(d33 >= 0.0, "piezo.d33 must be >= 0");
  require(rel_permittivity > 0.0, "piezo.rel_permittivity must be > 0");
  require(radius > 0.0, "piezo.radius must be > 0");
  require(thickness > 0.0, "piezo.thickness must be > 0");
  require(density > 0.0, "piezo.density must be > 0");
}

void MirrorSpec::validate() const {
  require(radius > 0.0, "mirror.radius must be > 0");
  require(thickness > 0.0, "mirror.thickness must be > 0");
  require(density > 0.0, "mirror.density must be > 0");
}

void InterferometerSpec::validate() const {
  require(wavelength > 0.0, "interferometer.wavelength must be > 0");
  require(alpha >= 0.0, "interferometer.alpha must be >= 0");
  require(beta >= 0.0, "interferometer.beta must be >= 0");
  require(alpha + beta <= 1.0 + 1e-12,
          "interferometer.alpha + beta must be <= 1");
  require(input_rate >= 0.0, "interferometer.input_rate must be >= 0");
  require(coupling_transmission >= 0.0 && coupling_transmission <= 1.0,
          "interferometer.coupling_transmission must lie in [0, 1]");
}

void DriveCircuitSpec::validate() const {
  require(series_resistance >= 0.0, "drive.series_resistance must be >= 0");
}

void MicroEnhancementParams::validate() const {
  require(lattice_constant > 0.0, "enhancement.lattice_constant must be > 0");
  require(nuclei_spread > 0.0, "enhancement.nuclei_spread must be > 0");
  require(nuclei_spread < 10.0 * lattice_constant,
          "enhancement.nuclei_spread must be < 10 * lattice_constant");
  require(xi0 >= 1.0, "enhancement.xi0 must be >= 1");
}

double RateTable::at(double time) const {
  if (t.empty()) throw DomainError("rate table is empty");
  if (time <= t.front()) return gamma.front();
  if (time >= t.back()) return gamma.back();
  // First knot strictly greater than `time`; with the guards above the
  // iterator is interior, so both neighbours exist.
  auto it = std::upper_bound(t.begin(), t.end(), time);
  std::size_t hi = static_cast<std::size_t>(it - t.begin());
  std::size_t lo = hi - 1;
  double frac = (time - t[lo]) / (t[hi] - t[lo]);
  return gamma[lo] + frac * (gamma[hi] - gamma[lo]);
}

void RateTable::validate() const {
  require(!t.empty(), "rate table must have at least one knot");
  require(t.size() == gamma.size(),
          "rate table time/rate columns must have equal length");
  for (std::size_t i = 0; i < t.size(); ++i) {
    require(std::isfinite(t[i]) && std::isfinite(gamma[i]),
            "rate table entries must be finite");
    require(gamma[i] >= 0.0, "rate table rates must be >= 0");
    if (i > 0)
      require(t[i] > t[i - 1], "rate table times must be strictly increasing");
  }
}

void CollapseModelConfig::validate() const {
  require(gamma_factor > 0.0, "model.gamma_factor must be > 0");
  if (kind == ModelKind::kParameterFree) enhancement.validate();
  if (kind == ModelKind::kCustomTable) table.validate();
}

BranchWeights branch_weights(double T2, double eta) {
  require(T2 >= 0.0 && T2 <= 1.0, "coupling transmission must lie in [0, 1]");
  require(eta >= 0.0 && eta <= 1.0, "quantum efficiency must lie in [0, 1]");
  BranchWeights w;
  w.w_mov = T2 * eta;
  w.w_not_mov = 1.0 - w.w_mov;
  return w;
}

double detection_probability(double ds, const InterferometerSpec& itf) {
  itf.validate();
  double s = std::sin(2.0 * kPi * ds / itf.wavelength + itf.phi0);
  return itf.alpha * s * s + itf.beta;
}

double piezo_capacitance(const PiezoSpec& pz, const PhysicalConstants& consts) {
  pz.validate();
  consts.validate();
  return consts.eps0 * pz.rel_permittivity * kPi * pz.radius * pz.radius /
         pz.thickness;
}

double drive_time_constant(const DriveCircuitSpec& circuit,
                           const PhotodiodeSpec& pd, double C_p) {
  circuit.validate();
  pd.validate();
  require(C_p > 0.0, "capacitance must be > 0");
  double R_total = circuit.series_resistance + pd.internal_resistance;
  require(R_total > 0.0, "total drive resistance must be > 0");
  return R_total * C_p;
}

double mirror_displacement(double t, const PhotodiodeSpec& pd,
                           const PiezoSpec& pz, const DriveCircuitSpec& circuit,
                           const PhysicalConstants& consts) {
  require(t >= 0.0, "time must be >= 0");
  double C_p = piezo_capacitance(pz, consts);
  double tau = drive_time_constant(circuit, pd, C_p);
  return pz.d33 * pd.excess_bias * (1.0 - std::exp(-t / tau));
}

double dp_quadratic_coefficient(const PiezoSpec& pz, const MirrorSpec& mir,
                                const PhysicalConstants& consts) {
  pz.validate();
  mir.validate();
  consts.validate();
  auto disc_term = [](double rho, double d, double r) {
    return rho * rho * d * kPi * r * r * (1.0 + 0.64 * d / r);
  };
  double piezo_term = disc_term(pz.density, pz.thickness, pz.radius) / 3.0;
  double mirror_term = disc_term(mir.density, mir.thickness, mir.radius);
  return 2.0 * kPi * consts.G * (piezo_term + mirror_term);
}

double micro_enhancement(double ds, const MicroEnhancementParams& p) {
  p.validate();
  require(ds >= 0.0, "displacement must be >= 0");
  double lo = p.nuclei_spread;
  double hi = 10.0 * p.lattice_constant;
  if (ds <= lo) return p.xi0;
  if (ds >= hi) return 1.0;
  // Log-linear ramp: f = xi0^(1 - u) with u = ln(ds/lo) / ln(hi/lo).
  double u = std::log(ds / lo) / std::log(hi / lo);
  return std::pow(p.xi0, 1.0 - u);
}

double decay_rate(double E, double gamma_factor,
                  const PhysicalConstants& consts) {
  require(E >= 0.0, "displacement energy must be >= 0");
  require(gamma_factor > 0.0, "gamma_factor must be > 0");
  consts.validate();
  return E / (gamma_factor * consts.hbar);
}

double model_decay_rate(double ds, double t, double k_coeff,
                        const CollapseModelConfig& model,
                        const PhysicalConstants& consts) {
  if (model.kind == ModelKind::kCustomTable) {
    return model.gamma_factor == 1.0
               ? model.table.at(t)
               : model.table.at(t) / model.gamma_factor;
  }
  double mag = std::abs(ds);
  double E = k_coeff * mag * mag;
  if (model.kind == ModelKind::kParameterFree)
    E *= micro_enhancement(mag, model.enhancement);
  return decay_rate(E, model.gamma_factor, consts);
}

}  // namespace collapsim
