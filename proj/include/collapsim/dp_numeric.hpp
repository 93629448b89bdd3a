#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "collapsim/physics.hpp"

namespace collapsim {

// Numerical evaluation of the gravitational self-energy difference between
// the two branches of a rigid-displacement superposition,
//   E = G [S(0) - S(d)],   S(d) = integral rho(x) rho(y - d) / |x - y|,
// by voxel summation with exact cell-pair integrals in the near field. It
// serves as a first-principles oracle for the closed-form quadratic
// coefficient of the analytic model.

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator-() const { return {-x, -y, -z}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
};

enum class BodyShape { kCylinder, kSphere, kBox };

// Homogeneous rigid body. Cylinders and boxes are voxelized on a grid
// aligned with the body frame (cylinder axis = local z).
struct MassBody {
  BodyShape shape = BodyShape::kSphere;
  double radius = 0.0;     // cylinder, sphere
  double thickness = 0.0;  // cylinder (axial extent)
  double lx = 0.0, ly = 0.0, lz = 0.0;  // box side lengths
  double density = 0.0;                 // kg m^-3
  Vec3 center{};                        // m, world frame
  Vec3 axis{0.0, 0.0, 1.0};             // unit vector (cylinder only)

  static MassBody cylinder(double radius, double thickness, double density,
                           Vec3 center = {}, Vec3 axis = {0.0, 0.0, 1.0});
  static MassBody sphere(double radius, double density, Vec3 center = {});
  static MassBody box(double lx, double ly, double lz, double density,
                      Vec3 center = {});
  void validate() const;
  double volume() const;
  double mass() const { return density * volume(); }
  // Longest and shortest extent of the body-frame bounding box.
  double max_extent() const;
  double min_extent() const;
};

enum class SelfInteractionRule { kCubicSelfTerm, kSkipDiagonal };

struct QuadratureConfig {
  int voxel_count_per_axis = 32;  // finest level, per bounding-box axis
  int refinement_levels = 1;      // levels halve the count downward
  SelfInteractionRule self_interaction_rule =
      SelfInteractionRule::kCubicSelfTerm;
  // Maximum allowed relative change between the two finest levels before
  // the estimate is declared unconverged.
  double convergence_tolerance = 0.02;
  int n_threads = 0;  // 0 = automatic; result is thread-count independent
  void validate() const;
};

// Exact interaction integral of two identical axis-aligned uniform boxes of
// unit density with side lengths `sides`, centers separated by `offset`:
//   B = integral over both boxes of 1/|x - y|.
// Dispatches internally: overlapping cells (|offset_i| < sides_i for all i)
// integrate in spherical coordinates around the kernel singularity;
// separated cells use tensor-product Gauss panels. Exposed for validation.
double box_pair_integral(const Vec3& sides, const Vec3& offset);

// S(offset) for a single body, kg^2 m^-1 (density included). Runs the full
// refinement ladder; returns the finest estimate or throws NumericalError
// (message includes the achieved estimate) if the last refinement step
// changes it by more than the declared tolerance.
double mutual_energy_S(const MassBody& body, const Vec3& offset,
                       const QuadratureConfig& q);

// E = G [S_tot(0) - S_tot(displacement)] in joules, summed over all bodies
// including cross-body terms; displacement applies rigidly to the whole set
// in the second branch. Always >= 0 up to quadrature noise (clamped at 0).
double dp_energy_rigid(const std::vector<MassBody>& bodies,
                       const Vec3& displacement, const QuadratureConfig& q);

// Independent 1D oracle for a displaced uniform sphere: radial quadrature
// of the exact interior/exterior potential against spherical-shell
// intersection areas, relative accuracy ~1e-6. Returns joules.
double sphere_oracle(double radius, double density, double displacement,
                     const PhysicalConstants& consts = {});

struct QuadraticFit {
  double k = 0.0;  // J m^-2, least squares through the origin on E = k d^2
  std::vector<double> displacements;  // m, as supplied
  std::vector<double> energies;       // J, voxel energies at the samples
  std::vector<double> residuals;      // E_i - k d_i^2
  double max_relative_residual = 0.0;
  // True when every sample is below twice the finest axial voxel side; the
  // exact near-field cell integrals keep such fits meaningful, but the far
  // field is then extrapolated rather than resolved.
  bool resolution_limited = false;
};

// Displacement samples are applied along world +z (the symmetry axis of the
// supported stacked-disc geometries; spheres are isotropic). Requires >= 4
// samples, all positive; throws DomainError if the samples are degenerate
// (all below 1e-6 voxel sides) or if any fitted energy is non-positive.
QuadraticFit fit_quadratic_coefficient(const std::vector<MassBody>& bodies,
                                       const std::vector<double>& samples,
                                       const QuadratureConfig& q);

}  // namespace collapsim
