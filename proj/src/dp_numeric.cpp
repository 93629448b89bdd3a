#include "collapsim/dp_numeric.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <sstream>
#include <thread>
#include <vector>

#include "collapsim/detail/binned_accum.hpp"
#include "collapsim/errors.hpp"

namespace collapsim {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

void require(bool cond, const char* message) {
  if (!cond) throw DomainError(message);
}

// Compensated (Neumaier) accumulator for long mixed-sign sums.
struct Neumaier {
  double sum = 0.0, comp = 0.0;
  void add(double x) {
    double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  double get() const { return sum + comp; }
};

// ---------------------------------------------------------------------------
// Gauss-Legendre rules
// ---------------------------------------------------------------------------

std::vector<std::array<double, 2>> gauss_legendre(int n) {
  std::vector<std::array<double, 2>> rule(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    double x = std::cos(kPi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-15) break;
    }
    rule[static_cast<std::size_t>(i)] = {x, 2.0 / ((1.0 - x * x) * dp * dp)};
  }
  return rule;
}

const std::vector<std::array<double, 2>>& gl3() {
  static const auto rule = gauss_legendre(3);
  return rule;
}
const std::vector<std::array<double, 2>>& gl8() {
  static const auto rule = gauss_legendre(8);
  return rule;
}
const std::vector<std::array<double, 2>>& gl200() {
  static const auto rule = gauss_legendre(200);
  return rule;
}

// ---------------------------------------------------------------------------
// Exact cell-pair integrals
// ---------------------------------------------------------------------------

// Overlapping cells (kernel singularity inside the correlation support):
// integrate r * prod_i (a_i - |r w_i - c_i|) radially (piecewise quartic,
// exact 3-point Gauss per segment) over spherical directions. The integral
// is even in each offset component, so the offset is canonicalized to the
// positive octant; this makes the sign symmetry exact in floating point.
double pair_integral_overlapping(const Vec3& a, const Vec3& c) {
  const auto& mu_rule = gl200();
  const auto& ph_rule = gl200();
  const auto& r_rule = gl3();
  const double as[3] = {a.x, a.y, a.z};
  const double cs[3] = {std::abs(c.x), std::abs(c.y), std::abs(c.z)};
  double total = 0.0;
  for (const auto& mu_n : mu_rule) {
    double mu = mu_n[0];
    double s = std::sqrt(std::max(0.0, 1.0 - mu * mu));
    double row = 0.0;
    for (const auto& ph_n : ph_rule) {
      double phi = kPi * (ph_n[0] + 1.0);  // [0, 2pi]
      double w[3] = {s * std::cos(phi), s * std::sin(phi), mu};
      double stop = kInf;
      double kinks[3];
      int n_kinks = 0;
      for (int i = 0; i < 3; ++i) {
        if (std::abs(w[i]) < 1e-14) continue;
        double exit =
            ((w[i] > 0.0 ? cs[i] + as[i] : cs[i] - as[i])) / w[i];
        stop = std::min(stop, exit);
        double kink = cs[i] / w[i];
        if (kink > 0.0) kinks[n_kinks++] = kink;
      }
      double bounds[5];
      int nb = 0;
      bounds[nb++] = 0.0;
      std::sort(kinks, kinks + n_kinks);
      for (int i = 0; i < n_kinks; ++i)
        if (kinks[i] < stop) bounds[nb++] = kinks[i];
      bounds[nb++] = stop;
      double ray = 0.0;
      for (int seg = 0; seg + 1 < nb; ++seg) {
        double lo = bounds[seg], hi = bounds[seg + 1];
        if (!(hi > lo)) continue;
        double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
        for (const auto& rn : r_rule) {
          double r = mid + half * rn[0];
          double f = r;
          for (int i = 0; i < 3; ++i)
            f *= as[i] - std::abs(r * w[i] - cs[i]);
          ray += half * rn[1] * f;
        }
      }
      row += ph_n[1] * ray;
    }
    total += mu_n[1] * row;
  }
  return total * kPi;  // phi jacobian: dphi = pi d(node)
}

// Separated cells: tensor-product Gauss over the correlation support, with
// per-axis panels split at the triangular kink and at the coordinate plane.
// Offsets are canonicalized to the positive octant (the integral is even in
// each component).
double pair_integral_near(const Vec3& a, const Vec3& c) {
  const auto& rule = gl8();
  const double as[3] = {a.x, a.y, a.z};
  const double cs[3] = {std::abs(c.x), std::abs(c.y), std::abs(c.z)};
  // Per-axis nodes: position and weight * triangular factor.
  std::vector<double> pos[3], wgt[3];
  for (int i = 0; i < 3; ++i) {
    double cuts[4];
    int nc = 0;
    cuts[nc++] = cs[i] - as[i];
    cuts[nc++] = cs[i];
    cuts[nc++] = cs[i] + as[i];
    if (cuts[0] < 0.0 && 0.0 < cuts[2] && 0.0 != cs[i]) cuts[nc++] = 0.0;
    std::sort(cuts, cuts + nc);
    for (int sgm = 0; sgm + 1 < nc; ++sgm) {
      double lo = cuts[sgm], hi = cuts[sgm + 1];
      if (!(hi > lo)) continue;
      double mid = 0.5 * (lo + hi), half = 0.5 * (hi - lo);
      for (const auto& gn : rule) {
        double t = mid + half * gn[0];
        pos[i].push_back(t);
        wgt[i].push_back(half * gn[1] * (as[i] - std::abs(t - cs[i])));
      }
    }
  }
  double total = 0.0;
  for (std::size_t ix = 0; ix < pos[0].size(); ++ix) {
    double tx = pos[0][ix], wx = wgt[0][ix];
    for (std::size_t iy = 0; iy < pos[1].size(); ++iy) {
      double ty = pos[1][iy], wxy = wx * wgt[1][iy];
      double rxy = tx * tx + ty * ty;
      for (std::size_t iz = 0; iz < pos[2].size(); ++iz) {
        double tz = pos[2][iz];
        total += wxy * wgt[2][iz] / std::sqrt(rxy + tz * tz);
      }
    }
  }
  return total;
}

bool origin_inside(const Vec3& a, const Vec3& c) {
  return std::abs(c.x) < a.x && std::abs(c.y) < a.y && std::abs(c.z) < a.z;
}

}  // namespace

double box_pair_integral(const Vec3& sides, const Vec3& offset) {
  require(sides.x > 0.0 && sides.y > 0.0 && sides.z > 0.0,
          "cell sides must be positive");
  return origin_inside(sides, offset) ? pair_integral_overlapping(sides, offset)
                                      : pair_integral_near(sides, offset);
}

// ---------------------------------------------------------------------------
// MassBody
// ---------------------------------------------------------------------------

MassBody MassBody::cylinder(double radius, double thickness, double density,
                            Vec3 center, Vec3 axis) {
  MassBody b;
  b.shape = BodyShape::kCylinder;
  b.radius = radius;
  b.thickness = thickness;
  b.density = density;
  b.center = center;
  b.axis = axis;
  b.validate();
  return b;
}

MassBody MassBody::sphere(double radius, double density, Vec3 center) {
  MassBody b;
  b.shape = BodyShape::kSphere;
  b.radius = radius;
  b.density = density;
  b.center = center;
  b.validate();
  return b;
}

MassBody MassBody::box(double lx, double ly, double lz, double density,
                       Vec3 center) {
  MassBody b;
  b.shape = BodyShape::kBox;
  b.lx = lx;
  b.ly = ly;
  b.lz = lz;
  b.density = density;
  b.center = center;
  b.validate();
  return b;
}

void MassBody::validate() const {
  require(density > 0.0, "body.density must be positive");
  switch (shape) {
    case BodyShape::kCylinder:
      require(radius > 0.0, "body.radius must be positive");
      require(thickness > 0.0, "body.thickness must be positive");
      require(std::abs(axis.norm() - 1.0) <= 1e-12,
              "body.axis must be a unit vector (within 1e-12)");
      break;
    case BodyShape::kSphere:
      require(radius > 0.0, "body.radius must be positive");
      break;
    case BodyShape::kBox:
      require(lx > 0.0 && ly > 0.0 && lz > 0.0,
              "body box sides must be positive");
      break;
  }
}

double MassBody::volume() const {
  switch (shape) {
    case BodyShape::kCylinder:
      return kPi * radius * radius * thickness;
    case BodyShape::kSphere:
      return (4.0 / 3.0) * kPi * radius * radius * radius;
    case BodyShape::kBox:
      return lx * ly * lz;
  }
  return 0.0;
}

double MassBody::max_extent() const {
  switch (shape) {
    case BodyShape::kCylinder:
      return std::max(2.0 * radius, thickness);
    case BodyShape::kSphere:
      return 2.0 * radius;
    case BodyShape::kBox:
      return std::max({lx, ly, lz});
  }
  return 0.0;
}

double MassBody::min_extent() const {
  switch (shape) {
    case BodyShape::kCylinder:
      return std::min(2.0 * radius, thickness);
    case BodyShape::kSphere:
      return 2.0 * radius;
    case BodyShape::kBox:
      return std::min({lx, ly, lz});
  }
  return 0.0;
}

void QuadratureConfig::validate() const {
  require(voxel_count_per_axis >= 8,
          "quadrature.voxel_count_per_axis must be >= 8");
  require(refinement_levels >= 1,
          "quadrature.refinement_levels must be >= 1");
  require(convergence_tolerance > 0.0,
          "quadrature.convergence_tolerance must be positive");
  require(n_threads >= 0, "quadrature.n_threads must be >= 0");
  int div = 1 << (refinement_levels - 1);
  require(refinement_levels <= 8 && voxel_count_per_axis % div == 0 &&
              voxel_count_per_axis / div >= 8,
          "quadrature.refinement_levels too deep: the coarsest level must "
          "keep at least 8 voxels per axis with exact halving");
}

// ---------------------------------------------------------------------------
// Voxelization
// ---------------------------------------------------------------------------

namespace {

// Area of [0,X]x[0,Y] intersected with the disk of radius r (X, Y >= 0).
double disk_corner_area(double X, double Y, double r) {
  if (X <= 0.0 || Y <= 0.0) return 0.0;
  if (X * X + Y * Y <= r * r) return X * Y;
  double xr = std::min(X, r);
  double yc = std::min(Y, r);
  double xc = std::sqrt(std::max(r * r - yc * yc, 0.0));
  auto prim = [r](double x) {
    return 0.5 * (x * std::sqrt(std::max(r * r - x * x, 0.0)) +
                  r * r * std::asin(std::min(1.0, std::max(-1.0, x / r))));
  };
  double flat = yc * std::min(xc, xr);
  double curved = xr > xc ? prim(xr) - prim(xc) : 0.0;
  return flat + curved;
}

double disk_signed_corner(double X, double Y, double r) {
  double s = 1.0;
  if (X < 0.0) {
    s = -s;
    X = -X;
  }
  if (Y < 0.0) {
    s = -s;
    Y = -Y;
  }
  return s * disk_corner_area(X, Y, r);
}

// Fraction of the cell [x0,x1]x[y0,y1] covered by the disk of radius r.
double disk_cell_fraction(double x0, double x1, double y0, double y1,
                          double r) {
  double area = disk_signed_corner(x1, y1, r) - disk_signed_corner(x0, y1, r) -
                disk_signed_corner(x1, y0, r) + disk_signed_corner(x0, y0, r);
  double cell = (x1 - x0) * (y1 - y0);
  return std::min(1.0, std::max(0.0, area / cell));
}

struct Frame {
  Vec3 e1{1, 0, 0}, e2{0, 1, 0}, e3{0, 0, 1};
};

Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

Frame frame_from_axis(const Vec3& axis) {
  Frame f;
  double n = axis.norm();
  f.e3 = axis * (1.0 / n);
  Vec3 seed = std::abs(f.e3.z) < 0.9 ? Vec3{0, 0, 1} : Vec3{1, 0, 0};
  Vec3 e1 = cross(seed, f.e3);
  f.e1 = e1 * (1.0 / e1.norm());
  f.e2 = cross(f.e3, f.e1);
  return f;
}

struct Cell {
  std::int16_t i, j, k;
  float w;
};

// A voxelized body: per-axis counts equal, spacing anisotropic in general.
struct BodyGrid {
  const MassBody* body = nullptr;
  Frame frame;
  int n = 0;
  Vec3 spacing{};
  Vec3 half{};  // bounding-box half extents in the body frame
  bool separable = false;
  std::vector<double> wxy;  // n*n, separable bodies
  std::vector<double> wz;   // n, separable bodies
  std::vector<Cell> cells;  // occupied cells, fixed (k,j,i) order
  double sum_w2 = 0.0;      // sum of squared weights (diagonal class count)
  double cell_volume = 0.0;
  double max_side = 0.0;

  Vec3 center_body(int i, int j, int k) const {
    return {(i + 0.5) * spacing.x - half.x, (j + 0.5) * spacing.y - half.y,
            (k + 0.5) * spacing.z - half.z};
  }
  Vec3 body_to_world(const Vec3& p) const {
    return body->center + frame.e1 * p.x + frame.e2 * p.y + frame.e3 * p.z;
  }
  Vec3 world_to_body(const Vec3& p) const {
    return {frame.e1.dot(p), frame.e2.dot(p), frame.e3.dot(p)};
  }
};

double sphere_cell_weight(const Vec3& lo, const Vec3& hi, double r) {
  auto sq = [](double v) { return v * v; };
  double near2 = sq(std::max({lo.x, -hi.x, 0.0})) +
                 sq(std::max({lo.y, -hi.y, 0.0})) +
                 sq(std::max({lo.z, -hi.z, 0.0}));
  if (near2 >= r * r) return 0.0;
  double far2 = sq(std::max(std::abs(lo.x), std::abs(hi.x))) +
                sq(std::max(std::abs(lo.y), std::abs(hi.y))) +
                sq(std::max(std::abs(lo.z), std::abs(hi.z)));
  if (far2 <= r * r) return 1.0;
  constexpr int kSub = 4;
  int count = 0;
  for (int a = 0; a < kSub; ++a) {
    double x = lo.x + (a + 0.5) * (hi.x - lo.x) / kSub;
    for (int b = 0; b < kSub; ++b) {
      double y = lo.y + (b + 0.5) * (hi.y - lo.y) / kSub;
      for (int c = 0; c < kSub; ++c) {
        double z = lo.z + (c + 0.5) * (hi.z - lo.z) / kSub;
        if (x * x + y * y + z * z <= r * r) ++count;
      }
    }
  }
  return static_cast<double>(count) / (kSub * kSub * kSub);
}

BodyGrid make_grid(const MassBody& body, int n) {
  BodyGrid g;
  g.body = &body;
  g.frame = body.shape == BodyShape::kCylinder ? frame_from_axis(body.axis)
                                               : Frame{};
  g.n = n;
  switch (body.shape) {
    case BodyShape::kCylinder:
      g.half = {body.radius, body.radius, 0.5 * body.thickness};
      break;
    case BodyShape::kSphere:
      g.half = {body.radius, body.radius, body.radius};
      break;
    case BodyShape::kBox:
      g.half = {0.5 * body.lx, 0.5 * body.ly, 0.5 * body.lz};
      break;
  }
  g.spacing = {2.0 * g.half.x / n, 2.0 * g.half.y / n, 2.0 * g.half.z / n};
  g.cell_volume = g.spacing.x * g.spacing.y * g.spacing.z;
  g.max_side = std::max({g.spacing.x, g.spacing.y, g.spacing.z});
  g.separable = body.shape != BodyShape::kSphere;

  std::size_t un = static_cast<std::size_t>(n);
  if (body.shape == BodyShape::kBox) {
    g.wxy.assign(un * un, 1.0);
    g.wz.assign(un, 1.0);
  } else if (body.shape == BodyShape::kCylinder) {
    g.wxy.assign(un * un, 0.0);
    g.wz.assign(un, 1.0);
    for (int i = 0; i < n; ++i) {
      double x0 = -g.half.x + i * g.spacing.x;
      double x1 = x0 + g.spacing.x;
      for (int j = 0; j < n; ++j) {
        double y0 = -g.half.y + j * g.spacing.y;
        double y1 = y0 + g.spacing.y;
        g.wxy[un * static_cast<std::size_t>(i) + static_cast<std::size_t>(j)] =
            disk_cell_fraction(x0, x1, y0, y1, body.radius);
      }
    }
  } else {
    g.cells.reserve(un * un * un / 2);
    for (int k = 0; k < n; ++k) {
      double z0 = -g.half.z + k * g.spacing.z;
      for (int j = 0; j < n; ++j) {
        double y0 = -g.half.y + j * g.spacing.y;
        for (int i = 0; i < n; ++i) {
          double x0 = -g.half.x + i * g.spacing.x;
          double w = sphere_cell_weight(
              {x0, y0, z0},
              {x0 + g.spacing.x, y0 + g.spacing.y, z0 + g.spacing.z},
              body.radius);
          if (w > 0.0)
            g.cells.push_back({static_cast<std::int16_t>(i),
                               static_cast<std::int16_t>(j),
                               static_cast<std::int16_t>(k),
                               static_cast<float>(w)});
        }
      }
    }
  }
  for (const Cell& c : g.cells) g.sum_w2 += double(c.w) * double(c.w);
  return g;
}

// ---------------------------------------------------------------------------
// Kernel dispatch and class sums
// ---------------------------------------------------------------------------

// Exact pair integral when the class offset is within reach of the cell
// size (or cells overlap); point kernel otherwise. A single method is used
// for all offsets of one symmetric bracket so quadrature error differences
// cannot pollute the tiny energy difference.
struct PairKernel {
  Vec3 a;        // cell sides
  double vol2;   // (cell volume)^2
  double near_r2;

  double exact(const Vec3& o) const {
    return origin_inside(a, o) ? pair_integral_overlapping(a, o)
                               : pair_integral_near(a, o);
  }
  bool near(const Vec3& o) const {
    return o.x * o.x + o.y * o.y + o.z * o.z <= near_r2;
  }
  // K(o): single-offset kernel, exact in the near zone.
  double single(const Vec3& o) const {
    if (near(o)) return exact(o);
    return vol2 / o.norm();
  }
  // 2K(o) - K(o - v) - K(o + v), one method for all three evaluations.
  double bracket(const Vec3& o, const Vec3& v) const {
    if (near(o))
      return 2.0 * exact(o) - exact(o - v) - exact(o + v);
    double r0 = o.norm(), rm = (o - v).norm(), rp = (o + v).norm();
    return vol2 * (2.0 / r0 - 1.0 / rm - 1.0 / rp);
  }
};

PairKernel make_kernel(const BodyGrid& g, double vnorm) {
  PairKernel k;
  k.a = g.spacing;
  k.vol2 = g.cell_volume * g.cell_volume;
  double reach = 3.0 * g.max_side + vnorm;
  k.near_r2 = reach * reach;
  return k;
}

struct SeparableClasses {
  int n = 0;
  std::vector<double> cxy;  // (2n-1)^2
  std::vector<double> cz;   // 2n-1
  double at_xy(int dx, int dy) const {
    std::size_t m = static_cast<std::size_t>(2 * n - 1);
    return cxy[m * static_cast<std::size_t>(dx + n - 1) +
               static_cast<std::size_t>(dy + n - 1)];
  }
};

SeparableClasses build_classes(const BodyGrid& g) {
  SeparableClasses c;
  int n = g.n;
  c.n = n;
  std::size_t m = static_cast<std::size_t>(2 * n - 1);
  c.cxy.assign(m * m, 0.0);
  c.cz.assign(m, 0.0);
  std::size_t un = static_cast<std::size_t>(n);
  for (int dx = -(n - 1); dx <= n - 1; ++dx) {
    int x_lo = std::max(0, -dx), x_hi = n - 1 - std::max(0, dx);
    for (int dy = -(n - 1); dy <= n - 1; ++dy) {
      int y_lo = std::max(0, -dy), y_hi = n - 1 - std::max(0, dy);
      double s = 0.0;
      for (int x = x_lo; x <= x_hi; ++x) {
        const double* row = &g.wxy[un * static_cast<std::size_t>(x)];
        const double* row2 = &g.wxy[un * static_cast<std::size_t>(x + dx)];
        for (int y = y_lo; y <= y_hi; ++y)
          s += row[y] * row2[y + dy];
      }
      c.cxy[m * static_cast<std::size_t>(dx + n - 1) +
            static_cast<std::size_t>(dy + n - 1)] = s;
    }
  }
  for (int dz = -(n - 1); dz <= n - 1; ++dz) {
    int z_lo = std::max(0, -dz), z_hi = n - 1 - std::max(0, dz);
    double s = 0.0;
    for (int z = z_lo; z <= z_hi; ++z)
      s += g.wz[static_cast<std::size_t>(z)] *
           g.wz[static_cast<std::size_t>(z + dz)];
    c.cz[static_cast<std::size_t>(dz + n - 1)] = s;
  }
  return c;
}

// Self-term S(d) for a separable body (density excluded).
double separable_S(const BodyGrid& g, const SeparableClasses& cls,
                   const Vec3& d, SelfInteractionRule rule) {
  PairKernel kernel = make_kernel(g, d.norm());
  int n = g.n;
  Neumaier acc;
  for (int dz = -(n - 1); dz <= n - 1; ++dz) {
    double cz = cls.cz[static_cast<std::size_t>(dz + n - 1)];
    if (cz == 0.0) continue;
    double oz = dz * g.spacing.z - d.z;
    for (int dx = -(n - 1); dx <= n - 1; ++dx) {
      double ox = dx * g.spacing.x - d.x;
      for (int dy = -(n - 1); dy <= n - 1; ++dy) {
        double c = cz * cls.at_xy(dx, dy);
        if (c == 0.0) continue;
        if (rule == SelfInteractionRule::kSkipDiagonal && dx == 0 &&
            dy == 0 && dz == 0)
          continue;
        acc.add(c * kernel.single({ox, dy * g.spacing.y - d.y, oz}));
      }
    }
  }
  return acc.get();
}

// Self-term energy sum [S(0) - S(v)] for a separable body via symmetric
// brackets (density and G excluded).
double separable_energy(const BodyGrid& g, const SeparableClasses& cls,
                        const Vec3& v, SelfInteractionRule rule) {
  PairKernel kernel = make_kernel(g, v.norm());
  int n = g.n;
  Neumaier acc;
  for (int dz = -(n - 1); dz <= n - 1; ++dz) {
    double cz = cls.cz[static_cast<std::size_t>(dz + n - 1)];
    if (cz == 0.0) continue;
    double oz = dz * g.spacing.z;
    for (int dx = -(n - 1); dx <= n - 1; ++dx) {
      double ox = dx * g.spacing.x;
      for (int dy = -(n - 1); dy <= n - 1; ++dy) {
        double c = cz * cls.at_xy(dx, dy);
        if (c == 0.0) continue;
        if (rule == SelfInteractionRule::kSkipDiagonal && dx == 0 &&
            dy == 0 && dz == 0)
          continue;
        acc.add(c * kernel.bracket({ox, dy * g.spacing.y, oz}, v));
      }
    }
  }
  return 0.5 * acc.get();
}

// Dense table of exact kernel values for small integer class offsets,
// centered on `center` (in cells), used by the sphere pair loops.
struct NearTable {
  int cx = 0, cy = 0, cz = 0;   // center class
  int hx = 0, hy = 0, hz = 0;   // half ranges
  std::vector<double> values;
  bool contains(int dx, int dy, int dz) const {
    return std::abs(dx - cx) <= hx && std::abs(dy - cy) <= hy &&
           std::abs(dz - cz) <= hz;
  }
  double at(int dx, int dy, int dz) const {
    std::size_t sx = static_cast<std::size_t>(dx - cx + hx);
    std::size_t sy = static_cast<std::size_t>(dy - cy + hy);
    std::size_t sz = static_cast<std::size_t>(dz - cz + hz);
    std::size_t ny = static_cast<std::size_t>(2 * hy + 1);
    std::size_t nz = static_cast<std::size_t>(2 * hz + 1);
    return values[(sx * ny + sy) * nz + sz];
  }
};

template <typename F>
NearTable build_near_table(const BodyGrid& g, const Vec3& center_offset,
                           double reach, F&& eval) {
  NearTable t;
  t.cx = static_cast<int>(std::lround(center_offset.x / g.spacing.x));
  t.cy = static_cast<int>(std::lround(center_offset.y / g.spacing.y));
  t.cz = static_cast<int>(std::lround(center_offset.z / g.spacing.z));
  t.hx = static_cast<int>(reach / g.spacing.x) + 2;
  t.hy = static_cast<int>(reach / g.spacing.y) + 2;
  t.hz = static_cast<int>(reach / g.spacing.z) + 2;
  std::size_t nx = static_cast<std::size_t>(2 * t.hx + 1);
  std::size_t ny = static_cast<std::size_t>(2 * t.hy + 1);
  std::size_t nz = static_cast<std::size_t>(2 * t.hz + 1);
  t.values.assign(nx * ny * nz, 0.0);
  for (int dx = t.cx - t.hx; dx <= t.cx + t.hx; ++dx)
    for (int dy = t.cy - t.hy; dy <= t.cy + t.hy; ++dy)
      for (int dz = t.cz - t.hz; dz <= t.cz + t.hz; ++dz) {
        Vec3 o{dx * g.spacing.x, dy * g.spacing.y, dz * g.spacing.z};
        std::size_t sx = static_cast<std::size_t>(dx - t.cx + t.hx);
        std::size_t sy = static_cast<std::size_t>(dy - t.cy + t.hy);
        std::size_t sz = static_cast<std::size_t>(dz - t.cz + t.hz);
        t.values[(sx * ny + sy) * nz + sz] = eval(o);
      }
  return t;
}

// Deterministic parallel reduction over pair blocks.
template <typename BlockFn>
double parallel_block_sum(int blocks, int n_threads, BlockFn&& fn) {
  std::vector<double> partial(static_cast<std::size_t>(blocks), 0.0);
  std::atomic<int> next{0};
  auto worker = [&]() {
    while (true) {
      int b = next.fetch_add(1);
      if (b >= blocks) return;
      partial[static_cast<std::size_t>(b)] = fn(b);
    }
  };
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
  }
  Neumaier acc;
  for (double p : partial) acc.add(p);
  return acc.get();
}

// Sphere self-term S(d) (density excluded).
double sphere_S(const BodyGrid& g, const Vec3& d, SelfInteractionRule rule,
                int n_threads) {
  PairKernel kernel = make_kernel(g, 0.0);
  double reach = 3.0 * g.max_side;
  NearTable table = build_near_table(
      g, d, reach, [&](const Vec3& o) { return kernel.exact(o - d); });
  auto far_k = [&](const Vec3& o) { return kernel.vol2 / (o - d).norm(); };
  const std::vector<Cell>& cells = g.cells;
  std::size_t nc = cells.size();
  int blocks = 128;
  double pair_sum = parallel_block_sum(blocks, n_threads, [&](int b) {
    std::size_t lo = nc * static_cast<std::size_t>(b) /
                     static_cast<std::size_t>(blocks);
    std::size_t hi = nc * static_cast<std::size_t>(b + 1) /
                     static_cast<std::size_t>(blocks);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const Cell& ci = cells[i];
      for (std::size_t j = i + 1; j < nc; ++j) {
        const Cell& cj = cells[j];
        int dx = cj.i - ci.i, dy = cj.j - ci.j, dz = cj.k - ci.k;
        double w = double(ci.w) * double(cj.w);
        Vec3 o{dx * g.spacing.x, dy * g.spacing.y, dz * g.spacing.z};
        // The offset kernel is not symmetric in the class: ordered pairs
        // contribute K(o - d) and K(-o - d).
        double k1 =
            table.contains(dx, dy, dz) ? table.at(dx, dy, dz) : far_k(o);
        double k2 = table.contains(-dx, -dy, -dz) ? table.at(-dx, -dy, -dz)
                                                  : far_k(-o);
        s += w * (k1 + k2);
      }
    }
    return s;
  });
  double diag = 0.0;
  if (rule == SelfInteractionRule::kCubicSelfTerm)
    diag = g.sum_w2 *
           (table.contains(0, 0, 0) ? table.at(0, 0, 0) : far_k({0, 0, 0}));
  return pair_sum + diag;
}

// Sphere energy sum [S(0) - S(v)] (density and G excluded).
double sphere_energy(const BodyGrid& g, const Vec3& v,
                     SelfInteractionRule rule, int n_threads) {
  PairKernel kernel = make_kernel(g, v.norm());
  double reach = 3.0 * g.max_side + v.norm();
  NearTable table = build_near_table(
      g, {0, 0, 0}, reach, [&](const Vec3& o) { return kernel.bracket(o, v); });
  const std::vector<Cell>& cells = g.cells;
  std::size_t nc = cells.size();
  double vx = v.x, vy = v.y, vz = v.z;
  double vol2 = kernel.vol2;
  int blocks = 128;
  double pair_sum = parallel_block_sum(blocks, n_threads, [&](int b) {
    std::size_t lo = nc * static_cast<std::size_t>(b) /
                     static_cast<std::size_t>(blocks);
    std::size_t hi = nc * static_cast<std::size_t>(b + 1) /
                     static_cast<std::size_t>(blocks);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      const Cell& ci = cells[i];
      for (std::size_t j = i + 1; j < nc; ++j) {
        const Cell& cj = cells[j];
        int dx = cj.i - ci.i, dy = cj.j - ci.j, dz = cj.k - ci.k;
        double w = double(ci.w) * double(cj.w);
        if (table.contains(dx, dy, dz)) {
          s += w * table.at(dx, dy, dz);
        } else {
          double ox = dx * g.spacing.x, oy = dy * g.spacing.y,
                 oz = dz * g.spacing.z;
          double r0 = std::sqrt(ox * ox + oy * oy + oz * oz);
          double rm = std::sqrt((ox - vx) * (ox - vx) +
                                (oy - vy) * (oy - vy) +
                                (oz - vz) * (oz - vz));
          double rp = std::sqrt((ox + vx) * (ox + vx) +
                                (oy + vy) * (oy + vy) +
                                (oz + vz) * (oz + vz));
          s += w * vol2 * (2.0 / r0 - 1.0 / rm - 1.0 / rp);
        }
      }
    }
    return s;
  });
  double diag = 0.0;
  if (rule == SelfInteractionRule::kCubicSelfTerm)
    diag = 0.5 * g.sum_w2 * table.at(0, 0, 0);
  return pair_sum + diag;
}

// World-frame occupied cell list with positions, for cross-body terms.
struct WorldCells {
  std::vector<double> x, y, z, w;
  double cell_volume = 0.0;
};

WorldCells world_cells(const BodyGrid& g) {
  WorldCells out;
  out.cell_volume = g.cell_volume;
  auto push = [&](int i, int j, int k, double wgt) {
    if (wgt <= 0.0) return;
    Vec3 p = g.body_to_world(g.center_body(i, j, k));
    out.x.push_back(p.x);
    out.y.push_back(p.y);
    out.z.push_back(p.z);
    out.w.push_back(wgt);
  };
  if (g.separable) {
    std::size_t un = static_cast<std::size_t>(g.n);
    for (int k = 0; k < g.n; ++k) {
      double wzk = g.wz[static_cast<std::size_t>(k)];
      if (wzk <= 0.0) continue;
      for (int i = 0; i < g.n; ++i)
        for (int j = 0; j < g.n; ++j)
          push(i, j, k,
               wzk * g.wxy[un * static_cast<std::size_t>(i) +
                           static_cast<std::size_t>(j)]);
    }
  } else {
    for (const Cell& c : g.cells) push(c.i, c.j, c.k, double(c.w));
  }
  return out;
}

// World-frame axis-aligned bounding box of a body.
void world_aabb(const MassBody& b, Vec3& lo, Vec3& hi) {
  Vec3 h{};
  switch (b.shape) {
    case BodyShape::kSphere:
      h = {b.radius, b.radius, b.radius};
      break;
    case BodyShape::kBox:
      h = {0.5 * b.lx, 0.5 * b.ly, 0.5 * b.lz};
      break;
    case BodyShape::kCylinder: {
      Vec3 u = b.axis * (1.0 / b.axis.norm());
      double hh = 0.5 * b.thickness;
      h = {b.radius * std::sqrt(std::max(0.0, 1.0 - u.x * u.x)) +
               hh * std::abs(u.x),
           b.radius * std::sqrt(std::max(0.0, 1.0 - u.y * u.y)) +
               hh * std::abs(u.y),
           b.radius * std::sqrt(std::max(0.0, 1.0 - u.z * u.z)) +
               hh * std::abs(u.z)};
      break;
    }
  }
  lo = b.center - h;
  hi = b.center + h;
}

// Reject interpenetrating bodies (touching stacks are fine): the cross-body
// point kernel diverges inside overlapping mass. Conservative: bounding
// boxes overlapping by more than a quarter voxel are treated as overlap.
void check_no_interpenetration(const MassBody& a, const MassBody& b,
                               double eps) {
  Vec3 alo, ahi, blo, bhi;
  world_aabb(a, alo, ahi);
  world_aabb(b, blo, bhi);
  double ox = std::min(ahi.x, bhi.x) - std::max(alo.x, blo.x);
  double oy = std::min(ahi.y, bhi.y) - std::max(alo.y, blo.y);
  double oz = std::min(ahi.z, bhi.z) - std::max(alo.z, blo.z);
  if (ox > eps && oy > eps && oz > eps)
    throw DomainError(
        "bodies interpenetrate; cross-body quadrature requires "
        "non-overlapping bodies (face contact is allowed)");
}

// Cross-body energy sum 2 S_AB(0) - S_AB(v) - S_AB(-v) with the point
// kernel (densities and G excluded). Bodies must not interpenetrate.
double cross_energy(const WorldCells& a, const WorldCells& b, const Vec3& v,
                    int n_threads) {
  std::size_t na = a.x.size(), nb = b.x.size();
  double vx = v.x, vy = v.y, vz = v.z;
  int blocks = 128;
  double sum = parallel_block_sum(blocks, n_threads, [&](int blk) {
    std::size_t lo = na * static_cast<std::size_t>(blk) /
                     static_cast<std::size_t>(blocks);
    std::size_t hi = na * static_cast<std::size_t>(blk + 1) /
                     static_cast<std::size_t>(blocks);
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      double xi = a.x[i], yi = a.y[i], zi = a.z[i], wi = a.w[i];
      for (std::size_t j = 0; j < nb; ++j) {
        double ox = xi - b.x[j], oy = yi - b.y[j], oz = zi - b.z[j];
        double r02 = ox * ox + oy * oy + oz * oz;
        double rm = std::sqrt((ox - vx) * (ox - vx) + (oy - vy) * (oy - vy) +
                              (oz - vz) * (oz - vz));
        double rp = std::sqrt((ox + vx) * (ox + vx) + (oy + vy) * (oy + vy) +
                              (oz + vz) * (oz + vz));
        s += wi * b.w[j] * (2.0 / std::sqrt(r02) - 1.0 / rm - 1.0 / rp);
      }
    }
    return s;
  });
  return sum * a.cell_volume * b.cell_volume;
}

std::vector<int> level_counts(const QuadratureConfig& q) {
  std::vector<int> out;
  for (int l = q.refinement_levels - 1; l >= 0; --l)
    out.push_back(q.voxel_count_per_axis >> l);
  return out;
}

void check_converged(const std::vector<double>& estimates, double tol,
                     const char* what) {
  if (estimates.size() < 2) return;
  double fine = estimates.back();
  double prev = estimates[estimates.size() - 2];
  double scale = std::max(std::abs(fine), std::abs(prev));
  if (scale == 0.0) return;
  double rel = std::abs(fine - prev) / scale;
  if (rel > tol) {
    std::ostringstream msg;
    msg << what << " did not converge across refinement levels: achieved "
        << std::scientific << fine << " with relative change " << rel
        << " > tolerance " << tol;
    throw NumericalError(msg.str());
  }
}

double self_energy_sum(const MassBody& body, const Vec3& v_world, int n,
                       SelfInteractionRule rule, int n_threads) {
  BodyGrid g = make_grid(body, n);
  Vec3 v = g.world_to_body(v_world);
  if (g.separable) {
    SeparableClasses cls = build_classes(g);
    return separable_energy(g, cls, v, rule);
  }
  return sphere_energy(g, v, rule, n_threads);
}

}  // namespace

double mutual_energy_S(const MassBody& body, const Vec3& offset,
                       const QuadratureConfig& q) {
  body.validate();
  q.validate();
  int n_threads = detail::resolve_thread_count(q.n_threads);
  std::vector<double> estimates;
  for (int n : level_counts(q)) {
    BodyGrid g = make_grid(body, n);
    Vec3 d = g.world_to_body(offset);
    double s;
    if (g.separable) {
      SeparableClasses cls = build_classes(g);
      s = separable_S(g, cls, d, q.self_interaction_rule);
    } else {
      s = sphere_S(g, d, q.self_interaction_rule, n_threads);
    }
    estimates.push_back(body.density * body.density * s);
  }
  check_converged(estimates, q.convergence_tolerance, "mutual energy");
  return estimates.back();
}

double dp_energy_rigid(const std::vector<MassBody>& bodies,
                       const Vec3& displacement, const QuadratureConfig& q) {
  require(!bodies.empty(), "body set must not be empty");
  for (const MassBody& b : bodies) b.validate();
  q.validate();
  int n_threads = detail::resolve_thread_count(q.n_threads);
  PhysicalConstants consts;
  for (std::size_t i = 0; i + 1 < bodies.size(); ++i)
    for (std::size_t j = i + 1; j < bodies.size(); ++j) {
      double eps =
          0.25 * std::min(bodies[i].min_extent(), bodies[j].min_extent()) /
          q.voxel_count_per_axis;
      check_no_interpenetration(bodies[i], bodies[j], eps);
    }
  std::vector<double> estimates;
  for (int n : level_counts(q)) {
    Neumaier acc;
    std::vector<WorldCells> world;
    bool need_cross = bodies.size() > 1;
    for (const MassBody& b : bodies) {
      acc.add(b.density * b.density *
              self_energy_sum(b, displacement, n, q.self_interaction_rule,
                              n_threads));
      if (need_cross) world.push_back(world_cells(make_grid(b, n)));
    }
    for (std::size_t i = 0; i + 1 < bodies.size(); ++i)
      for (std::size_t j = i + 1; j < bodies.size(); ++j)
        acc.add(bodies[i].density * bodies[j].density *
                cross_energy(world[i], world[j], displacement, n_threads));
    estimates.push_back(consts.G * acc.get());
  }
  check_converged(estimates, q.convergence_tolerance,
                  "displacement self-energy");
  return std::max(0.0, estimates.back());
}

double sphere_oracle(double radius, double density, double displacement,
                     const PhysicalConstants& consts) {
  require(radius > 0.0, "oracle sphere radius must be positive");
  require(density > 0.0, "oracle sphere density must be positive");
  require(displacement >= 0.0, "oracle displacement must be >= 0");
  if (displacement == 0.0) return 0.0;
  double R = radius, d = displacement;
  double M = density * (4.0 / 3.0) * kPi * R * R * R;
  double s0 = 1.2 * M * M / R;

  // |potential| / G of the uniform sphere at radius r.
  auto phi = [&](double r) {
    return r <= R ? M * (3.0 * R * R - r * r) / (2.0 * R * R * R) : M / r;
  };
  // Area of the radius-r shell around one center inside the displaced ball.
  auto area = [&](double r) {
    if (r <= 0.0) return 0.0;
    if (d < R && r <= R - d) return 4.0 * kPi * r * r;
    double cap = R * R - (d - r) * (d - r);
    return cap > 0.0 ? kPi * r * cap / d : 0.0;
  };
  auto f = [&](double r) { return phi(r) * area(r); };

  std::function<double(double, double, double, double, double, double, int)>
      rec = [&](double a, double b, double fa, double fm, double fb,
                double whole, int depth) -> double {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double s2 = left + right;
    if (depth <= 0 || std::abs(s2 - whole) <= 1e-10 * std::abs(s2) + 1e-300)
      return s2 + (s2 - whole) / 15.0;
    return rec(a, m, fa, flm, fm, left, depth - 1) +
           rec(m, b, fm, frm, fb, right, depth - 1);
  };
  auto integrate = [&](double a, double b) {
    if (!(b > a)) return 0.0;
    double m = 0.5 * (a + b);
    double fa = f(a), fm = f(m), fb = f(b);
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return rec(a, b, fa, fm, fb, whole, 40);
  };

  double lo = std::max(0.0, d - R), hi = d + R;
  std::vector<double> cuts{lo};
  if (d < R) cuts.push_back(R - d);
  if (R > lo && R < hi) cuts.push_back(R);
  cuts.push_back(hi);
  std::sort(cuts.begin(), cuts.end());
  double s_d = 0.0;
  for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
    s_d += integrate(cuts[i], cuts[i + 1]);
  s_d *= density;
  return std::max(0.0, consts.G * (s0 - s_d));
}

QuadraticFit fit_quadratic_coefficient(const std::vector<MassBody>& bodies,
                                       const std::vector<double>& samples,
                                       const QuadratureConfig& q) {
  require(!bodies.empty(), "body set must not be empty");
  require(samples.size() >= 4,
          "quadratic fit requires at least 4 displacement samples");
  for (double d : samples)
    require(d > 0.0, "displacement samples must be positive");
  q.validate();

  double axial_side = 0.0;
  double min_side = kInf;
  for (const MassBody& b : bodies) {
    BodyGrid g = make_grid(b, q.voxel_count_per_axis);
    axial_side = std::max(axial_side, g.spacing.z);
    min_side = std::min(min_side, std::min({g.spacing.x, g.spacing.y,
                                            g.spacing.z}));
  }
  double max_sample = *std::max_element(samples.begin(), samples.end());
  require(max_sample >= 1e-6 * min_side,
          "quadratic fit is ill-conditioned: all displacement samples are "
          "vanishingly small relative to the voxel size");

  QuadraticFit fit;
  fit.displacements = samples;
  fit.resolution_limited = max_sample < 2.0 * axial_side;
  double num = 0.0, den = 0.0;
  for (double d : samples) {
    double e = dp_energy_rigid(bodies, {0.0, 0.0, d}, q);
    if (!(e > 0.0))
      throw DomainError(
          "quadratic fit is ill-conditioned: a sample energy vanished at "
          "the configured resolution");
    fit.energies.push_back(e);
    num += e * d * d;
    den += d * d * d * d;
  }
  fit.k = num / den;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    double res = fit.energies[i] - fit.k * samples[i] * samples[i];
    fit.residuals.push_back(res);
    fit.max_relative_residual =
        std::max(fit.max_relative_residual, std::abs(res) / fit.energies[i]);
  }
  return fit;
}

}  // namespace collapsim
