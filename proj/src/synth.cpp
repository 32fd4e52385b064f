#include "qreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include "qreg/error.hpp"

namespace qreg {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("io_synth", msg); }

Point3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  for (;;) {
    const Point3 v(g(rng), g(rng), g(rng));
    const double n = v.norm();
    if (n > 1e-12) return v / n;
  }
}

// Centre on the bounding box and scale to a maximum radius of 0.5.
std::vector<Point3> normalize_unit_diameter(std::vector<Point3> pts) {
  Point3 lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Point3 center = 0.5 * (lo + hi);
  double r = 0.0;
  for (auto& p : pts) {
    p -= center;
    r = std::max(r, p.norm());
  }
  if (r > 0.0) {
    for (auto& p : pts) p *= 0.5 / r;
  }
  return pts;
}

std::vector<Point3> sphere_points(std::size_t n, std::mt19937_64& rng) {
  std::vector<Point3> pts;
  pts.reserve(n);
  // Antipodal pairs keep the centroid at the origin; odd counts finish with
  // an equilateral triangle on a great circle.
  const std::size_t tail = n % 2 == 1 ? 3 : 0;
  for (std::size_t i = 0; i < (n - tail) / 2; ++i) {
    const Point3 u = random_unit(rng);
    pts.push_back(0.5 * u);
    pts.push_back(-0.5 * u);
  }
  if (tail) {
    const Point3 a = random_unit(rng);
    const Point3 b = a.cross(std::abs(a.x()) < 0.9 ? Point3::UnitX() : Point3::UnitY()).normalized();
    const Point3 c = a.cross(b);
    for (int k = 0; k < 3; ++k) {
      const double t = 2.0 * std::numbers::pi * k / 3.0;
      pts.push_back(0.5 * (std::cos(t) * b + std::sin(t) * c));
    }
  }
  return pts;
}

std::vector<Point3> cube_points(std::size_t n, std::mt19937_64& rng) {
  std::size_t m = 1;
  while (6 * m * m < n) ++m;
  std::vector<Point3> lattice;
  lattice.reserve(6 * m * m);
  for (int axis = 0; axis < 3; ++axis) {
    for (double side : {0.0, 1.0}) {
      for (std::size_t a = 0; a < m; ++a) {
        for (std::size_t b = 0; b < m; ++b) {
          Point3 p;
          p[axis] = side;
          p[(axis + 1) % 3] = (static_cast<double>(a) + 0.5) / static_cast<double>(m);
          p[(axis + 2) % 3] = (static_cast<double>(b) + 0.5) / static_cast<double>(m);
          lattice.push_back(p);
        }
      }
    }
  }
  std::shuffle(lattice.begin(), lattice.end(), rng);
  lattice.resize(n);
  return lattice;
}

// An L-shaped pair of rectangles of different sizes.
std::vector<Point3> two_plane_points(std::size_t n, std::mt19937_64& rng) {
  constexpr double kFloorArea = 1.0 * 0.6;
  constexpr double kWallArea = 0.6 * 0.4;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (u(rng) < kFloorArea / (kFloorArea + kWallArea)) {
      pts.emplace_back(u(rng), 0.6 * u(rng), 0.0);
    } else {
      pts.emplace_back(0.0, 0.6 * u(rng), 0.4 * u(rng));
    }
  }
  return pts;
}

// Conical helical ribbon: the radius grows along the axis so no two stretches
// of the ribbon are congruent.
std::vector<Point3> helix_points(std::size_t n, std::mt19937_64& rng) {
  constexpr double kTurns = 2.25;
  constexpr double kHalfWidth = 0.06;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Point3> pts;
  pts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = u(rng);
    const double w = kHalfWidth * (2.0 * u(rng) - 1.0);
    const double theta = 2.0 * std::numbers::pi * kTurns * t;
    const double r = 0.15 + 0.35 * t;
    pts.emplace_back(r * std::cos(theta), r * std::sin(theta), 0.8 * t + w);
  }
  return pts;
}

}  // namespace

void SynthConfig::validate() const {
  if (n_points < 1) fail("n_points must be >= 1");
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) fail("keep fraction must lie in (0, 1]");
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) fail("noise sigma must be finite and >= 0");
  if (!(max_rot_deg >= 0.0 && max_rot_deg <= 180.0)) fail("max rotation must lie in [0, 180] degrees");
  if (!(max_trans >= 0.0) || !std::isfinite(max_trans)) fail("max translation must be finite and >= 0");
}

PointCloud crop_half_space(const PointCloud& c, double keep_fraction, const Point3& direction) {
  if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) fail("keep fraction must lie in (0, 1]");
  const std::size_t n = c.size();
  const auto keep = static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(n)));
  if (keep == 0) fail("crop would remove every point");
  if (keep >= n) return c;
  const Point3 center = c.centroid();
  std::vector<double> proj(n);
  for (std::size_t i = 0; i < n; ++i) proj[i] = (c.point(i) - center).dot(direction);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return proj[a] > proj[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  std::vector<Point3> pts;
  std::vector<Point3> nrm;
  for (auto i : order) {
    pts.push_back(c.point(i));
    if (c.has_normals()) nrm.push_back(c.normal(i));
  }
  return c.has_normals() ? PointCloud(std::move(pts), std::move(nrm)) : PointCloud(std::move(pts));
}

SynthPair synth_pair(const SynthConfig& cfg, const PointCloud& base) {
  cfg.validate();
  if (base.size() < cfg.n_points) {
    fail("base cloud has " + std::to_string(base.size()) + " points, " + std::to_string(cfg.n_points) + " requested");
  }
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::size_t> ids(base.size());
  std::iota(ids.begin(), ids.end(), 0);
  for (std::size_t i = 0; i < cfg.n_points; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, ids.size() - 1);
    std::swap(ids[i], ids[pick(rng)]);
  }
  ids.resize(cfg.n_points);
  std::sort(ids.begin(), ids.end());
  std::vector<Point3> pts;
  std::vector<Point3> nrm;
  for (auto i : ids) {
    pts.push_back(base.point(i));
    if (base.has_normals()) nrm.push_back(base.normal(i));
  }
  const PointCloud subset = base.has_normals() ? PointCloud(pts, nrm) : PointCloud(pts);

  const Point3 src_dir = random_unit(rng);
  const Point3 ref_dir = random_unit(rng);
  auto corrupt = [&](const Point3& dir) {
    PointCloud c = crop_half_space(subset, cfg.keep_fraction, dir);
    if (cfg.noise_sigma == 0.0) return c;
    std::normal_distribution<double> g(0.0, cfg.noise_sigma);
    std::vector<Point3> noisy = c.points();
    for (auto& p : noisy) p += Point3(g(rng), g(rng), g(rng));
    return c.has_normals() ? PointCloud(std::move(noisy), c.normals()) : PointCloud(std::move(noisy));
  };
  SynthPair out;
  out.src = corrupt(src_dir);
  const PointCloud ref_local = corrupt(ref_dir);
  out.gt = sample_random_transform(cfg.max_rot_deg, cfg.max_trans, rng());
  out.ref = apply_transform(out.gt, ref_local);
  return out;
}

BaseShape parse_shape(const std::string& s) {
  if (s == "cube_grid") return BaseShape::cube_grid;
  if (s == "sphere") return BaseShape::sphere;
  if (s == "two_planes") return BaseShape::two_planes;
  if (s == "helix") return BaseShape::helix;
  fail("unknown shape '" + s + "'");
}

const char* to_string(BaseShape s) {
  switch (s) {
    case BaseShape::cube_grid: return "cube_grid";
    case BaseShape::sphere: return "sphere";
    case BaseShape::two_planes: return "two_planes";
    case BaseShape::helix: return "helix";
  }
  return "?";
}

PointCloud make_base_shape(BaseShape shape, std::size_t n, std::uint64_t seed) {
  if (n < 8) fail("base shapes need at least 8 points");
  std::mt19937_64 rng(seed);
  switch (shape) {
    case BaseShape::sphere: return PointCloud(sphere_points(n, rng));
    case BaseShape::cube_grid: return PointCloud(normalize_unit_diameter(cube_points(n, rng)));
    case BaseShape::two_planes: return PointCloud(normalize_unit_diameter(two_plane_points(n, rng)));
    case BaseShape::helix: return PointCloud(normalize_unit_diameter(helix_points(n, rng)));
  }
  fail("unknown shape");
}

}  // namespace qreg
