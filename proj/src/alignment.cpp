#include "qreg/alignment.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "qreg/error.hpp"

namespace qreg {

namespace {

constexpr int kMaxSweeps = 30;
constexpr double kOffDiagonalTol = 1e-12;
constexpr double kDegenerateRatio = 1e-12;

// Unit vector orthogonal to u.
Point3 any_orthogonal(const Point3& u) {
  const Point3 axis = std::abs(u.x()) < 0.9 ? Point3::UnitX() : Point3::UnitY();
  return u.cross(axis).normalized();
}

}  // namespace

Svd3Result svd3(const Matrix3& a) {
  if (a.hasNaN()) throw Error("alignment", "svd3 input contains NaN");
  if (!a.allFinite()) throw Error("alignment", "svd3 input is not finite");

  Matrix3 w = a;
  Matrix3 v = Matrix3::Identity();
  constexpr std::array<std::pair<int, int>, 3> pairs{{{0, 1}, {0, 2}, {1, 2}}};
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    bool rotated = false;
    for (auto [p, q] : pairs) {
      const double alpha = w.col(p).squaredNorm();
      const double beta = w.col(q).squaredNorm();
      const double gamma = w.col(p).dot(w.col(q));
      if (gamma == 0.0 || std::abs(gamma) <= kOffDiagonalTol * std::sqrt(alpha * beta)) continue;
      rotated = true;
      const double zeta = (beta - alpha) / (2.0 * gamma);
      const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
      const double c = 1.0 / std::sqrt(1.0 + t * t);
      const double s = c * t;
      for (Matrix3* m : {&w, &v}) {
        const Point3 cp = m->col(p);
        const Point3 cq = m->col(q);
        m->col(p) = c * cp - s * cq;
        m->col(q) = s * cp + c * cq;
      }
    }
    if (!rotated) break;
  }

  std::array<int, 3> order{0, 1, 2};
  const Eigen::Vector3d norms(w.col(0).norm(), w.col(1).norm(), w.col(2).norm());
  std::stable_sort(order.begin(), order.end(), [&](int i, int j) { return norms[i] > norms[j]; });

  Svd3Result r;
  Matrix3 ws;
  for (int k = 0; k < 3; ++k) {
    ws.col(k) = w.col(order[k]);
    r.v.col(k) = v.col(order[k]);
    r.s[k] = norms[order[k]];
  }

  // Columns of U from the rotated columns; the second is re-orthogonalised and
  // the third completed by a cross product so U stays orthogonal even for
  // rank-deficient or ill-conditioned input.
  if (r.s[0] == 0.0) {
    r.u = Matrix3::Identity();
    return r;
  }
  const Point3 u0 = ws.col(0) / r.s[0];
  Point3 u1 = ws.col(1) - u0.dot(ws.col(1)) * u0;
  const double n1 = u1.norm();
  u1 = n1 > 1e-300 ? Point3(u1 / n1) : any_orthogonal(u0);
  Point3 u2 = u0.cross(u1).normalized();
  if (u2.dot(ws.col(2)) < 0.0) u2 = -u2;
  r.u.col(0) = u0;
  r.u.col(1) = u1;
  r.u.col(2) = u2;
  return r;
}

RigidTransform weighted_procrustes(const PointCloud& src, const PointCloud& targets, std::span<const double> weights) {
  const std::size_t n = src.size();
  if (targets.size() != n || weights.size() != n) {
    throw Error("alignment", "source, targets and weights must have the same length");
  }
  if (n < 3) throw Error("alignment", "weighted Procrustes needs at least 3 points");
  double wsum = 0.0;
  std::size_t support = 0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw Error("alignment", "weights must be finite and nonnegative");
    wsum += w;
    if (w > 0.0) ++support;
  }
  if (support < 3) throw Error("alignment", "fewer than 3 points carry positive weight");
  if (!(wsum > 1e-12)) throw Error("alignment", "total weight is effectively zero");

  Point3 xbar = Point3::Zero();
  Point3 ybar = Point3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    xbar += weights[i] * src.point(i);
    ybar += weights[i] * targets.point(i);
  }
  xbar /= wsum;
  ybar /= wsum;
  Matrix3 h = Matrix3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    if (weights[i] == 0.0) continue;
    h.noalias() += weights[i] * (src.point(i) - xbar) * (targets.point(i) - ybar).transpose();
  }
  h /= wsum;

  const Svd3Result svd = svd3(h);
  if (!(svd.s[0] > 0.0) || svd.s[1] < kDegenerateRatio * svd.s[0]) {
    throw Error("alignment", "degenerate weighted support: points are collinear or coincident");
  }
  Matrix3 fix = Matrix3::Identity();
  fix(2, 2) = (svd.v * svd.u.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Matrix3 r = svd.v * fix * svd.u.transpose();
  return RigidTransform(r, ybar - r * xbar);
}

}  // namespace qreg
