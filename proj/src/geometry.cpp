#include "qreg/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "qreg/error.hpp"
#include "qreg/knn.hpp"

namespace qreg {

namespace {

void check_finite(const std::vector<Point3>& pts, const char* what) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (!pts[i].allFinite()) {
      throw Error("geometry", std::string(what) + " " + std::to_string(i) + " is not finite");
    }
  }
}

}  // namespace

PointCloud::PointCloud(std::vector<Point3> points) : points_(std::move(points)) {
  check_finite(points_, "point");
}

PointCloud::PointCloud(std::vector<Point3> points, std::vector<Point3> normals)
    : points_(std::move(points)), normals_(std::move(normals)) {
  check_finite(points_, "point");
  if (normals_->size() != points_.size()) {
    throw Error("geometry", "normal count " + std::to_string(normals_->size()) + " differs from point count " +
                                std::to_string(points_.size()));
  }
  check_finite(*normals_, "normal");
  for (std::size_t i = 0; i < normals_->size(); ++i) {
    if (std::abs((*normals_)[i].norm() - 1.0) > 1e-6) {
      throw Error("geometry", "normal " + std::to_string(i) + " is not unit length");
    }
  }
}

const std::vector<Point3>& PointCloud::normals() const {
  if (!normals_) throw Error("geometry", "cloud has no normals");
  return *normals_;
}

Point3 PointCloud::centroid() const {
  Point3 c = Point3::Zero();
  for (const auto& p : points_) c += p;
  return points_.empty() ? c : Point3(c / static_cast<double>(points_.size()));
}

RigidTransform::RigidTransform(const Matrix3& rotation, const Point3& translation)
    : rotation_(rotation), translation_(translation) {
  if (!rotation.allFinite() || !translation.allFinite()) {
    throw Error("geometry", "transform has non-finite entries");
  }
  const Matrix3 gram = rotation.transpose() * rotation;
  if ((gram - Matrix3::Identity()).cwiseAbs().maxCoeff() > kTolerance) {
    throw Error("geometry", "rotation is not orthonormal");
  }
  if (std::abs(rotation.determinant() - 1.0) > kTolerance) {
    throw Error("geometry", "rotation determinant is not +1");
  }
}

RigidTransform RigidTransform::inverse() const {
  const Matrix3 rt = rotation_.transpose();
  return RigidTransform(rt, -(rt * translation_));
}

Matrix3 rotation_x(double a) {
  Matrix3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

Matrix3 rotation_y(double a) {
  Matrix3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Matrix3 rotation_z(double a) {
  Matrix3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

Matrix3 rotation_zyx(double z, double y, double x) { return rotation_z(z) * rotation_y(y) * rotation_x(x); }

double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

PointCloud apply_transform(const RigidTransform& t, const PointCloud& c) {
  std::vector<Point3> pts;
  pts.reserve(c.size());
  for (const auto& p : c.points()) pts.push_back(t.apply(p));
  if (!c.has_normals()) return PointCloud(std::move(pts));
  std::vector<Point3> nrm;
  nrm.reserve(c.size());
  for (const auto& n : c.normals()) nrm.push_back(t.rotation() * n);
  return PointCloud(std::move(pts), std::move(nrm));
}

RigidTransform compose(const RigidTransform& t2, const RigidTransform& t1) {
  return RigidTransform(t2.rotation() * t1.rotation(), t2.rotation() * t1.translation() + t2.translation());
}

RigidTransform sample_random_transform(double max_rot_deg, double max_trans, std::uint64_t seed) {
  if (!(max_rot_deg >= 0.0 && max_rot_deg <= 180.0)) {
    throw Error("geometry", "max_rot_deg must lie in [0, 180]");
  }
  if (!(max_trans >= 0.0) || !std::isfinite(max_trans)) {
    throw Error("geometry", "max_trans must be finite and >= 0");
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(0.0, max_rot_deg);
  std::uniform_real_distribution<double> shift(-max_trans, max_trans);
  const double az = angle(rng);
  const double ay = angle(rng);
  const double ax = angle(rng);
  Point3 t;
  for (int i = 0; i < 3; ++i) t[i] = max_trans == 0.0 ? 0.0 : shift(rng);
  return RigidTransform(rotation_zyx(deg_to_rad(az), deg_to_rad(ay), deg_to_rad(ax)), t);
}

double rotation_error_deg(const Matrix3& ra, const Matrix3& rb) {
  // atan2(sin, cos) instead of acos: acos cannot resolve angles below ~2e-8 rad.
  const Matrix3 d = ra * rb.transpose();
  const double c = (d.trace() - 1.0) / 2.0;
  const double s = 0.5 * Point3(d(2, 1) - d(1, 2), d(0, 2) - d(2, 0), d(1, 0) - d(0, 1)).norm();
  return rad_to_deg(std::atan2(s, c));
}

namespace {

double mean_nn_sq(const PointCloud& from, const PointCloud& to) {
  const NeighborIndex idx(to, KnnStrategy::automatic);
  double sum = 0.0;
  for (const auto& p : from.points()) {
    const double d = idx.query(p, 1).front().distance;
    sum += d * d;
  }
  return sum / static_cast<double>(from.size());
}

}  // namespace

double chamfer_distance(const PointCloud& a, const PointCloud& b) {
  if (a.empty() || b.empty()) throw Error("geometry", "chamfer distance of an empty cloud");
  return 0.5 * (mean_nn_sq(a, b) + mean_nn_sq(b, a));
}

// `ref` is accepted for interface symmetry; the chamfer term compares the
// source under both transforms.
Metrics metrics(const RigidTransform& est, const RigidTransform& gt, const PointCloud& src,
                const PointCloud& /*ref*/) {
  Metrics m;
  m.re_deg = rotation_error_deg(est.rotation(), gt.rotation());
  m.te = (est.translation() - gt.translation()).norm();
  m.cd = chamfer_distance(apply_transform(est, src), apply_transform(gt, src));
  return m;
}

}  // namespace qreg
