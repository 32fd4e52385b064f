#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace qreg {

using Point3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;

// Ordered 3D points with optional unit normals of the same length.
class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Point3> points);
  PointCloud(std::vector<Point3> points, std::vector<Point3> normals);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  bool has_normals() const noexcept { return normals_.has_value(); }

  const std::vector<Point3>& points() const noexcept { return points_; }
  const Point3& point(std::size_t i) const { return points_[i]; }
  // Throws if the cloud carries no normals.
  const std::vector<Point3>& normals() const;
  const Point3& normal(std::size_t i) const { return normals()[i]; }

  Point3 centroid() const;
  PointCloud without_normals() const { return PointCloud(points_); }

 private:
  std::vector<Point3> points_;
  std::optional<std::vector<Point3>> normals_;
};

// Proper rigid motion p -> R p + t. Construction checks orthonormality and
// det(R) = +1 to 1e-9.
class RigidTransform {
 public:
  static constexpr double kTolerance = 1e-9;

  RigidTransform() : rotation_(Matrix3::Identity()), translation_(Point3::Zero()) {}
  RigidTransform(const Matrix3& rotation, const Point3& translation);

  static RigidTransform identity() { return {}; }

  const Matrix3& rotation() const noexcept { return rotation_; }
  const Point3& translation() const noexcept { return translation_; }

  Point3 apply(const Point3& p) const { return rotation_ * p + translation_; }
  RigidTransform inverse() const;

 private:
  Matrix3 rotation_;
  Point3 translation_;
};

struct Metrics {
  double re_deg = 0.0;
  double te = 0.0;
  double cd = 0.0;
};

Matrix3 rotation_x(double radians);
Matrix3 rotation_y(double radians);
Matrix3 rotation_z(double radians);
// Intrinsic Z-Y-X Euler angles: R = Rz(z) * Ry(y) * Rx(x).
Matrix3 rotation_zyx(double z, double y, double x);

double deg_to_rad(double deg);
double rad_to_deg(double rad);

PointCloud apply_transform(const RigidTransform& t, const PointCloud& c);

// Returns T2 o T1, i.e. first T1 then T2.
RigidTransform compose(const RigidTransform& t2, const RigidTransform& t1);

// Three Euler angles uniform in [0, max_rot_deg], translation components
// uniform in [-max_trans, max_trans]. Deterministic for a given seed.
RigidTransform sample_random_transform(double max_rot_deg, double max_trans, std::uint64_t seed);

// Angle of R_a * R_b^T in degrees; argument of arccos clamped to [-1, 1].
double rotation_error_deg(const Matrix3& ra, const Matrix3& rb);

// Symmetric squared chamfer: mean squared nearest-neighbour distance, averaged
// over both directions.
double chamfer_distance(const PointCloud& a, const PointCloud& b);

Metrics metrics(const RigidTransform& est, const RigidTransform& gt, const PointCloud& src,
                const PointCloud& ref);

}  // namespace qreg
