#pragma once

#include <span>

#include "qreg/geometry.hpp"

namespace qreg {

struct Svd3Result {
  Matrix3 u;
  Matrix3 v;
  Eigen::Vector3d s;  // descending, nonnegative
};

// One-sided Jacobi SVD for 3x3 matrices.
Svd3Result svd3(const Matrix3& a);

// Minimises sum_i w_i |R x_i + t - target_i|^2 over proper rotations.
RigidTransform weighted_procrustes(const PointCloud& src, const PointCloud& targets,
                                   std::span<const double> weights);

}  // namespace qreg
