#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "qreg/geometry.hpp"

namespace qreg {

// dim10_baseline: angles(4) | absolute neighbour position(3) | relative offset(3)
// dim7_cascade:   angles(4) | relative offset(3)
enum class DescriptorVariant { dim10_baseline, dim7_cascade };

constexpr int descriptor_dim(DescriptorVariant v) {
  return v == DescriptorVariant::dim10_baseline ? 10 : 7;
}

// Fixed-capacity (<= 10) vector; no heap allocation.
using LocalDescriptor = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 10, 1>;

// Angle in [0, pi] between two vectors via atan2(|a x b|, a . b).
double vector_angle(const Point3& a, const Point3& b);

// PCA normals over k nearest neighbours, oriented away from the global
// centroid. Throws naming the point index if a neighbourhood collapses.
PointCloud estimate_normals(const PointCloud& c, std::size_t k);

std::vector<LocalDescriptor> local_descriptors(const PointCloud& c, std::size_t i,
                                               std::span<const std::uint32_t> neighbor_ids,
                                               DescriptorVariant variant);

// Writes the K descriptors of point i as rows of `out` (K x dim).
void descriptor_block(const PointCloud& c, std::size_t i, std::span<const std::uint32_t> neighbor_ids,
                      DescriptorVariant variant, Eigen::Ref<Eigen::MatrixXd> out);

}  // namespace qreg
