#include "qreg/descriptors.hpp"

#include <Eigen/Eigenvalues>
#include <atomic>
#include <cmath>
#include <limits>

#include "qreg/error.hpp"
#include "qreg/knn.hpp"

namespace qreg {

double vector_angle(const Point3& a, const Point3& b) { return std::atan2(a.cross(b).norm(), a.dot(b)); }

PointCloud estimate_normals(const PointCloud& c, std::size_t k) {
  if (k < 3) throw Error("descriptors", "normal estimation needs k >= 3");
  if (c.size() < k) {
    throw Error("descriptors", "normal estimation needs at least k = " + std::to_string(k) + " points");
  }
  const NeighborIndex idx(c, KnnStrategy::automatic);
  const NeighborLists nb = knn_all(idx, c, k);
  const Point3 center = c.centroid();
  std::vector<Point3> normals(c.size());
  std::atomic<std::int64_t> degenerate{-1};

  const auto n = static_cast<std::int64_t>(c.size());
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const std::uint32_t* ids = nb.row(static_cast<std::size_t>(i));
    Point3 mean = Point3::Zero();
    for (std::size_t j = 0; j < k; ++j) mean += c.point(ids[j]);
    mean /= static_cast<double>(k);
    Matrix3 cov = Matrix3::Zero();
    for (std::size_t j = 0; j < k; ++j) {
      const Point3 d = c.point(ids[j]) - mean;
      cov.noalias() += d * d.transpose();
    }
    if (!(cov.trace() > std::numeric_limits<double>::min())) {
      // Keep the lowest failing index so the message is thread-count independent.
      std::int64_t seen = degenerate.load();
      while ((seen < 0 || i < seen) && !degenerate.compare_exchange_weak(seen, i)) {
      }
      continue;
    }
    Eigen::SelfAdjointEigenSolver<Matrix3> eig(cov);
    Point3 nrm = eig.eigenvectors().col(0).normalized();  // smallest eigenvalue first
    if (nrm.dot(center - c.point(static_cast<std::size_t>(i))) > 0.0) nrm = -nrm;
    normals[static_cast<std::size_t>(i)] = nrm;
  }
  if (degenerate.load() >= 0) {
    throw Error("descriptors", "degenerate neighbourhood at point " + std::to_string(degenerate.load()) +
                                   " (all neighbours coincide)");
  }
  return PointCloud(c.points(), std::move(normals));
}

namespace {

void fill_descriptor(const PointCloud& c, std::size_t i, std::uint32_t j, DescriptorVariant variant,
                     double* out) {
  const Point3& x = c.point(i);
  const Point3& y = c.point(j);
  const Point3& nx = c.normal(i);
  const Point3& ny = c.normal(j);
  const Point3 d = y - x;
  const double dist = d.norm();
  const bool zero = dist == 0.0;
  out[0] = zero ? 0.0 : vector_angle(nx, d);
  out[1] = zero ? 0.0 : vector_angle(ny, d);
  out[2] = vector_angle(nx, ny);
  out[3] = dist;
  int at = 4;
  if (variant == DescriptorVariant::dim10_baseline) {
    for (int a = 0; a < 3; ++a) out[at++] = y[a];
  }
  for (int a = 0; a < 3; ++a) out[at++] = d[a];
}

void check_inputs(const PointCloud& c, std::size_t i, std::span<const std::uint32_t> ids) {
  if (!c.has_normals()) throw Error("descriptors", "local descriptors need normals");
  if (ids.empty()) throw Error("descriptors", "empty neighbour list");
  if (i >= c.size()) throw Error("descriptors", "point index out of range");
  for (auto j : ids) {
    if (j >= c.size()) throw Error("descriptors", "neighbour index out of range");
  }
}

}  // namespace

std::vector<LocalDescriptor> local_descriptors(const PointCloud& c, std::size_t i,
                                               std::span<const std::uint32_t> neighbor_ids,
                                               DescriptorVariant variant) {
  check_inputs(c, i, neighbor_ids);
  std::vector<LocalDescriptor> out;
  out.reserve(neighbor_ids.size());
  for (auto j : neighbor_ids) {
    LocalDescriptor h(descriptor_dim(variant));
    fill_descriptor(c, i, j, variant, h.data());
    out.push_back(h);
  }
  return out;
}

void descriptor_block(const PointCloud& c, std::size_t i, std::span<const std::uint32_t> neighbor_ids,
                      DescriptorVariant variant, Eigen::Ref<Eigen::MatrixXd> out) {
  check_inputs(c, i, neighbor_ids);
  const int dim = descriptor_dim(variant);
  if (out.rows() != static_cast<Eigen::Index>(neighbor_ids.size()) || out.cols() != dim) {
    throw Error("descriptors", "descriptor block has the wrong shape");
  }
  double row[10];
  for (std::size_t r = 0; r < neighbor_ids.size(); ++r) {
    fill_descriptor(c, i, neighbor_ids[r], variant, row);
    for (int a = 0; a < dim; ++a) out(static_cast<Eigen::Index>(r), a) = row[a];
  }
}

}  // namespace qreg
