#include "qreg/knn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <utility>

#include "qreg/error.hpp"

namespace qreg {

namespace {

using Candidate = std::pair<double, std::uint32_t>;  // (squared distance, index)

std::vector<Neighbor> to_neighbors(std::vector<Candidate>& c) {
  std::vector<Neighbor> out;
  out.reserve(c.size());
  for (const auto& [d2, i] : c) out.push_back({i, std::sqrt(d2)});
  return out;
}

void check_k(std::size_t k, std::size_t n) {
  if (k == 0) throw Error("knn", "k must be at least 1");
  if (k > n) throw Error("knn", "k (" + std::to_string(k) + ") exceeds point count (" + std::to_string(n) + ")");
}

}  // namespace

NeighborIndex::NeighborIndex(const PointCloud& cloud, KnnStrategy strategy)
    : points_(cloud.points()), strategy_(strategy) {
  if (points_.empty()) throw Error("knn", "cannot index an empty cloud");
  if (points_.size() > std::numeric_limits<std::uint32_t>::max()) throw Error("knn", "cloud too large");
  if (strategy_ == KnnStrategy::automatic) {
    strategy_ = points_.size() >= kAutoGridThreshold ? KnnStrategy::grid : KnnStrategy::brute;
  }
  build_grid();
}

// Buckets are built for both strategies so every index has a well-defined
// cell; only the grid strategy uses them for queries.
void NeighborIndex::build_grid() {
  Point3 lo = points_.front();
  Point3 hi = points_.front();
  for (const auto& p : points_) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const Point3 extent = hi - lo;
  const double diag = extent.norm();
  const double n = static_cast<double>(points_.size());
  cell_size_ = diag > 0.0 ? diag / std::cbrt(n) : 1.0;

  auto dims_for = [&](double cell) {
    std::array<std::int64_t, 3> d{};
    for (int a = 0; a < 3; ++a) d[a] = static_cast<std::int64_t>(std::floor(extent[a] / cell)) + 1;
    return d;
  };
  dims_ = dims_for(cell_size_);
  for (;;) {
    const double cells = static_cast<double>(dims_[0]) * static_cast<double>(dims_[1]) * static_cast<double>(dims_[2]);
    if (cells <= static_cast<double>(kMaxCells)) break;
    cell_size_ *= std::cbrt(cells / static_cast<double>(kMaxCells)) * 1.01;
    dims_ = dims_for(cell_size_);
  }
  origin_ = lo;

  const std::size_t ncells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  std::vector<std::uint32_t> cell_of(points_.size());
  cell_start_.assign(ncells + 1, 0);
  for (std::size_t i = 0; i < points_.size(); ++i) {
    std::int64_t c[3];
    for (int a = 0; a < 3; ++a) {
      c[a] = std::clamp<std::int64_t>(static_cast<std::int64_t>(std::floor((points_[i][a] - origin_[a]) / cell_size_)),
                                      0, dims_[a] - 1);
    }
    cell_of[i] = static_cast<std::uint32_t>((c[2] * dims_[1] + c[1]) * dims_[0] + c[0]);
    ++cell_start_[cell_of[i] + 1];
  }
  for (std::size_t c = 0; c < ncells; ++c) cell_start_[c + 1] += cell_start_[c];
  cell_items_.resize(points_.size());
  std::vector<std::uint32_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < points_.size(); ++i) cell_items_[fill[cell_of[i]]++] = static_cast<std::uint32_t>(i);
}

std::span<const std::uint32_t> NeighborIndex::bucket(std::size_t cell) const {
  return {cell_items_.data() + cell_start_[cell], cell_items_.data() + cell_start_[cell + 1]};
}

std::vector<Neighbor> NeighborIndex::query(const Point3& q, std::size_t k) const {
  check_k(k, points_.size());
  if (!q.allFinite()) throw Error("knn", "query point is not finite");
  return strategy_ == KnnStrategy::grid ? query_grid(q, k) : query_brute(q, k);
}

std::vector<Neighbor> NeighborIndex::query_brute(const Point3& q, std::size_t k) const {
  std::vector<Candidate> all(points_.size());
  for (std::size_t i = 0; i < points_.size(); ++i) {
    all[i] = {(points_[i] - q).squaredNorm(), static_cast<std::uint32_t>(i)};
  }
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k), all.end());
  all.resize(k);
  return to_neighbors(all);
}

// Expanding Chebyshev rings of cells around the query cell. After ring r every
// unvisited point is at least r * cell_size away, so the search stops once the
// k-th best squared distance is strictly below that bound.
std::vector<Neighbor> NeighborIndex::query_grid(const Point3& q, std::size_t k) const {
  std::int64_t qc[3];
  std::int64_t r_max = 0;
  for (int a = 0; a < 3; ++a) {
    qc[a] = static_cast<std::int64_t>(std::floor((q[a] - origin_[a]) / cell_size_));
    r_max = std::max({r_max, std::abs(qc[a]), std::abs(dims_[a] - 1 - qc[a])});
  }

  std::priority_queue<Candidate> best;  // max-heap on (d2, index)
  auto visit = [&](std::int64_t x, std::int64_t y, std::int64_t z) {
    const auto cell = static_cast<std::size_t>((z * dims_[1] + y) * dims_[0] + x);
    for (std::uint32_t i : bucket(cell)) {
      const Candidate c{(points_[i] - q).squaredNorm(), i};
      if (best.size() < k) {
        best.push(c);
      } else if (c < best.top()) {
        best.pop();
        best.push(c);
      }
    }
  };

  for (std::int64_t r = 0; r <= r_max; ++r) {
    const std::int64_t z0 = std::max<std::int64_t>(qc[2] - r, 0), z1 = std::min(qc[2] + r, dims_[2] - 1);
    const std::int64_t y0 = std::max<std::int64_t>(qc[1] - r, 0), y1 = std::min(qc[1] + r, dims_[1] - 1);
    const std::int64_t x0 = std::max<std::int64_t>(qc[0] - r, 0), x1 = std::min(qc[0] + r, dims_[0] - 1);
    for (std::int64_t z = z0; z <= z1; ++z) {
      const bool z_shell = std::abs(z - qc[2]) == r;
      for (std::int64_t y = y0; y <= y1; ++y) {
        if (z_shell || std::abs(y - qc[1]) == r) {
          for (std::int64_t x = x0; x <= x1; ++x) visit(x, y, z);
        } else {
          if (qc[0] - r >= 0 && qc[0] - r < dims_[0]) visit(qc[0] - r, y, z);
          if (r > 0 && qc[0] + r >= 0 && qc[0] + r < dims_[0]) visit(qc[0] + r, y, z);
        }
      }
    }
    if (best.size() == k) {
      const double bound = static_cast<double>(r) * cell_size_;
      if (best.top().first < bound * bound) break;
    }
  }

  std::vector<Candidate> out(best.size());
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = best.top();
    best.pop();
  }
  return to_neighbors(out);
}

NeighborIndex build_index(const PointCloud& c, KnnStrategy strategy) { return NeighborIndex(c, strategy); }

std::vector<Neighbor> knn(const NeighborIndex& idx, const Point3& query, std::size_t k) {
  return idx.query(query, k);
}

NeighborLists knn_all(const NeighborIndex& idx, const PointCloud& queries, std::size_t k) {
  check_k(k, idx.size());
  NeighborLists out;
  out.k = k;
  out.indices.resize(queries.size() * k);
  out.distances.resize(queries.size() * k);
  const auto n = static_cast<std::int64_t>(queries.size());
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t q = 0; q < n; ++q) {
    const auto nb = idx.query(queries.point(static_cast<std::size_t>(q)), k);
    for (std::size_t j = 0; j < k; ++j) {
      out.indices[static_cast<std::size_t>(q) * k + j] = nb[j].index;
      out.distances[static_cast<std::size_t>(q) * k + j] = nb[j].distance;
    }
  }
  return out;
}

}  // namespace qreg
