#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "qreg/geometry.hpp"

namespace qreg {

enum class KnnStrategy { brute, grid, automatic };

struct Neighbor {
  std::uint32_t index = 0;
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

// Neighbour lists for a batch of queries: row q holds k entries.
struct NeighborLists {
  std::size_t k = 0;
  std::vector<std::uint32_t> indices;  // row-major, queries x k
  std::vector<double> distances;

  std::size_t size() const noexcept { return k == 0 ? 0 : indices.size() / k; }
  const std::uint32_t* row(std::size_t q) const { return indices.data() + q * k; }
};

// Exact k-NN over a fixed cloud. Immutable after construction; queries are
// safe from many threads.
class NeighborIndex {
 public:
  // automatic selects the grid for N >= kAutoGridThreshold.
  static constexpr std::size_t kAutoGridThreshold = 2048;
  static constexpr std::size_t kMaxCells = 1'000'000;

  NeighborIndex(const PointCloud& cloud, KnnStrategy strategy);

  KnnStrategy strategy() const noexcept { return strategy_; }
  std::size_t size() const noexcept { return points_.size(); }
  double cell_size() const noexcept { return cell_size_; }
  std::size_t cell_count() const noexcept { return cell_start_.empty() ? 0 : cell_start_.size() - 1; }

  // Exactly k results sorted by (distance, index).
  std::vector<Neighbor> query(const Point3& q, std::size_t k) const;

  // Bucket contents, exposed for invariant checks.
  std::span<const std::uint32_t> bucket(std::size_t cell) const;

 private:
  void build_grid();
  std::vector<Neighbor> query_brute(const Point3& q, std::size_t k) const;
  std::vector<Neighbor> query_grid(const Point3& q, std::size_t k) const;

  std::vector<Point3> points_;
  KnnStrategy strategy_;

  // Uniform grid in CSR layout: bucket c is cell_items_[cell_start_[c], cell_start_[c+1]).
  Point3 origin_ = Point3::Zero();
  double cell_size_ = 0.0;
  std::array<std::int64_t, 3> dims_{0, 0, 0};
  std::vector<std::uint32_t> cell_start_;
  std::vector<std::uint32_t> cell_items_;
};

NeighborIndex build_index(const PointCloud& c, KnnStrategy strategy);

std::vector<Neighbor> knn(const NeighborIndex& idx, const Point3& query, std::size_t k);

// k-NN for every point of `queries` (OpenMP over queries).
NeighborLists knn_all(const NeighborIndex& idx, const PointCloud& queries, std::size_t k);

}  // namespace qreg
