#include "qreg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qreg/error.hpp"

namespace qreg {

namespace {

constexpr Eigen::Index kRowBlock = 64;
constexpr Eigen::Index kColChunk = 64;

// Column sums over all rows for columns [0, ncols). Each chunk of columns is
// owned by one thread and accumulated in row order, so the result does not
// depend on the thread count.
void column_sums(const RowMatrix& m, Eigen::Index ncols, std::vector<double>& sums) {
  sums.assign(static_cast<std::size_t>(ncols), 0.0);
  const Eigen::Index chunks = (ncols + kColChunk - 1) / kColChunk;
#pragma omp parallel for schedule(static)
  for (Eigen::Index c = 0; c < chunks; ++c) {
    const Eigen::Index j0 = c * kColChunk;
    const Eigen::Index j1 = std::min(ncols, j0 + kColChunk);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      const double* row = m.data() + i * m.cols();
      for (Eigen::Index j = j0; j < j1; ++j) sums[static_cast<std::size_t>(j)] += row[j];
    }
  }
}

void check_sums(const std::vector<double>& sums, const char* what) {
  for (std::size_t j = 0; j < sums.size(); ++j) {
    if (!(sums[j] > 0.0) || !std::isfinite(sums[j])) {
      throw Error("matching", std::string("Sinkhorn ") + what + " " + std::to_string(j) + " has a zero or non-finite sum");
    }
  }
}

}  // namespace

void AnnealingParams::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error("matching", "beta must be finite and > 0");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw Error("matching", "alpha must be finite and >= 0");
}

DistanceMatrix pairwise_distances(const FeatureSet& fx, const FeatureSet& fy) {
  return pairwise_distances(fx.values, fy.values);
}

DistanceMatrix pairwise_distances(const FeatureMatrix& fx, const FeatureMatrix& fy) {
  if (fx.cols() != fy.cols()) {
    throw Error("matching", "feature dimensions differ (" + std::to_string(fx.cols()) + " vs " +
                                std::to_string(fy.cols()) + ")");
  }
  const Eigen::VectorXd sx = fx.rowwise().squaredNorm();
  const Eigen::RowVectorXd sy = fy.rowwise().squaredNorm().transpose();
  DistanceMatrix d(fx.rows(), fy.rows());
  const Eigen::Index blocks = (fx.rows() + kRowBlock - 1) / kRowBlock;
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index r0 = b * kRowBlock;
    const Eigen::Index nr = std::min(kRowBlock, fx.rows() - r0);
    auto blk = d.middleRows(r0, nr);
    blk.noalias() = -2.0 * fx.middleRows(r0, nr) * fy.transpose();
    blk.colwise() += sx.segment(r0, nr);
    blk.rowwise() += sy;
    blk = blk.cwiseMax(0.0).cwiseSqrt();
  }
  return d;
}

CorrespondenceMatrix similarity_matrix(const DistanceMatrix& d, const AnnealingParams& p, bool slack) {
  p.validate();
  const Eigen::Index s = slack ? 1 : 0;
  CorrespondenceMatrix m{RowMatrix::Ones(d.rows() + s, d.cols() + s), slack};
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      const double dij = d(i, j);
      m.values(i, j) = std::max(std::exp(-p.beta * (dij * dij - p.alpha)), kSimilarityFloor);
    }
  }
  return m;
}

RowMatrix similarity_logits(const DistanceMatrix& d, const AnnealingParams& p, bool slack) {
  p.validate();
  const Eigen::Index s = slack ? 1 : 0;
  RowMatrix out = RowMatrix::Zero(d.rows() + s, d.cols() + s);
  out.topLeftCorner(d.rows(), d.cols()) = -p.beta * (d.array().square() - p.alpha);
  return out;
}

void sinkhorn_standard_inplace(CorrespondenceMatrix& m, int iterations) {
  if (iterations < 0) throw Error("matching", "Sinkhorn iteration count must be >= 0");
  RowMatrix& v = m.values;
  const Eigen::Index rows = m.inner_rows();
  const Eigen::Index cols = m.inner_cols();
  std::vector<double> sums;
  for (int it = 0; it < iterations; ++it) {
    column_sums(v, cols, sums);
    check_sums(sums, "column");
    for (auto& s : sums) s = 1.0 / s;
#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < v.rows(); ++i) {
      double* row = v.data() + i * v.cols();
      for (Eigen::Index j = 0; j < cols; ++j) row[j] *= sums[static_cast<std::size_t>(j)];
    }

    bool bad_row = false;
#pragma omp parallel for schedule(static) reduction(|| : bad_row)
    for (Eigen::Index i = 0; i < rows; ++i) {
      double* row = v.data() + i * v.cols();
      double s = 0.0;
      for (Eigen::Index j = 0; j < v.cols(); ++j) s += row[j];
      if (!(s > 0.0) || !std::isfinite(s)) {
        bad_row = true;
        continue;
      }
      const double inv = 1.0 / s;
      for (Eigen::Index j = 0; j < v.cols(); ++j) row[j] *= inv;
    }
    if (bad_row) throw Error("matching", "Sinkhorn row has a zero or non-finite sum");
  }
}

CorrespondenceMatrix sinkhorn_standard(CorrespondenceMatrix m, int iterations) {
  sinkhorn_standard_inplace(m, iterations);
  return m;
}

CorrespondenceMatrix sinkhorn_log(const RowMatrix& logits, int iterations, bool slack) {
  if (iterations < 0) throw Error("matching", "Sinkhorn iteration count must be >= 0");
  if (!logits.allFinite()) throw Error("matching", "logits must be finite");
  const Eigen::Index s = slack ? 1 : 0;
  if (logits.rows() <= s || logits.cols() <= s) throw Error("matching", "logit matrix is too small");
  RowMatrix x = logits;
  const Eigen::Index rows = x.rows() - s;
  const Eigen::Index cols = x.cols() - s;
  const Eigen::Index chunks = (cols + kColChunk - 1) / kColChunk;
  std::vector<double> mx(static_cast<std::size_t>(cols));
  std::vector<double> acc(static_cast<std::size_t>(cols));

  for (int it = 0; it < iterations; ++it) {
#pragma omp parallel for schedule(static)
    for (Eigen::Index c = 0; c < chunks; ++c) {
      const Eigen::Index j0 = c * kColChunk;
      const Eigen::Index j1 = std::min(cols, j0 + kColChunk);
      for (Eigen::Index j = j0; j < j1; ++j) mx[static_cast<std::size_t>(j)] = -std::numeric_limits<double>::infinity();
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double* row = x.data() + i * x.cols();
        for (Eigen::Index j = j0; j < j1; ++j) mx[static_cast<std::size_t>(j)] = std::max(mx[static_cast<std::size_t>(j)], row[j]);
      }
      for (Eigen::Index j = j0; j < j1; ++j) acc[static_cast<std::size_t>(j)] = 0.0;
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double* row = x.data() + i * x.cols();
        for (Eigen::Index j = j0; j < j1; ++j) {
          acc[static_cast<std::size_t>(j)] += std::exp(row[j] - mx[static_cast<std::size_t>(j)]);
        }
      }
      for (Eigen::Index j = j0; j < j1; ++j) {
        acc[static_cast<std::size_t>(j)] = mx[static_cast<std::size_t>(j)] + std::log(acc[static_cast<std::size_t>(j)]);
      }
      for (Eigen::Index i = 0; i < x.rows(); ++i) {
        double* row = x.data() + i * x.cols();
        for (Eigen::Index j = j0; j < j1; ++j) row[j] -= acc[static_cast<std::size_t>(j)];
      }
    }

#pragma omp parallel for schedule(static)
    for (Eigen::Index i = 0; i < rows; ++i) {
      double* row = x.data() + i * x.cols();
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < x.cols(); ++j) m = std::max(m, row[j]);
      double sum = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j) sum += std::exp(row[j] - m);
      const double lse = m + std::log(sum);
      for (Eigen::Index j = 0; j < x.cols(); ++j) row[j] -= lse;
    }
  }

  CorrespondenceMatrix out{RowMatrix(x.rows(), x.cols()), slack};
  out.values = x.array().exp();
  return out;
}

int adaptive_sinkhorn_iters(int registration_iter, int cap) {
  if (registration_iter < 1) throw Error("matching", "registration iteration index is 1-based");
  if (cap < 0) throw Error("matching", "Sinkhorn cap must be >= 0");
  return std::min(registration_iter, cap);
}

SoftCorrespondences soft_correspondences(const CorrespondenceMatrix& m, const PointCloud& ref) {
  const Eigen::Index rows = m.inner_rows();
  const Eigen::Index cols = m.inner_cols();
  if (cols != static_cast<Eigen::Index>(ref.size())) {
    throw Error("matching", "correspondence columns (" + std::to_string(cols) + ") do not match reference size (" +
                                std::to_string(ref.size()) + ")");
  }
  std::vector<Point3> targets(static_cast<std::size_t>(rows), Point3::Zero());
  std::vector<double> weights(static_cast<std::size_t>(rows), 0.0);
#pragma omp parallel for schedule(static)
  for (Eigen::Index i = 0; i < rows; ++i) {
    double w = 0.0;
    Point3 acc = Point3::Zero();
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double mij = m.values(i, j);
      w += mij;
      acc += mij * ref.point(static_cast<std::size_t>(j));
    }
    if (w >= kMinCorrespondenceWeight) {
      weights[static_cast<std::size_t>(i)] = w;
      targets[static_cast<std::size_t>(i)] = acc / w;
    }
  }
  return {PointCloud(std::move(targets)), std::move(weights)};
}

}  // namespace qreg
