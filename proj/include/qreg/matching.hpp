#pragma once

#include <Eigen/Core>
#include <vector>

#include "qreg/geometry.hpp"
#include "qreg/network.hpp"

namespace qreg {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using DistanceMatrix = RowMatrix;

// Soft assignment. With slack on, the last row and column are the slack bins.
struct CorrespondenceMatrix {
  RowMatrix values;
  bool slack = false;

  Eigen::Index inner_rows() const { return values.rows() - (slack ? 1 : 0); }
  Eigen::Index inner_cols() const { return values.cols() - (slack ? 1 : 0); }
};

struct AnnealingParams {
  double alpha = 0.0;
  double beta = 1.0;

  void validate() const;
};

constexpr double kSimilarityFloor = 1e-300;

DistanceMatrix pairwise_distances(const FeatureSet& fx, const FeatureSet& fy);
DistanceMatrix pairwise_distances(const FeatureMatrix& fx, const FeatureMatrix& fy);

// m_ij = exp(-beta (d_ij^2 - alpha)), floored at 1e-300; slack entries are 1.
CorrespondenceMatrix similarity_matrix(const DistanceMatrix& d, const AnnealingParams& p, bool slack);

// -beta (d_ij^2 - alpha); slack entries are 0.
RowMatrix similarity_logits(const DistanceMatrix& d, const AnnealingParams& p, bool slack);

// l alternations of column then row normalisation. Slack row/column enter the
// sums but are not themselves normalised.
CorrespondenceMatrix sinkhorn_standard(CorrespondenceMatrix m, int iterations);
void sinkhorn_standard_inplace(CorrespondenceMatrix& m, int iterations);

// Log-domain Sinkhorn: l alternations of column then row log-sum-exp
// subtraction, then elementwise exp.
CorrespondenceMatrix sinkhorn_log(const RowMatrix& logits, int iterations, bool slack = false);

int adaptive_sinkhorn_iters(int registration_iter, int cap);

struct SoftCorrespondences {
  PointCloud targets;
  std::vector<double> weights;
};

constexpr double kMinCorrespondenceWeight = 1e-12;

// w_i = sum_j m_ij over inner columns, target_i = sum_j m_ij y_j / w_i.
// Rows with w_i < 1e-12 get w_i = 0 and a zero target.
SoftCorrespondences soft_correspondences(const CorrespondenceMatrix& m, const PointCloud& ref);

}  // namespace qreg
