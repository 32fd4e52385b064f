#include "qreg/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qreg/error.hpp"

namespace qreg::reference {

NeighborLists knn_all(const NeighborIndex& idx, const PointCloud& queries, std::size_t k) {
  NeighborLists out;
  out.k = k;
  for (const auto& q : queries.points()) {
    for (const auto& nb : idx.query(q, k)) {
      out.indices.push_back(nb.index);
      out.distances.push_back(nb.distance);
    }
  }
  return out;
}

FeatureSet pointnet_features(const PointCloud& cloud, const NeighborLists& neighbors, const MlpSpec& mlp,
                             OpCounter* ops) {
  FeatureSet out{FeatureMatrix(static_cast<Eigen::Index>(cloud.size()), mlp.out_dim()), 0};
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto descs = local_descriptors(cloud, i, {neighbors.row(i), neighbors.k}, DescriptorVariant::dim7_cascade);
    out.values.row(static_cast<Eigen::Index>(i)) = pointnet_feature(mlp, descs).transpose();
    if (ops) ops->macs += descs.size() * mlp.macs_per_input();
  }
  return out;
}

FeatureSet cascade_features(const FeatureSet& prev, const PointCloud& cloud_current, const Qmlp& q, OpCounter* ops) {
  FeatureSet out{FeatureMatrix(prev.size(), q.dim()), prev.iteration + 1};
  for (Eigen::Index i = 0; i < prev.size(); ++i) {
    const Eigen::VectorXd f = prev.values.row(i).transpose();
    out.values.row(i) = qmlp_forward(q, f, cloud_current.point(static_cast<std::size_t>(i))).transpose();
    if (ops) ops->macs += q.macs();
  }
  return out;
}

DistanceMatrix pairwise_distances(const FeatureMatrix& fx, const FeatureMatrix& fy) {
  if (fx.cols() != fy.cols()) throw Error("matching", "feature dimensions differ");
  DistanceMatrix d(fx.rows(), fy.rows());
  for (Eigen::Index i = 0; i < fx.rows(); ++i) {
    const double ni = fx.row(i).squaredNorm();
    for (Eigen::Index j = 0; j < fy.rows(); ++j) {
      const double v = ni + fy.row(j).squaredNorm() - 2.0 * fx.row(i).dot(fy.row(j));
      d(i, j) = std::sqrt(std::max(v, 0.0));
    }
  }
  return d;
}

void sinkhorn_standard(CorrespondenceMatrix& m, int iterations) {
  RowMatrix& v = m.values;
  const Eigen::Index rows = m.inner_rows();
  const Eigen::Index cols = m.inner_cols();
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      double s = 0.0;
      for (Eigen::Index i = 0; i < v.rows(); ++i) s += v(i, j);
      if (!(s > 0.0)) throw Error("matching", "Sinkhorn column has a zero sum");
      const double inv = 1.0 / s;
      for (Eigen::Index i = 0; i < v.rows(); ++i) v(i, j) *= inv;
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      double s = 0.0;
      for (Eigen::Index j = 0; j < v.cols(); ++j) s += v(i, j);
      if (!(s > 0.0)) throw Error("matching", "Sinkhorn row has a zero sum");
      const double inv = 1.0 / s;
      for (Eigen::Index j = 0; j < v.cols(); ++j) v(i, j) *= inv;
    }
  }
}

namespace {

template <typename Get>
double log_sum_exp(Eigen::Index n, Get get) {
  double m = -std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < n; ++k) m = std::max(m, get(k));
  double s = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) s += std::exp(get(k) - m);
  return m + std::log(s);
}

}  // namespace

CorrespondenceMatrix sinkhorn_log(const RowMatrix& logits, int iterations, bool slack) {
  RowMatrix x = logits;
  const Eigen::Index s = slack ? 1 : 0;
  const Eigen::Index rows = x.rows() - s;
  const Eigen::Index cols = x.cols() - s;
  for (int it = 0; it < iterations; ++it) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      const double lse = log_sum_exp(x.rows(), [&](Eigen::Index i) { return x(i, j); });
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) -= lse;
    }
    for (Eigen::Index i = 0; i < rows; ++i) {
      const double lse = log_sum_exp(x.cols(), [&](Eigen::Index j) { return x(i, j); });
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(i, j) -= lse;
    }
  }
  return {x.array().exp().matrix(), slack};
}

SoftCorrespondences soft_correspondences(const CorrespondenceMatrix& m, const PointCloud& ref) {
  const Eigen::Index rows = m.inner_rows();
  const Eigen::Index cols = m.inner_cols();
  std::vector<Point3> targets;
  std::vector<double> weights;
  for (Eigen::Index i = 0; i < rows; ++i) {
    double w = 0.0;
    Point3 acc = Point3::Zero();
    for (Eigen::Index j = 0; j < cols; ++j) {
      w += m.values(i, j);
      acc += m.values(i, j) * ref.point(static_cast<std::size_t>(j));
    }
    const bool keep = w >= kMinCorrespondenceWeight;
    weights.push_back(keep ? w : 0.0);
    targets.push_back(keep ? Point3(acc / w) : Point3::Zero());
  }
  return {PointCloud(std::move(targets)), std::move(weights)};
}

}  // namespace qreg::reference
