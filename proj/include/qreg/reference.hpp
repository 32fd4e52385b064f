#pragma once

// Serial reference versions of the parallel kernels. They follow the same
// arithmetic in plain loops and exist for cross-checking and benchmarking.

#include "qreg/knn.hpp"
#include "qreg/matching.hpp"
#include "qreg/network.hpp"

namespace qreg::reference {

NeighborLists knn_all(const NeighborIndex& idx, const PointCloud& queries, std::size_t k);

FeatureSet pointnet_features(const PointCloud& cloud, const NeighborLists& neighbors, const MlpSpec& mlp,
                             OpCounter* ops = nullptr);

FeatureSet cascade_features(const FeatureSet& prev, const PointCloud& cloud_current, const Qmlp& q,
                            OpCounter* ops = nullptr);

DistanceMatrix pairwise_distances(const FeatureMatrix& fx, const FeatureMatrix& fy);

void sinkhorn_standard(CorrespondenceMatrix& m, int iterations);

CorrespondenceMatrix sinkhorn_log(const RowMatrix& logits, int iterations, bool slack);

SoftCorrespondences soft_correspondences(const CorrespondenceMatrix& m, const PointCloud& ref);

}  // namespace qreg::reference
