#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qreg/descriptors.hpp"

namespace qreg {

using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

constexpr int kDefaultFeatureDim = 96;

struct LinearLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  Eigen::Index in_dim() const { return weight.cols(); }
  Eigen::Index out_dim() const { return weight.rows(); }
  void validate() const;
};

enum class Normalization { none, group };

// Stack of linear layers, optional ReLU per layer. Group normalisation (no
// affine part) sits between a layer and its ReLU when enabled; it breaks the
// exact folding identity so it is off by default.
struct MlpSpec {
  std::vector<LinearLayer> layers;
  std::vector<bool> relu;
  Normalization normalization = Normalization::none;
  int norm_groups = 8;

  Eigen::Index in_dim() const { return layers.front().in_dim(); }
  Eigen::Index out_dim() const { return layers.back().out_dim(); }
  std::uint64_t macs_per_input() const;
  void validate() const;
};

// Single fused step relu(A' f + B x + bias).
struct Qmlp {
  Eigen::MatrixXd a_prime;  // D x D
  Eigen::MatrixXd b;        // D x 3
  Eigen::VectorXd bias;     // D

  Eigen::Index dim() const { return a_prime.rows(); }
  std::uint64_t macs() const { return static_cast<std::uint64_t>(a_prime.size() + b.size()); }
  void validate() const;
};

// Iteration-0 set encoder plus one QMLP per later iteration. qmlps[j] serves
// registration iteration j + 2.
struct CascadeWeights {
  MlpSpec iter0;
  std::vector<Qmlp> qmlps;

  bool empty() const { return iter0.layers.empty(); }
  Eigen::Index feature_dim() const { return iter0.out_dim(); }
  int iterations() const { return static_cast<int>(qmlps.size()) + 1; }
  void validate() const;
};

// Per-point feature vectors for one registration iteration.
struct FeatureSet {
  FeatureMatrix values;  // N x D
  int iteration = 0;

  Eigen::Index size() const { return values.rows(); }
  Eigen::Index dim() const { return values.cols(); }
};

// Multiply-accumulates of linear layers, filled in by the extraction kernels.
struct OpCounter {
  std::uint64_t macs = 0;
};

Eigen::VectorXd linear_forward(const LinearLayer& layer, const Eigen::VectorXd& v, bool relu);

Eigen::VectorXd mlp_forward(const MlpSpec& mlp, const Eigen::VectorXd& v);

// Coordinatewise max of MLP(h) over the descriptor set.
Eigen::VectorXd pointnet_feature(const MlpSpec& mlp, std::span<const LocalDescriptor> descs);

// Batched variant: rows of `descs` are descriptors. Adds executed MACs to `ops`.
Eigen::VectorXd pointnet_feature(const MlpSpec& mlp, const Eigen::Ref<const Eigen::MatrixXd>& descs,
                                 OpCounter* ops = nullptr);

Eigen::VectorXd qmlp_forward(const Qmlp& q, const Eigen::VectorXd& f_prev, const Point3& x);

struct FoldedMatrices {
  Eigen::MatrixXd a_prime;  // A * D_curr
  Eigen::MatrixXd b;        // last three columns of C_next
};

// Splits C_next = [A | B] (first D columns act on v, last 3 on x) and folds
// the second layer of the previous block into A.
FoldedMatrices fold_cascade(const Eigen::MatrixXd& c_next, const Eigen::MatrixXd& d_curr);

// Same fold including biases: bias' = A * d_bias + c_bias.
Qmlp fold_cascade(const LinearLayer& c_next, const LinearLayer& d_curr);

// Fan-based uniform init, a = sqrt(6 / (in + out)), biases included. The
// QMLP counts as one (D + 3) -> D layer.
CascadeWeights init_random(std::uint64_t seed, int iterations, int feature_dim = kDefaultFeatureDim,
                           int descriptor_dim = 7);

enum class ExtractorMode { baseline, cascade };

struct FlopTerm {
  std::string name;
  std::uint64_t count = 0;
};

struct FlopEstimate {
  std::vector<FlopTerm> terms;
  std::uint64_t total = 0;  // exact MACs executed by the extractors
  std::uint64_t proxy = 0;  // N D^2 K L  or  N D^2 (K + L - 1)
};

FlopEstimate flop_estimate(const CascadeWeights& weights, std::uint64_t n, std::uint64_t k, std::uint64_t l,
                           ExtractorMode mode);

}  // namespace qreg
