#include "qreg/network.hpp"

#include <cmath>
#include <random>

#include "qreg/error.hpp"

namespace qreg {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("network", msg); }

void group_normalize(Eigen::Ref<Eigen::VectorXd> v, int groups) {
  const Eigen::Index n = v.size();
  if (groups <= 0 || n % groups != 0) fail("feature width is not divisible by the group count");
  const Eigen::Index g = n / groups;
  for (int k = 0; k < groups; ++k) {
    auto seg = v.segment(k * g, g);
    const double mean = seg.mean();
    const double var = (seg.array() - mean).square().mean();
    seg = (seg.array() - mean) / std::sqrt(var + 1e-5);
  }
}

void apply_layer_rows(const MlpSpec& mlp, std::size_t li, Eigen::MatrixXd& x) {
  const LinearLayer& layer = mlp.layers[li];
  Eigen::MatrixXd y = x * layer.weight.transpose();
  y.rowwise() += layer.bias.transpose();
  if (mlp.normalization == Normalization::group) {
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      Eigen::VectorXd row = y.row(r).transpose();
      group_normalize(row, mlp.norm_groups);
      y.row(r) = row.transpose();
    }
  }
  if (mlp.relu[li]) y = y.cwiseMax(0.0);
  x = std::move(y);
}

}  // namespace

void LinearLayer::validate() const {
  if (weight.rows() == 0 || weight.cols() == 0) fail("linear layer has an empty weight");
  if (bias.size() != weight.rows()) fail("bias length does not match layer output");
  if (!weight.allFinite() || !bias.allFinite()) fail("linear layer has non-finite entries");
}

std::uint64_t MlpSpec::macs_per_input() const {
  std::uint64_t m = 0;
  for (const auto& l : layers) m += static_cast<std::uint64_t>(l.weight.size());
  return m;
}

void MlpSpec::validate() const {
  if (layers.empty()) fail("MLP has no layers");
  if (relu.size() != layers.size()) fail("MLP relu flags do not match layer count");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    layers[i].validate();
    if (i > 0 && layers[i].in_dim() != layers[i - 1].out_dim()) {
      fail("MLP layer " + std::to_string(i) + " input does not chain with the previous output");
    }
  }
}

void Qmlp::validate() const {
  const Eigen::Index d = a_prime.rows();
  if (d == 0 || a_prime.cols() != d) fail("QMLP A' must be square");
  if (b.rows() != d || b.cols() != 3) fail("QMLP B must be D x 3");
  if (bias.size() != d) fail("QMLP bias must have length D");
  if (!a_prime.allFinite() || !b.allFinite() || !bias.allFinite()) fail("QMLP has non-finite entries");
}

void CascadeWeights::validate() const {
  iter0.validate();
  for (std::size_t i = 0; i < qmlps.size(); ++i) {
    qmlps[i].validate();
    if (qmlps[i].dim() != feature_dim()) fail("QMLP " + std::to_string(i + 1) + " width differs from iter0 output");
  }
}

Eigen::VectorXd linear_forward(const LinearLayer& layer, const Eigen::VectorXd& v, bool relu) {
  if (v.size() != layer.in_dim()) {
    fail("input of length " + std::to_string(v.size()) + " for layer expecting " + std::to_string(layer.in_dim()));
  }
  Eigen::VectorXd out = layer.weight * v + layer.bias;
  if (relu) out = out.cwiseMax(0.0);
  return out;
}

Eigen::VectorXd mlp_forward(const MlpSpec& mlp, const Eigen::VectorXd& v) {
  Eigen::VectorXd x = v;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
    x = linear_forward(mlp.layers[i], x, false);
    if (mlp.normalization == Normalization::group) group_normalize(x, mlp.norm_groups);
    if (mlp.relu[i]) x = x.cwiseMax(0.0);
  }
  return x;
}

Eigen::VectorXd pointnet_feature(const MlpSpec& mlp, std::span<const LocalDescriptor> descs) {
  if (descs.empty()) fail("pointnet feature of an empty descriptor set");
  Eigen::VectorXd f = mlp_forward(mlp, descs.front());
  for (std::size_t k = 1; k < descs.size(); ++k) f = f.cwiseMax(mlp_forward(mlp, descs[k]));
  return f;
}

Eigen::VectorXd pointnet_feature(const MlpSpec& mlp, const Eigen::Ref<const Eigen::MatrixXd>& descs, OpCounter* ops) {
  if (descs.rows() == 0) fail("pointnet feature of an empty descriptor set");
  if (descs.cols() != mlp.in_dim()) fail("descriptor width does not match MLP input");
  Eigen::MatrixXd x = descs;
  for (std::size_t i = 0; i < mlp.layers.size(); ++i) apply_layer_rows(mlp, i, x);
  if (ops) ops->macs += static_cast<std::uint64_t>(descs.rows()) * mlp.macs_per_input();
  return x.colwise().maxCoeff().transpose();
}

Eigen::VectorXd qmlp_forward(const Qmlp& q, const Eigen::VectorXd& f_prev, const Point3& x) {
  if (f_prev.size() != q.a_prime.cols()) fail("previous feature width does not match QMLP");
  Eigen::VectorXd out = q.a_prime * f_prev + q.b * x + q.bias;
  return out.cwiseMax(0.0);
}

FoldedMatrices fold_cascade(const Eigen::MatrixXd& c_next, const Eigen::MatrixXd& d_curr) {
  const Eigen::Index d = d_curr.rows();
  if (d == 0 || d_curr.cols() != d) fail("D_curr must be square");
  if (c_next.rows() != d || c_next.cols() != d + 3) {
    fail("C_next must be " + std::to_string(d) + " x " + std::to_string(d + 3));
  }
  FoldedMatrices out;
  out.a_prime = c_next.leftCols(d) * d_curr;
  out.b = c_next.rightCols(3);
  return out;
}

Qmlp fold_cascade(const LinearLayer& c_next, const LinearLayer& d_curr) {
  c_next.validate();
  d_curr.validate();
  FoldedMatrices m = fold_cascade(c_next.weight, d_curr.weight);
  Qmlp q;
  q.bias = c_next.weight.leftCols(d_curr.out_dim()) * d_curr.bias + c_next.bias;
  q.a_prime = std::move(m.a_prime);
  q.b = std::move(m.b);
  return q;
}

CascadeWeights init_random(std::uint64_t seed, int iterations, int feature_dim, int descriptor_dim) {
  if (iterations < 1) fail("iterations must be >= 1");
  if (feature_dim < 1 || descriptor_dim < 1) fail("dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto fill = [&rng](Eigen::Ref<Eigen::MatrixXd> m, double a) {
    std::uniform_real_distribution<double> u(-a, a);
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = u(rng);
  };
  auto layer = [&](int in, int out) {
    const double a = std::sqrt(6.0 / (in + out));
    LinearLayer l{Eigen::MatrixXd(out, in), Eigen::VectorXd(out)};
    fill(l.weight, a);
    fill(l.bias, a);
    return l;
  };

  CascadeWeights w;
  w.iter0.layers.push_back(layer(descriptor_dim, feature_dim));
  w.iter0.layers.push_back(layer(feature_dim, feature_dim));
  w.iter0.relu = {true, true};
  const double a = std::sqrt(6.0 / (feature_dim + 3 + feature_dim));
  for (int i = 1; i < iterations; ++i) {
    Qmlp q{Eigen::MatrixXd(feature_dim, feature_dim), Eigen::MatrixXd(feature_dim, 3), Eigen::VectorXd(feature_dim)};
    fill(q.a_prime, a);
    fill(q.b, a);
    fill(q.bias, a);
    w.qmlps.push_back(std::move(q));
  }
  return w;
}

FlopEstimate flop_estimate(const CascadeWeights& weights, std::uint64_t n, std::uint64_t k, std::uint64_t l,
                           ExtractorMode mode) {
  if (n == 0 || k == 0 || l == 0) fail("flop_estimate arguments must be positive");
  if (weights.empty()) fail("flop_estimate needs weights");
  const auto d = static_cast<std::uint64_t>(weights.feature_dim());
  FlopEstimate e;
  std::uint64_t set_encoder = 0;
  for (std::size_t i = 0; i < weights.iter0.layers.size(); ++i) {
    set_encoder += static_cast<std::uint64_t>(weights.iter0.layers[i].weight.size());
  }
  if (mode == ExtractorMode::baseline) {
    e.terms.push_back({"set_encoder", n * k * l * set_encoder});
    e.proxy = n * d * d * k * l;
  } else {
    e.terms.push_back({"set_encoder", n * k * set_encoder});
    e.terms.push_back({"qmlp_A", n * (l - 1) * d * d});
    e.terms.push_back({"qmlp_B", n * (l - 1) * d * 3});
    e.proxy = n * d * d * (k + l - 1);
  }
  for (const auto& t : e.terms) e.total += t.count;
  return e;
}

}  // namespace qreg
