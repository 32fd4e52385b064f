#include <gtest/gtest.h>

#include <algorithm>
#include <random>

#include "qreg/error.hpp"
#include "qreg/network.hpp"

namespace qreg {
namespace {

Eigen::MatrixXd random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double lo = -1, double hi = 1) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

TEST(LinearForward, IdentityAndRelu) {
  const LinearLayer id{Eigen::MatrixXd::Identity(2, 2), Eigen::VectorXd::Zero(2)};
  const Eigen::VectorXd v = Eigen::Vector2d(-1, 2);
  EXPECT_EQ(linear_forward(id, v, false), v);
  EXPECT_EQ(linear_forward(id, v, true), Eigen::VectorXd(Eigen::Vector2d(0, 2)));
  EXPECT_THROW(linear_forward(id, Eigen::VectorXd::Zero(3), false), Error);
}

TEST(LinearForward, MatchesDotProductOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 50; ++t) {
    const LinearLayer l{random_matrix(17, 11, rng), random_matrix(17, 1, rng).col(0)};
    const Eigen::VectorXd v = random_matrix(11, 1, rng).col(0);
    const Eigen::VectorXd out = linear_forward(l, v, true);
    for (Eigen::Index r = 0; r < 17; ++r) {
      double acc = l.bias[r];
      for (Eigen::Index c = 0; c < 11; ++c) acc += l.weight(r, c) * v[c];
      ASSERT_NEAR(out[r], std::max(acc, 0.0), 1e-12);
    }
  }
}

MlpSpec small_mlp(std::mt19937_64& rng) {
  MlpSpec m;
  m.layers.push_back({random_matrix(16, 7, rng), random_matrix(16, 1, rng).col(0)});
  m.layers.push_back({random_matrix(16, 16, rng), random_matrix(16, 1, rng).col(0)});
  m.relu = {true, true};
  return m;
}

std::vector<LocalDescriptor> random_descs(std::size_t k, std::mt19937_64& rng) {
  std::vector<LocalDescriptor> d(k);
  for (auto& h : d) h = random_matrix(7, 1, rng).col(0);
  return d;
}

TEST(PointnetFeature, SingletonAndDuplicated) {
  std::mt19937_64 rng(2);
  const MlpSpec mlp = small_mlp(rng);
  const auto descs = random_descs(5, rng);
  EXPECT_EQ(pointnet_feature(mlp, std::span(descs.data(), 1)), mlp_forward(mlp, descs[0]));
  auto twice = descs;
  twice.insert(twice.end(), descs.begin(), descs.end());
  EXPECT_EQ(pointnet_feature(mlp, twice), pointnet_feature(mlp, descs));
  EXPECT_THROW(pointnet_feature(mlp, std::span<const LocalDescriptor>()), Error);
}

TEST(PointnetFeature, PermutationInvariantExactly) {
  std::mt19937_64 rng(3);
  const MlpSpec mlp = small_mlp(rng);
  auto descs = random_descs(64, rng);
  const Eigen::VectorXd f = pointnet_feature(mlp, descs);
  for (int t = 0; t < 100; ++t) {
    std::shuffle(descs.begin(), descs.end(), rng);
    ASSERT_EQ(pointnet_feature(mlp, descs), f);
  }
}

TEST(PointnetFeature, BatchedMatchesPerDescriptorAndCountsMacs) {
  std::mt19937_64 rng(4);
  const MlpSpec mlp = small_mlp(rng);
  const auto descs = random_descs(32, rng);
  Eigen::MatrixXd rows(32, 7);
  for (int k = 0; k < 32; ++k) rows.row(k) = descs[static_cast<std::size_t>(k)].transpose();
  OpCounter ops;
  const Eigen::VectorXd batched = pointnet_feature(mlp, rows, &ops);
  EXPECT_LT((batched - pointnet_feature(mlp, descs)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(ops.macs, 32u * (16 * 7 + 16 * 16));
}

TEST(QmlpForward, TrivialCases) {
  const int d = 6;
  Qmlp q{Eigen::MatrixXd::Identity(d, d), Eigen::MatrixXd::Zero(d, 3), Eigen::VectorXd::Zero(d)};
  const Eigen::VectorXd f = Eigen::VectorXd::LinSpaced(d, 0, 5);
  EXPECT_EQ(qmlp_forward(q, f, Point3(1, 2, 3)), f);
  q.bias = Eigen::VectorXd::Constant(d, -1);
  EXPECT_EQ(qmlp_forward(q, Eigen::VectorXd::Zero(d), Point3(1, 2, 3)), Eigen::VectorXd::Zero(d));
}

TEST(QmlpForward, MatchesTwoStepReference) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 20; ++t) {
    const Qmlp q{random_matrix(96, 96, rng), random_matrix(96, 3, rng), random_matrix(96, 1, rng).col(0)};
    const Eigen::VectorXd f = random_matrix(96, 1, rng, 0, 1).col(0);
    const Point3 x = random_matrix(3, 1, rng).col(0);
    Eigen::VectorXd ref = q.a_prime * f;
    ref += q.b * x;
    ref += q.bias;
    for (Eigen::Index i = 0; i < ref.size(); ++i) ref[i] = ref[i] > 0 ? ref[i] : 0.0;
    ASSERT_LT((qmlp_forward(q, f, x) - ref).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FoldCascade, IdentityCase) {
  std::mt19937_64 rng(6);
  Eigen::MatrixXd c(96, 99);
  c.leftCols(96).setIdentity();
  c.rightCols(3) = random_matrix(96, 3, rng);
  const FoldedMatrices m = fold_cascade(c, Eigen::MatrixXd::Identity(96, 96));
  EXPECT_EQ(m.a_prime, Eigen::MatrixXd::Identity(96, 96));
  EXPECT_EQ(m.b, c.rightCols(3));
}

TEST(FoldCascade, ZeroSecondLayer) {
  std::mt19937_64 rng(7);
  const Eigen::MatrixXd c = random_matrix(96, 99, rng);
  const FoldedMatrices m = fold_cascade(c, Eigen::MatrixXd::Zero(96, 96));
  EXPECT_TRUE(m.a_prime.isZero(0.0));
  const Eigen::VectorXd u = random_matrix(96, 1, rng, 0, 1).col(0);
  const Point3 x(0.3, -0.2, 0.9);
  EXPECT_LT((m.a_prime * u + m.b * x - c.rightCols(3) * x).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(FoldCascade, FoldedEqualsUnfolded) {
  std::mt19937_64 rng(8);
  const Eigen::MatrixXd c = random_matrix(96, 99, rng), d = random_matrix(96, 96, rng);
  const FoldedMatrices m = fold_cascade(c, d);
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Eigen::VectorXd u = random_matrix(96, 1, rng, 0, 1).col(0);
    const Point3 x = random_matrix(3, 1, rng).col(0);
    Eigen::VectorXd stacked(99);
    stacked << d * u, x;
    worst = std::max(worst, (m.a_prime * u + m.b * x - c * stacked).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(worst, 1e-9);
}

TEST(FoldCascade, WithBiases) {
  std::mt19937_64 rng(9);
  const LinearLayer c{random_matrix(8, 11, rng), random_matrix(8, 1, rng).col(0)};
  const LinearLayer d{random_matrix(8, 8, rng), random_matrix(8, 1, rng).col(0)};
  const Qmlp q = fold_cascade(c, d);
  for (int t = 0; t < 100; ++t) {
    const Eigen::VectorXd u = random_matrix(8, 1, rng, 0, 1).col(0);
    const Point3 x = random_matrix(3, 1, rng).col(0);
    Eigen::VectorXd stacked(11);
    stacked << d.weight * u + d.bias, x;
    const Eigen::VectorXd expect = (c.weight * stacked + c.bias).cwiseMax(0.0);
    ASSERT_LT((qmlp_forward(q, u, x) - expect).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(FoldCascade, WrongShapesRejected) {
  EXPECT_THROW(fold_cascade(Eigen::MatrixXd::Zero(96, 96), Eigen::MatrixXd::Zero(96, 96)), Error);
  EXPECT_THROW(fold_cascade(Eigen::MatrixXd::Zero(96, 99), Eigen::MatrixXd::Zero(96, 95)), Error);
}

TEST(InitRandom, DeterministicAndShaped) {
  const CascadeWeights a = init_random(42, 5), b = init_random(42, 5), c = init_random(43, 5);
  ASSERT_EQ(a.qmlps.size(), 4u);
  EXPECT_EQ(a.iterations(), 5);
  EXPECT_EQ(a.feature_dim(), 96);
  EXPECT_EQ(a.iter0.in_dim(), 7);
  for (std::size_t i = 0; i < a.qmlps.size(); ++i) {
    EXPECT_EQ(a.qmlps[i].a_prime, b.qmlps[i].a_prime);
    EXPECT_EQ(a.qmlps[i].b, b.qmlps[i].b);
    EXPECT_EQ(a.qmlps[i].bias, b.qmlps[i].bias);
  }
  EXPECT_EQ(a.iter0.layers[0].weight, b.iter0.layers[0].weight);
  EXPECT_NE(a.iter0.layers[0].weight, c.iter0.layers[0].weight);
  EXPECT_TRUE(init_random(0, 1).qmlps.empty());
  EXPECT_THROW(init_random(0, 0), Error);
}

TEST(InitRandom, EntriesWithinFanBound) {
  const CascadeWeights w = init_random(11, 5);
  auto check = [](const Eigen::MatrixXd& m, double in, double out) {
    const double a = std::sqrt(6.0 / (in + out));
    EXPECT_LE(m.cwiseAbs().maxCoeff(), a);
    EXPECT_GT(m.cwiseAbs().maxCoeff(), 0.5 * a);  // actually spread over the range
  };
  for (const auto& l : w.iter0.layers) {
    check(l.weight, l.in_dim(), l.out_dim());
    check(l.bias, l.in_dim(), l.out_dim());
  }
  for (const auto& q : w.qmlps) {
    check(q.a_prime, 99, 96);
    check(q.b, 99, 96);
    check(q.bias, 99, 96);
  }
}

TEST(FlopEstimate, ProxyExample) {
  const CascadeWeights w = init_random(0, 5);
  const FlopEstimate base = flop_estimate(w, 1, 64, 5, ExtractorMode::baseline);
  const FlopEstimate casc = flop_estimate(w, 1, 64, 5, ExtractorMode::cascade);
  EXPECT_EQ(base.proxy, 9216u * 64 * 5);
  EXPECT_EQ(base.proxy, 2949120u);
  EXPECT_EQ(casc.proxy, 626688u);
  EXPECT_NEAR(static_cast<double>(base.proxy) / static_cast<double>(casc.proxy), 4.7, 0.01);
}

TEST(FlopEstimate, ItemizedTermsSumToTotal) {
  const CascadeWeights w = init_random(0, 5);
  const FlopEstimate casc = flop_estimate(w, 10, 64, 5, ExtractorMode::cascade);
  std::uint64_t sum = 0;
  for (const auto& t : casc.terms) sum += t.count;
  EXPECT_EQ(sum, casc.total);
  EXPECT_EQ(casc.terms.size(), 3u);
  const std::uint64_t encoder = 7 * 96 + 96 * 96;
  EXPECT_EQ(casc.total, 10u * 64 * encoder + 10u * 4 * (96 * 96 + 96 * 3));
  EXPECT_EQ(flop_estimate(w, 10, 64, 5, ExtractorMode::baseline).total, 10u * 64 * 5 * encoder);
}

TEST(FlopEstimate, SingleIterationModesAgreeAndLinearInN) {
  const CascadeWeights w = init_random(0, 1);
  EXPECT_EQ(flop_estimate(w, 3, 64, 1, ExtractorMode::baseline).total,
            flop_estimate(w, 3, 64, 1, ExtractorMode::cascade).total);
  EXPECT_EQ(flop_estimate(w, 3, 64, 1, ExtractorMode::baseline).proxy,
            flop_estimate(w, 3, 64, 1, ExtractorMode::cascade).proxy);
  const CascadeWeights w5 = init_random(0, 5);
  EXPECT_EQ(flop_estimate(w5, 8, 64, 5, ExtractorMode::cascade).total,
            8 * flop_estimate(w5, 1, 64, 5, ExtractorMode::cascade).total);
  EXPECT_THROW(flop_estimate(w5, 0, 64, 5, ExtractorMode::cascade), Error);
}

TEST(Mlp, GroupNormalizationChangesOutput) {
  std::mt19937_64 rng(12);
  MlpSpec mlp = small_mlp(rng);
  const Eigen::VectorXd v = random_matrix(7, 1, rng).col(0);
  const Eigen::VectorXd plain = mlp_forward(mlp, v);
  mlp.normalization = Normalization::group;
  mlp.norm_groups = 4;
  const Eigen::VectorXd normed = mlp_forward(mlp, v);
  EXPECT_GT((plain - normed).norm(), 1e-6);
  EXPECT_TRUE(normed.allFinite());
}

}  // namespace
}  // namespace qreg
