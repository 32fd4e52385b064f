#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <random>

#include "qreg/alignment.hpp"
#include "qreg/error.hpp"
#include "test_util.hpp"

namespace qreg {
namespace {

Matrix3 random_matrix3(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Matrix3 a;
  for (int i = 0; i < 9; ++i) a(i) = g(rng);
  return a;
}

double objective(const RigidTransform& t, const PointCloud& src, const PointCloud& tgt, const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) s += w[i] * (t.apply(src.point(i)) - tgt.point(i)).squaredNorm();
  return s;
}

void expect_orthogonal(const Matrix3& m) {
  EXPECT_LT((m.transpose() * m - Matrix3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Svd3, Identity) {
  const Svd3Result r = svd3(Matrix3::Identity());
  EXPECT_LT((r.s - Eigen::Vector3d::Ones()).cwiseAbs().maxCoeff(), 1e-15);
  expect_orthogonal(r.u);
  expect_orthogonal(r.v);
}

TEST(Svd3, Diagonal) {
  const Svd3Result r = svd3(Eigen::Vector3d(3, 2, 1).asDiagonal());
  EXPECT_LT((r.s - Eigen::Vector3d(3, 2, 1)).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((r.u.cwiseAbs() - Matrix3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
  EXPECT_LT((r.v.cwiseAbs() - Matrix3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Svd3, RankDeficientAndZero) {
  const Svd3Result z = svd3(Matrix3::Zero());
  EXPECT_EQ(z.s, Eigen::Vector3d::Zero());
  expect_orthogonal(z.u);
  Matrix3 a;
  a << 1, 2, 3, 2, 4, 6, -1, -2, -3;  // rank one
  const Svd3Result r = svd3(a);
  expect_orthogonal(r.u);
  EXPECT_LT((r.u * r.s.asDiagonal() * r.v.transpose() - a).norm(), 1e-9 * a.norm());
  EXPECT_LT(r.s[1], 1e-9);
}

TEST(Svd3, NanRejected) {
  Matrix3 a = Matrix3::Identity();
  a(1, 2) = NAN;
  EXPECT_THROW(svd3(a), Error);
}

TEST(Svd3, MatchesEigenOracle) {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const Matrix3 a = random_matrix3(rng);
    const Svd3Result r = svd3(a);
    ASSERT_LT((r.u * r.s.asDiagonal() * r.v.transpose() - a).norm(), 1e-9 * std::max(1.0, a.norm()));
    expect_orthogonal(r.u);
    expect_orthogonal(r.v);
    ASSERT_GE(r.s[0], r.s[1]);
    ASSERT_GE(r.s[1], r.s[2]);
    ASSERT_GE(r.s[2], 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix3> eig(a.transpose() * a);
    const Eigen::Vector3d ev = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().reverse();
    ASSERT_LT((r.s - ev).cwiseAbs().maxCoeff(), 1e-7);
  }
}

TEST(Procrustes, IdentityWhenTargetsEqualSource) {
  const PointCloud src = testing::random_cloud(20, 2);
  const RigidTransform t = weighted_procrustes(src, src, std::vector<double>(20, 1.0));
  EXPECT_LT((t.rotation() - Matrix3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(t.translation().norm(), 1e-12);
}

TEST(Procrustes, RecoversRotationAboutZ) {
  const PointCloud src({Point3(0, 0, 0), Point3(1, 0, 0), Point3(0, 2, 0), Point3(0.3, 0.1, 1.5)});
  const RigidTransform gt(rotation_z(deg_to_rad(90)), Point3(1, 2, 3));
  const RigidTransform t = weighted_procrustes(src, apply_transform(gt, src), std::vector<double>(4, 1.0));
  EXPECT_LT((t.rotation() - gt.rotation()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT((t.translation() - gt.translation()).norm(), 1e-9);
}

TEST(Procrustes, RecoversCoplanarConfigurations) {
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::vector<Point3> pts = testing::random_cloud(10, s).points();
    for (auto& p : pts) p.z() = 0.0;
    const PointCloud src(pts);
    const RigidTransform gt = testing::random_transform(s + 500);
    const RigidTransform t = weighted_procrustes(src, apply_transform(gt, src), std::vector<double>(10, 1.0));
    ASSERT_LT(rotation_error_deg(t.rotation(), gt.rotation()), 1e-6);
    ASSERT_NEAR(t.rotation().determinant(), 1.0, 1e-9);
  }
}

TEST(Procrustes, ZeroWeightOutlierIgnored) {
  const PointCloud src = testing::random_cloud(12, 3);
  const RigidTransform gt = testing::random_transform(3);
  std::vector<Point3> tgt = apply_transform(gt, src).points();
  tgt[5] += Point3(10, -4, 7);
  std::vector<double> w(12, 1.0);
  w[5] = 0.0;
  const RigidTransform with = weighted_procrustes(src, PointCloud(tgt), w);

  std::vector<Point3> s2 = src.points(), t2 = tgt;
  s2.erase(s2.begin() + 5);
  t2.erase(t2.begin() + 5);
  const RigidTransform without = weighted_procrustes(PointCloud(s2), PointCloud(t2), std::vector<double>(11, 1.0));
  EXPECT_LT((with.rotation() - without.rotation()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((with.translation() - without.translation()).norm(), 1e-12);
  EXPECT_LT(rotation_error_deg(with.rotation(), gt.rotation()), 1e-6);
}

TEST(Procrustes, WeightScalingInvariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  const PointCloud src = testing::random_cloud(30, 4);
  const PointCloud tgt = testing::random_cloud(30, 5);
  std::vector<double> w(30), w2(30);
  for (std::size_t i = 0; i < 30; ++i) {
    w[i] = u(rng);
    w2[i] = 37.5 * w[i];
  }
  const RigidTransform a = weighted_procrustes(src, tgt, w), b = weighted_procrustes(src, tgt, w2);
  EXPECT_LT((a.rotation() - b.rotation()).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((a.translation() - b.translation()).norm(), 1e-12);
}

TEST(Procrustes, LocallyOptimalAgainstPerturbations) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const PointCloud src = testing::random_cloud(40, 6);
  std::vector<Point3> tgt = apply_transform(testing::random_transform(6), src).points();
  std::normal_distribution<double> noise(0.0, 0.05);
  for (auto& p : tgt) p += Point3(noise(rng), noise(rng), noise(rng));
  std::vector<double> w(40);
  for (auto& x : w) x = u(rng);
  const PointCloud target(tgt);
  const RigidTransform t = weighted_procrustes(src, target, w);
  const double best = objective(t, src, target, w);
  for (int k = 0; k < 10000; ++k) {
    const double scale = std::pow(10.0, -1.0 - 4.0 * u(rng));
    const RigidTransform d(rotation_zyx(scale * (u(rng) - 0.5), scale * (u(rng) - 0.5), scale * (u(rng) - 0.5)),
                           scale * Point3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5));
    ASSERT_GE(objective(compose(d, t), src, target, w), best * (1 - 1e-12));
  }
}

TEST(Procrustes, ReflectionCorrected) {
  const PointCloud src = testing::random_cloud(20, 7, -1, 1);
  std::vector<Point3> mirrored = src.points();
  for (auto& p : mirrored) p.x() = -p.x();
  const RigidTransform t = weighted_procrustes(src, PointCloud(mirrored), std::vector<double>(20, 1.0));
  EXPECT_NEAR(t.rotation().determinant(), 1.0, 1e-9);
}

TEST(Procrustes, Errors) {
  const PointCloud src = testing::random_cloud(5, 8);
  EXPECT_THROW(weighted_procrustes(src, src, std::vector<double>(4, 1.0)), Error);
  EXPECT_THROW(weighted_procrustes(src, src, std::vector<double>(5, 0.0)), Error);
  EXPECT_THROW(weighted_procrustes(src, src, std::vector<double>{1, 1, 0, 0, 0}), Error);
  EXPECT_THROW(weighted_procrustes(src, src, std::vector<double>{1, 1, 1, -1, 1}), Error);
  const PointCloud two = testing::random_cloud(2, 1);
  EXPECT_THROW(weighted_procrustes(two, two, std::vector<double>(2, 1.0)), Error);
  const PointCloud line({Point3(0, 0, 0), Point3(1, 1, 1), Point3(2, 2, 2), Point3(3, 3, 3)});
  try {
    weighted_procrustes(line, line, std::vector<double>(4, 1.0));
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("collinear"), std::string::npos) << e.what();
  }
}

}  // namespace
}  // namespace qreg
