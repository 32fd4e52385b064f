#include "qreg/selftest.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "qreg/alignment.hpp"
#include "qreg/geometry.hpp"
#include "qreg/matching.hpp"

namespace qreg {

namespace {

constexpr double kFoldTol = 1e-9;
constexpr double kSinkhornRelTol = 1e-5;
constexpr double kRotTolDeg = 1e-6;
constexpr double kTransTol = 1e-9;

Eigen::MatrixXd uniform_matrix(Eigen::Index r, Eigen::Index c, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

}  // namespace

SuiteResult fold_suite(const SelftestOptions& opt) {
  std::mt19937_64 rng(opt.seed);
  const Eigen::Index d = opt.feature_dim;
  double worst = 0.0;
  for (int p = 0; p < opt.fold_pairs; ++p) {
    const LinearLayer c_next{uniform_matrix(d, d + 3, -1, 1, rng), uniform_matrix(d, 1, -1, 1, rng)};
    const LinearLayer d_curr{uniform_matrix(d, d, -1, 1, rng), uniform_matrix(d, 1, -1, 1, rng)};
    Qmlp folded = fold_cascade(c_next, d_curr);
    if (opt.corrupt_folded) opt.corrupt_folded(folded);
    for (int t = 0; t < opt.fold_vectors; ++t) {
      const Eigen::VectorXd u = uniform_matrix(d, 1, 0, 1, rng);
      const Point3 x = uniform_matrix(3, 1, -1, 1, rng);
      Eigen::VectorXd stacked(d + 3);
      stacked << d_curr.weight * u + d_curr.bias, x;
      const Eigen::VectorXd two_step = c_next.weight * stacked + c_next.bias;
      const Eigen::VectorXd one_step = folded.a_prime * u + folded.b * x + folded.bias;
      worst = std::max(worst, (two_step - one_step).cwiseAbs().maxCoeff());
    }
  }
  std::ostringstream s;
  s << "max |folded - unfolded| = " << worst << " (tol " << kFoldTol << ")";
  return {"fold-equivalence", worst < kFoldTol, s.str()};
}

SuiteResult sinkhorn_suite(const SelftestOptions& opt) {
  std::mt19937_64 rng(opt.seed + 1);
  constexpr Eigen::Index n = 64;
  double worst = 0.0;
  for (int t = 0; t < opt.sinkhorn_matrices; ++t) {
    const RowMatrix logits = uniform_matrix(n, n, std::log(1e-4), std::log(1e4), rng);
    CorrespondenceMatrix m{logits.array().exp().matrix(), false};
    sinkhorn_standard_inplace(m, 20);
    const CorrespondenceMatrix l = sinkhorn_log(logits, 20, false);
    worst = std::max(worst, ((m.values - l.values).cwiseAbs().array() / l.values.array()).maxCoeff());
  }
  std::ostringstream s;
  s << "max relative difference standard vs log = " << worst << " (tol " << kSinkhornRelTol << ")";
  return {"sinkhorn-equivalence", worst < kSinkhornRelTol, s.str()};
}

SuiteResult procrustes_suite(const SelftestOptions& opt) {
  std::mt19937_64 rng(opt.seed + 2);
  double worst_r = 0.0;
  double worst_t = 0.0;
  for (int t = 0; t < opt.procrustes_trials; ++t) {
    const RigidTransform gt = sample_random_transform(180.0, 1.0, rng());
    const Eigen::MatrixXd pts = uniform_matrix(3, 8, -1, 1, rng);
    std::vector<Point3> src;
    for (Eigen::Index j = 0; j < pts.cols(); ++j) src.push_back(pts.col(j));
    const PointCloud s(src);
    const PointCloud tgt = apply_transform(gt, s);
    const std::vector<double> w(src.size(), 1.0);
    const RigidTransform est = weighted_procrustes(s, tgt, w);
    worst_r = std::max(worst_r, rotation_error_deg(est.rotation(), gt.rotation()));
    worst_t = std::max(worst_t, (est.translation() - gt.translation()).norm());
  }
  std::ostringstream s;
  s << "max RE = " << worst_r << " deg, max TE = " << worst_t;
  return {"procrustes-recovery", worst_r < kRotTolDeg && worst_t < kTransTol, s.str()};
}

std::vector<SuiteResult> run_selftest(const SelftestOptions& opt, std::ostream& out) {
  std::vector<SuiteResult> results{fold_suite(opt), sinkhorn_suite(opt), procrustes_suite(opt)};
  for (const auto& r : results) out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
  return results;
}

int selftest_exit_code(const SelftestOptions& opt, std::ostream& out) {
  const auto results = run_selftest(opt, out);
  const bool ok = std::all_of(results.begin(), results.end(), [](const SuiteResult& r) { return r.passed; });
  return ok ? 0 : 1;
}

}  // namespace qreg
