// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "qreg/alignment.hpp"
#include "qreg/bench.hpp"
#include "qreg/knn.hpp"
#include "qreg/matching.hpp"
#include "qreg/network.hpp"
#include "qreg/parallel.hpp"
#include "qreg/pipeline.hpp"
#include "qreg/synth.hpp"

namespace {

using namespace qreg;
using Clock = std::chrono::steady_clock;

double elapsed_s(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

template <typename F>
double time_ms(F&& f) {
  const auto t0 = Clock::now();
  f();
  return 1e3 * elapsed_s(t0);
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

Eigen::MatrixXd uniform(Eigen::Index r, Eigen::Index c, double lo, double hi, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(lo, hi);
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

// 1. Folded QMLP equals the unfolded two-matrix path.
Outcome fold_equivalence() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::mt19937_64 rng(s);
    const Eigen::MatrixXd c = uniform(96, 99, -1, 1, rng), d = uniform(96, 96, -1, 1, rng);
    const FoldedMatrices f = fold_cascade(c, d);
    const Eigen::MatrixXd u = uniform(96, 1000, 0, 1, rng), x = uniform(3, 1000, -1, 1, rng);
    Eigen::MatrixXd stacked(99, 1000);
    stacked << d * u, x;
    worst = std::max(worst, (f.a_prime * u + f.b * x - c * stacked).cwiseAbs().maxCoeff());
  }
  const double secs = elapsed_s(t0);
  return {worst < 1e-9 && secs < 10.0, fmt("max abs diff %.3g (< 1e-9), %.2f s (< 10 s)", worst, secs)};
}

RowMatrix log_uniform_matrix(Eigen::Index n, std::mt19937_64& rng) {
  return uniform(n, n, std::log(1e-4), std::log(1e4), rng).array().exp().matrix();
}

// 2. Standard and log-domain Sinkhorn agree; l = 50 is doubly stochastic.
Outcome sinkhorn_equivalence() {
  double worst_rel = 0.0, worst_sum = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::mt19937_64 rng(1000 + s);
    const RowMatrix m = log_uniform_matrix(64, rng);
    const RowMatrix a = sinkhorn_standard({m, false}, 20).values;
    const RowMatrix b = sinkhorn_log(m.array().log().matrix(), 20).values;
    worst_rel = std::max(worst_rel, ((a - b).cwiseAbs().array() / b.array()).maxCoeff());
    const RowMatrix c = sinkhorn_standard({m, false}, 50).values;
    worst_sum = std::max({worst_sum, (c.rowwise().sum().array() - 1.0).abs().maxCoeff(),
                          (c.colwise().sum().array() - 1.0).abs().maxCoeff()});
  }
  return {worst_rel < 1e-5 && worst_sum < 1e-6,
          fmt("max rel diff %.3g (< 1e-5), max |sum - 1| at l=50 %.3g (< 1e-6)", worst_rel, worst_sum)};
}

// 3. Standard Sinkhorn (including the exp) versus log-domain at 1024 x 1024.
Outcome sinkhorn_speed() {
  set_num_threads(1);
  const auto t0 = Clock::now();
  std::mt19937_64 rng(3);
  const RowMatrix logits = uniform(1024, 1024, -10, 0, rng);
  std::vector<double> ts, tl;
  for (int r = 0; r < 12; ++r) {
    CorrespondenceMatrix m;
    const double a = time_ms([&] {
      m = {logits.array().exp().matrix(), false};
      sinkhorn_standard_inplace(m, 5);
    });
    CorrespondenceMatrix lm;
    const double b = time_ms([&] { lm = sinkhorn_log(logits, 5); });
    if (r == 0) continue;  // warm-up
    ts.push_back(a);
    tl.push_back(b);
  }
  set_num_threads(0);
  const double ms = median(ts), ml = median(tl), secs = elapsed_s(t0);
  return {ml / ms >= 1.5 && secs < 30.0,
          fmt("median standard %.2f ms, log %.2f ms, speedup %.2fx (>= 1.5x), %.1f s", ms, ml, ml / ms, secs)};
}

// 4. Exact Procrustes recovery, coplanar (reflection-prone) sets included,
// zero-weight outliers ignored.
Outcome procrustes_recovery() {
  double worst_re = 0.0, worst_te = 0.0, worst_mask = 0.0;
  int reflections = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    std::mt19937_64 rng(5000 + s);
    const RigidTransform gt = sample_random_transform(180.0, 1.0, rng());
    const int n = 4 + static_cast<int>(s % 7);
    Eigen::MatrixXd p = uniform(3, n, -1, 1, rng);
    if (s % 3 == 0) p.row(2).setZero();  // coplanar
    std::vector<Point3> src;
    for (int j = 0; j < n; ++j) src.push_back(p.col(j));
    std::vector<Point3> tgt = apply_transform(gt, PointCloud(src)).points();

    // Reflection-prone check: the unconstrained optimum would be improper.
    Matrix3 h = Matrix3::Zero();
    Point3 cs = Point3::Zero(), ct = Point3::Zero();
    for (int j = 0; j < n; ++j) {
      cs += src[static_cast<std::size_t>(j)] / n;
      ct += tgt[static_cast<std::size_t>(j)] / n;
    }
    for (int j = 0; j < n; ++j) h += (src[static_cast<std::size_t>(j)] - cs) * (tgt[static_cast<std::size_t>(j)] - ct).transpose();
    const Svd3Result svd = svd3(h);
    if ((svd.v * svd.u.transpose()).determinant() < 0) ++reflections;

    const RigidTransform est = weighted_procrustes(PointCloud(src), PointCloud(tgt), std::vector<double>(n, 1.0));
    worst_re = std::max(worst_re, rotation_error_deg(est.rotation(), gt.rotation()));
    worst_te = std::max(worst_te, (est.translation() - gt.translation()).norm());

    // Append two gross outliers with zero weight.
    std::vector<Point3> src_o = src, tgt_o = tgt;
    std::vector<double> w(n, 1.0);
    for (int k = 0; k < 2; ++k) {
      src_o.push_back(uniform(3, 1, -1, 1, rng).col(0));
      tgt_o.push_back(uniform(3, 1, -50, 50, rng).col(0));
      w.push_back(0.0);
    }
    const RigidTransform masked = weighted_procrustes(PointCloud(src_o), PointCloud(tgt_o), w);
    worst_mask = std::max({worst_mask, (masked.rotation() - est.rotation()).cwiseAbs().maxCoeff(),
                           (masked.translation() - est.translation()).norm()});
  }
  return {worst_re < 1e-6 && worst_te < 1e-9 && worst_mask < 1e-12,
          fmt("worst RE %.3g deg (< 1e-6), TE %.3g (< 1e-9), outlier effect %.3g; %d reflection-prone cases", worst_re,
              worst_te, worst_mask, reflections)};
}

// 5. Construct-and-recover on the helix.
Outcome end_to_end() {
  const auto t0 = Clock::now();
  int ok = 0;
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    SynthConfig sc;
    sc.n_points = 512;
    sc.keep_fraction = 1.0;
    sc.noise_sigma = 0.0;
    sc.max_rot_deg = 45.0;
    sc.seed = s;
    const SynthPair p = synth_pair(sc, make_base_shape(BaseShape::helix, 512, s));
    RegistrationConfig cfg;
    cfg.mode = FeatureMode::handcrafted;
    cfg.slack = false;
    const RegistrationResult r = register_clouds(p.src, p.ref, cfg);
    const Metrics m = metrics(r.transform, p.gt, p.src, p.ref);
    if (m.re_deg <= 1.0 && m.te <= 0.01) ++ok;
    worst = std::max(worst, m.re_deg);
  }
  const double secs = elapsed_s(t0);
  return {ok >= 95 && secs < 60.0, fmt("%d/100 seeds within RE 1 deg, TE 0.01 (>= 95); worst RE %.3g deg; %.1f s", ok,
                                       worst, secs)};
}

struct SpeedSetup {
  SynthPair pair;
  CascadeWeights weights;
  RegistrationConfig cfg;
};

SpeedSetup speed_setup() {
  SynthConfig sc;
  sc.n_points = 1024;
  sc.keep_fraction = 1.0;
  SpeedSetup s{synth_pair(sc, make_base_shape(BaseShape::helix, 1024, 0)), init_random(0, 5), {}};
  s.cfg.k = 64;
  s.cfg.iterations = 5;
  s.cfg.sinkhorn = SinkhornPolicy::fixed(5);
  return s;
}

// 6. Measured feature-stage op counts equal the analytic estimate.
Outcome op_counts(const SpeedSetup& s) {
  RegistrationConfig cfg = s.cfg;
  cfg.mode = FeatureMode::baseline;
  const std::uint64_t base = register_clouds(s.pair.src, s.pair.ref, cfg, s.weights).ops_feat();
  cfg.mode = FeatureMode::cascade;
  const std::uint64_t casc = register_clouds(s.pair.src, s.pair.ref, cfg, s.weights).ops_feat();
  const std::uint64_t n = s.pair.src.size();
  const std::uint64_t eb = 2 * flop_estimate(s.weights, n, 64, 5, ExtractorMode::baseline).total;
  const std::uint64_t ec = 2 * flop_estimate(s.weights, n, 64, 5, ExtractorMode::cascade).total;
  const double ratio = static_cast<double>(base) / static_cast<double>(casc);
  return {base == eb && casc == ec && ratio >= 4.5 && ratio <= 4.8,
          fmt("baseline %llu (estimate %llu), cascade %llu (estimate %llu), ratio %.4f in [4.5, 4.8]",
              static_cast<unsigned long long>(base), static_cast<unsigned long long>(eb),
              static_cast<unsigned long long>(casc), static_cast<unsigned long long>(ec), ratio)};
}

// 7. Single-threaded end-to-end speedup of cascade over baseline.
Outcome scaled_speedup(const SpeedSetup& s) {
  set_num_threads(1);
  std::vector<double> tb, tc;
  RegistrationConfig cb = s.cfg, cc = s.cfg;
  cb.mode = FeatureMode::baseline;
  cc.mode = FeatureMode::cascade;
  register_clouds(s.pair.src, s.pair.ref, cb, s.weights);  // warm-up
  register_clouds(s.pair.src, s.pair.ref, cc, s.weights);
  for (int r = 0; r < 11; ++r) {
    tb.push_back(register_clouds(s.pair.src, s.pair.ref, cb, s.weights).total_ms);
    tc.push_back(register_clouds(s.pair.src, s.pair.ref, cc, s.weights).total_ms);
  }
  set_num_threads(0);
  const double mb = median(tb), mc = median(tc);
  return {mb / mc >= 2.0, fmt("median baseline %.1f ms, cascade %.1f ms, speedup %.2fx (>= 2.0x)", mb, mc, mb / mc)};
}

// 8. Adaptive Sinkhorn schedule: counts 1..5 and less Sinkhorn time than fixed(5).
Outcome adaptive_sinkhorn() {
  SynthConfig sc;
  sc.n_points = 1024;
  sc.keep_fraction = 1.0;
  const SynthPair p = synth_pair(sc, make_base_shape(BaseShape::helix, 1024, 1));
  RegistrationConfig fixed;
  fixed.mode = FeatureMode::handcrafted;
  fixed.sinkhorn = SinkhornPolicy::fixed(5);
  RegistrationConfig adaptive = fixed;
  adaptive.sinkhorn = SinkhornPolicy::adaptive(5);

  std::vector<int> counts;
  std::vector<double> ta, tf;
  for (int r = 0; r < 6; ++r) {
    const RegistrationResult ra = register_clouds(p.src, p.ref, adaptive);
    const RegistrationResult rf = register_clouds(p.src, p.ref, fixed);
    if (r == 0) {
      for (const auto& it : ra.iterations) counts.push_back(it.sinkhorn_iters);
      continue;
    }
    ta.push_back(ra.stage_totals().sinkhorn_ms);
    tf.push_back(rf.stage_totals().sinkhorn_ms);
  }
  const bool counts_ok = counts == std::vector<int>{1, 2, 3, 4, 5};
  std::string cs;
  for (int c : counts) cs += (cs.empty() ? "" : ",") + std::to_string(c);
  const double ma = median(ta), mf = median(tf);
  return {counts_ok && ma < mf,
          fmt("counts (%s) (expected 1,2,3,4,5), median Sinkhorn time adaptive %.2f ms < fixed(5) %.2f ms", cs.c_str(),
              ma, mf)};
}

// 9. Grid KNN equals brute force, and is no slower at N = 8192, k = 64.
Outcome knn_crossover() {
  int equal = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::mt19937_64 rng(9000 + s);
    std::uniform_real_distribution<double> u(0, 1);
    const std::size_t n = 100 + 50 * (s % 30);
    std::vector<Point3> pts(n);
    for (auto& q : pts) q = Point3(u(rng), u(rng), (s % 2) ? u(rng) : 0.1 * u(rng));
    const PointCloud c(pts);
    const std::size_t k = std::min<std::size_t>(n, 32);
    const NeighborLists g = knn_all(NeighborIndex(c, KnnStrategy::grid), c, k);
    const NeighborLists b = knn_all(NeighborIndex(c, KnnStrategy::brute), c, k);
    if (g.indices == b.indices && g.distances == b.distances) ++equal;
  }

  set_num_threads(1);
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<Point3> pts(8192);
  for (auto& q : pts) q = Point3(u(rng), u(rng), u(rng));
  const PointCloud c(pts);
  std::vector<double> tg, tb;
  for (int r = 0; r < 3; ++r) {
    tg.push_back(time_ms([&] { knn_all(NeighborIndex(c, KnnStrategy::grid), c, 64); }));
    tb.push_back(time_ms([&] { knn_all(NeighborIndex(c, KnnStrategy::brute), c, 64); }));
  }
  set_num_threads(0);
  const double mg = median(tg), mb = median(tb);
  return {equal == 100 && mg <= mb,
          fmt("%d/100 clouds identical; N=8192 k=64 grid %.1f ms <= brute %.1f ms (%.1fx)", equal, mg, mb, mb / mg)};
}

// 10. svd3 reconstruction and orthogonality.
Outcome svd3_accuracy() {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g;
  double worst_rec = 0.0, worst_orth = 0.0;
  for (int t = 0; t < 10000; ++t) {
    Matrix3 a;
    for (int i = 0; i < 9; ++i) a(i) = g(rng);
    if (t % 10 == 0) a.col(2) = 0.5 * a.col(0) - 2.0 * a.col(1);  // rank deficient
    const Svd3Result r = svd3(a);
    worst_rec = std::max(worst_rec, (r.u * r.s.asDiagonal() * r.v.transpose() - a).norm() / a.norm());
    worst_orth = std::max({worst_orth, (r.u.transpose() * r.u - Matrix3::Identity()).cwiseAbs().maxCoeff(),
                           (r.v.transpose() * r.v - Matrix3::Identity()).cwiseAbs().maxCoeff()});
  }
  return {worst_rec < 1e-9 && worst_orth < 1e-9,
          fmt("worst relative reconstruction %.3g (< 1e-9), orthogonality defect %.3g (< 1e-9)", worst_rec, worst_orth)};
}

}  // namespace

int main() {
  const SpeedSetup speed = speed_setup();
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"fold-equivalence", fold_equivalence},
      {"sinkhorn-equivalence", sinkhorn_equivalence},
      {"sinkhorn-speed", sinkhorn_speed},
      {"procrustes-recovery", procrustes_recovery},
      {"end-to-end-recovery", end_to_end},
      {"op-count-ratio", [&] { return op_counts(speed); }},
      {"cascade-speedup", [&] { return scaled_speedup(speed); }},
      {"adaptive-sinkhorn", adaptive_sinkhorn},
      {"knn-grid", knn_crossover},
      {"svd3", svd3_accuracy},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failed;
}
