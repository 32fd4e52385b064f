#include "qreg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "qreg/alignment.hpp"
#include "qreg/descriptors.hpp"
#include "qreg/error.hpp"

namespace qreg {

namespace {

[[noreturn]] void fail(const std::string& msg) { throw Error("pipeline", msg); }

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

void check_neighbors(const PointCloud& cloud, const NeighborLists& nb) {
  if (!cloud.has_normals()) fail("feature extraction needs normals");
  if (nb.k == 0 || nb.size() != cloud.size()) fail("neighbour lists do not match the cloud");
}

void check_finite(const FeatureSet& f, int iteration, const char* which) {
  if (!f.values.allFinite()) {
    fail("non-finite " + std::string(which) + " features at iteration " + std::to_string(iteration));
  }
}

PointCloud with_normals(const PointCloud& c, const RegistrationConfig& cfg) {
  if (c.has_normals()) return c;
  return estimate_normals(c, std::min<std::size_t>(static_cast<std::size_t>(cfg.normal_k), c.size()));
}

}  // namespace

int SinkhornPolicy::iterations_for(int registration_iter) const {
  return kind == Kind::fixed ? count : adaptive_sinkhorn_iters(registration_iter, count);
}

void RegistrationConfig::validate() const {
  if (iterations < 1) fail("iterations must be >= 1");
  if (k < 1) fail("k must be >= 1");
  if (feature_dim < 1) fail("feature dimension must be >= 1");
  if (!(beta0 > 0.0)) fail("beta0 must be > 0");
  if (!(beta_growth >= 1.0)) fail("beta growth must be >= 1");
  if (!(alpha0 >= 0.0)) fail("alpha0 must be >= 0");
  if (sinkhorn.count < 0) fail("Sinkhorn iteration count must be >= 0");
  if (normal_k < 3) fail("normal_k must be >= 3");
}

StageTimes& StageTimes::operator+=(const StageTimes& o) {
  knn_ms += o.knn_ms;
  feat_ms += o.feat_ms;
  match_ms += o.match_ms;
  sinkhorn_ms += o.sinkhorn_ms;
  procrustes_ms += o.procrustes_ms;
  return *this;
}

StageTimes RegistrationResult::stage_totals() const {
  StageTimes t = setup;
  for (const auto& it : iterations) t += it.times;
  return t;
}

std::uint64_t RegistrationResult::ops_feat() const {
  std::uint64_t s = 0;
  for (const auto& it : iterations) s += it.ops_feat;
  return s;
}

std::uint64_t RegistrationResult::ops_sinkhorn() const {
  std::uint64_t s = 0;
  for (const auto& it : iterations) s += it.ops_sinkhorn;
  return s;
}

const char* to_string(FeatureMode mode) {
  switch (mode) {
    case FeatureMode::baseline: return "baseline";
    case FeatureMode::cascade: return "cascade";
    case FeatureMode::handcrafted: return "handcrafted";
  }
  return "?";
}

FeatureMode parse_feature_mode(const std::string& s) {
  if (s == "baseline") return FeatureMode::baseline;
  if (s == "cascade") return FeatureMode::cascade;
  if (s == "handcrafted") return FeatureMode::handcrafted;
  fail("unknown mode '" + s + "'");
}

AnnealingSchedule make_schedule(const RegistrationConfig& cfg) {
  cfg.validate();
  AnnealingSchedule s;
  double beta = cfg.beta0;
  for (int i = 0; i < cfg.iterations; ++i) {
    s.steps.push_back({cfg.alpha0, beta});
    beta *= cfg.beta_growth;
  }
  return s;
}

FeatureSet pointnet_features(const PointCloud& cloud, const NeighborLists& neighbors, const MlpSpec& mlp,
                             OpCounter* ops) {
  check_neighbors(cloud, neighbors);
  mlp.validate();
  if (mlp.in_dim() != descriptor_dim(DescriptorVariant::dim7_cascade)) fail("set encoder must take 7-dim descriptors");
  const auto n = static_cast<std::int64_t>(cloud.size());
  const auto k = static_cast<Eigen::Index>(neighbors.k);
  FeatureSet out{FeatureMatrix(n, mlp.out_dim()), 0};
  std::uint64_t macs = 0;
#pragma omp parallel reduction(+ : macs)
  {
    Eigen::MatrixXd block(k, 7);
    OpCounter local;
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto p = static_cast<std::size_t>(i);
      descriptor_block(cloud, p, {neighbors.row(p), neighbors.k}, DescriptorVariant::dim7_cascade, block);
      out.values.row(i) = pointnet_feature(mlp, block, &local).transpose();
    }
    macs += local.macs;
  }
  if (ops) ops->macs += macs;
  return out;
}

FeatureSet handcrafted_features(const PointCloud& cloud, const NeighborLists& neighbors, int dim) {
  check_neighbors(cloud, neighbors);
  if (dim < 1) fail("feature dimension must be >= 1");
  const auto n = static_cast<std::int64_t>(cloud.size());
  const auto k = static_cast<Eigen::Index>(neighbors.k);
  const Eigen::Index used = std::min<Eigen::Index>(dim, 7);
  FeatureSet out{FeatureMatrix::Zero(n, dim), 0};
#pragma omp parallel
  {
    Eigen::MatrixXd block(k, 7);
#pragma omp for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      const auto p = static_cast<std::size_t>(i);
      descriptor_block(cloud, p, {neighbors.row(p), neighbors.k}, DescriptorVariant::dim7_cascade, block);
      out.values.row(i).head(used) = block.colwise().maxCoeff().head(used);
    }
  }
  return out;
}

FeatureSet extract_features_iter0(const PointCloud& cloud, const RegistrationConfig& cfg,
                                  const CascadeWeights& weights, OpCounter* ops) {
  cfg.validate();
  if (static_cast<std::size_t>(cfg.k) > cloud.size()) {
    fail("k (" + std::to_string(cfg.k) + ") exceeds cloud size (" + std::to_string(cloud.size()) + ")");
  }
  const PointCloud c = with_normals(cloud, cfg);
  const NeighborIndex idx(c, cfg.knn_strategy);
  const NeighborLists nb = knn_all(idx, c, static_cast<std::size_t>(cfg.k));
  if (cfg.mode == FeatureMode::handcrafted) return handcrafted_features(c, nb, cfg.feature_dim);
  if (weights.empty()) fail("learned feature modes need weights");
  return pointnet_features(c, nb, weights.iter0, ops);
}

FeatureSet extract_features_cascade(const FeatureSet& prev, const PointCloud& cloud_current, const Qmlp& q,
                                    OpCounter* ops) {
  q.validate();
  if (prev.size() != static_cast<Eigen::Index>(cloud_current.size())) {
    fail("cascade step: " + std::to_string(prev.size()) + " features for " + std::to_string(cloud_current.size()) +
         " points");
  }
  if (prev.dim() != q.dim()) fail("cascade step: feature width does not match the QMLP");
  const Eigen::Index n = prev.size();
  const Eigen::Index d = q.dim();
  FeatureSet out{FeatureMatrix(n, d), prev.iteration + 1};
  constexpr Eigen::Index kBlock = 128;
  const Eigen::Index blocks = (n + kBlock - 1) / kBlock;
#pragma omp parallel for schedule(static)
  for (Eigen::Index b = 0; b < blocks; ++b) {
    const Eigen::Index r0 = b * kBlock;
    const Eigen::Index nr = std::min(kBlock, n - r0);
    Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor> x(nr, 3);
    for (Eigen::Index r = 0; r < nr; ++r) x.row(r) = cloud_current.point(static_cast<std::size_t>(r0 + r)).transpose();
    auto blk = out.values.middleRows(r0, nr);
    blk.noalias() = prev.values.middleRows(r0, nr) * q.a_prime.transpose();
    blk.noalias() += x * q.b.transpose();
    blk.rowwise() += q.bias.transpose();
    blk = blk.cwiseMax(0.0);
  }
  if (ops) ops->macs += static_cast<std::uint64_t>(n) * q.macs();
  return out;
}

double feature_scale(const FeatureMatrix& f, std::size_t max_samples) {
  const auto n = static_cast<std::size_t>(f.rows());
  if (n < 2 || max_samples == 0) return 1.0;
  const std::size_t m = std::min(n, max_samples);
  std::vector<Eigen::Index> rows(m);
  for (std::size_t t = 0; t < m; ++t) rows[t] = static_cast<Eigen::Index>(t * n / m);
  FeatureMatrix sample(static_cast<Eigen::Index>(m), f.cols());
  for (std::size_t t = 0; t < m; ++t) sample.row(static_cast<Eigen::Index>(t)) = f.row(rows[t]);
  const DistanceMatrix d = pairwise_distances(sample, f);
  std::vector<double> nearest(m);
  double mean = 0.0;
  for (std::size_t t = 0; t < m; ++t) {
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < d.cols(); ++j) {
      if (j != rows[t]) best = std::min(best, d(static_cast<Eigen::Index>(t), j));
    }
    nearest[t] = best;
    mean += d.row(static_cast<Eigen::Index>(t)).mean();
  }
  std::nth_element(nearest.begin(), nearest.begin() + static_cast<std::ptrdiff_t>(m / 2), nearest.end());
  const double med = nearest[m / 2];
  if (med > 0.0) return med;
  mean /= static_cast<double>(m);
  return mean > 0.0 ? mean : 1.0;
}

RegistrationResult register_clouds(const PointCloud& src, const PointCloud& ref, const RegistrationConfig& cfg) {
  return register_clouds(src, ref, cfg, CascadeWeights{});
}

RegistrationResult register_clouds(const PointCloud& src, const PointCloud& ref, const RegistrationConfig& cfg,
                                   const CascadeWeights& weights) {
  cfg.validate();
  const auto k = static_cast<std::size_t>(cfg.k);
  if (src.size() < k || ref.size() < k) {
    fail("both clouds need at least k = " + std::to_string(k) + " points (got " + std::to_string(src.size()) +
         " and " + std::to_string(ref.size()) + ")");
  }
  if (cfg.mode != FeatureMode::handcrafted) {
    if (weights.empty()) fail(std::string(to_string(cfg.mode)) + " mode needs weights");
    weights.validate();
    if (weights.feature_dim() != cfg.feature_dim) {
      fail("weights produce " + std::to_string(weights.feature_dim()) + "-dim features, config expects " +
           std::to_string(cfg.feature_dim));
    }
    if (cfg.mode == FeatureMode::cascade && static_cast<int>(weights.qmlps.size()) < cfg.iterations - 1) {
      fail("cascade mode with " + std::to_string(cfg.iterations) + " iterations needs " +
           std::to_string(cfg.iterations - 1) + " QMLPs, weights have " + std::to_string(weights.qmlps.size()));
    }
  }

  const Stopwatch total;
  RegistrationResult result;
  const AnnealingSchedule schedule = make_schedule(cfg);

  Stopwatch sw;
  PointCloud current = with_normals(src, cfg);
  const PointCloud target = with_normals(ref, cfg);
  NeighborLists src_nb;
  NeighborLists ref_nb;
  if (cfg.mode != FeatureMode::baseline) {
    // Rigid motion preserves neighbourhoods, so one search serves every iteration.
    src_nb = knn_all(NeighborIndex(current, cfg.knn_strategy), current, k);
    ref_nb = knn_all(NeighborIndex(target, cfg.knn_strategy), target, k);
  }
  result.setup.knn_ms = sw.ms();

  RigidTransform acc;
  FeatureSet fsrc;
  FeatureSet fref;
  for (int i = 1; i <= cfg.iterations; ++i) {
    IterationDiagnostics diag;
    diag.iteration = i;
    try {
      OpCounter ops;
      if (cfg.mode == FeatureMode::baseline) {
        sw = Stopwatch();
        src_nb = knn_all(NeighborIndex(current, cfg.knn_strategy), current, k);
        ref_nb = knn_all(NeighborIndex(target, cfg.knn_strategy), target, k);
        diag.times.knn_ms = sw.ms();
        sw = Stopwatch();
        fsrc = pointnet_features(current, src_nb, weights.iter0, &ops);
        fref = pointnet_features(target, ref_nb, weights.iter0, &ops);
      } else if (cfg.mode == FeatureMode::cascade) {
        sw = Stopwatch();
        if (i == 1) {
          fsrc = pointnet_features(current, src_nb, weights.iter0, &ops);
          fref = pointnet_features(target, ref_nb, weights.iter0, &ops);
        } else {
          const Qmlp& q = weights.qmlps[static_cast<std::size_t>(i - 2)];
          fsrc = extract_features_cascade(fsrc, current, q, &ops);
          fref = extract_features_cascade(fref, target, q, &ops);
        }
      } else {
        sw = Stopwatch();
        fsrc = handcrafted_features(current, src_nb, cfg.feature_dim);
        if (i == 1) fref = handcrafted_features(target, ref_nb, cfg.feature_dim);
      }
      diag.times.feat_ms = sw.ms();
      diag.ops_feat = ops.macs;
      check_finite(fsrc, i, "source");
      check_finite(fref, i, "reference");

      sw = Stopwatch();
      const DistanceMatrix d = pairwise_distances(fsrc, fref);
      const double scale = feature_scale(fsrc.values);
      const double s2 = scale * scale;
      const AnnealingParams& step = schedule.steps[static_cast<std::size_t>(i - 1)];
      const AnnealingParams p{step.alpha * s2, step.beta / s2};
      diag.feature_scale = scale;
      const int l = cfg.sinkhorn.iterations_for(i);
      diag.sinkhorn_iters = l;
      CorrespondenceMatrix m;
      if (cfg.sinkhorn_impl == SinkhornImpl::standard) {
        m = similarity_matrix(d, p, cfg.slack);
        diag.times.match_ms = sw.ms();
        sw = Stopwatch();
        sinkhorn_standard_inplace(m, l);
      } else {
        const RowMatrix logits = similarity_logits(d, p, cfg.slack);
        diag.times.match_ms = sw.ms();
        sw = Stopwatch();
        m = sinkhorn_log(logits, l, cfg.slack);
      }
      diag.times.sinkhorn_ms = sw.ms();
      diag.ops_sinkhorn = 2ull * static_cast<std::uint64_t>(l) * static_cast<std::uint64_t>(m.values.size());
      if (!m.values.allFinite()) fail("non-finite correspondences at iteration " + std::to_string(i));

      sw = Stopwatch();
      const SoftCorrespondences sc = soft_correspondences(m, target);
      const RigidTransform step_t = weighted_procrustes(current, sc.targets, sc.weights);
      current = apply_transform(step_t, current);
      acc = compose(step_t, acc);
      double wsum = 0.0;
      double err = 0.0;
      for (std::size_t j = 0; j < current.size(); ++j) {
        wsum += sc.weights[j];
        err += sc.weights[j] * (current.point(j) - sc.targets.point(j)).squaredNorm();
      }
      diag.residual = std::sqrt(err / wsum);
      diag.mean_weight = wsum / static_cast<double>(current.size());
      diag.times.procrustes_ms = sw.ms();
    } catch (const Error& e) {
      if (e.module() == "pipeline") throw;
      throw Error("pipeline", "iteration " + std::to_string(i) + ": " + e.what());
    }
    result.iterations.push_back(diag);
  }
  result.transform = acc;
  result.total_ms = total.ms();
  return result;
}

}  // namespace qreg
