#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qreg/geometry.hpp"
#include "qreg/knn.hpp"
#include "qreg/matching.hpp"
#include "qreg/network.hpp"

namespace qreg {

// baseline:    full set encoder on every iteration
// cascade:     set encoder once, then one QMLP step per iteration
// handcrafted: weight-free max-pooled descriptors (testing aid, not a learned model)
enum class FeatureMode { baseline, cascade, handcrafted };

enum class SinkhornImpl { standard, log };

struct SinkhornPolicy {
  enum class Kind { fixed, adaptive };
  Kind kind = Kind::adaptive;
  int count = 5;  // iterations (fixed) or cap (adaptive)

  static SinkhornPolicy fixed(int n) { return {Kind::fixed, n}; }
  static SinkhornPolicy adaptive(int cap) { return {Kind::adaptive, cap}; }
  int iterations_for(int registration_iter) const;
};

struct RegistrationConfig {
  int iterations = 5;
  int k = 64;
  int feature_dim = kDefaultFeatureDim;
  FeatureMode mode = FeatureMode::cascade;
  bool slack = true;
  SinkhornPolicy sinkhorn = SinkhornPolicy::adaptive(5);
  SinkhornImpl sinkhorn_impl = SinkhornImpl::standard;
  // Annealing in units of the feature scale (median within-cloud nearest
  // feature distance): alpha = alpha0 * s^2, beta_i = beta0 * growth^(i-1) / s^2.
  double alpha0 = 0.1;
  double beta0 = 1.0;
  double beta_growth = 2.0;
  int normal_k = 16;
  KnnStrategy knn_strategy = KnnStrategy::automatic;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AnnealingSchedule {
  std::vector<AnnealingParams> steps;
};

struct StageTimes {
  double knn_ms = 0.0;
  double feat_ms = 0.0;
  double match_ms = 0.0;  // feature distances and similarity
  double sinkhorn_ms = 0.0;
  double procrustes_ms = 0.0;

  StageTimes& operator+=(const StageTimes& o);
};

struct IterationDiagnostics {
  int iteration = 0;
  double residual = 0.0;  // weighted RMS after the step
  double mean_weight = 0.0;
  double feature_scale = 0.0;
  int sinkhorn_iters = 0;
  StageTimes times;
  std::uint64_t ops_feat = 0;
  std::uint64_t ops_sinkhorn = 0;
};

struct RegistrationResult {
  RigidTransform transform;  // maps the original source into the reference frame
  std::vector<IterationDiagnostics> iterations;
  StageTimes setup;  // normal estimation and the initial neighbour search
  double total_ms = 0.0;

  StageTimes stage_totals() const;
  std::uint64_t ops_feat() const;
  std::uint64_t ops_sinkhorn() const;
};

const char* to_string(FeatureMode mode);
FeatureMode parse_feature_mode(const std::string& s);

AnnealingSchedule make_schedule(const RegistrationConfig& cfg);

// Cloud-level kernels (OpenMP over points).
FeatureSet pointnet_features(const PointCloud& cloud, const NeighborLists& neighbors, const MlpSpec& mlp,
                             OpCounter* ops = nullptr);
// Max-pooled dim7 descriptors, zero-padded or truncated to `dim`.
FeatureSet handcrafted_features(const PointCloud& cloud, const NeighborLists& neighbors, int dim);

// Normals are estimated when absent.
FeatureSet extract_features_iter0(const PointCloud& cloud, const RegistrationConfig& cfg,
                                  const CascadeWeights& weights, OpCounter* ops = nullptr);

FeatureSet extract_features_cascade(const FeatureSet& prev, const PointCloud& cloud_current, const Qmlp& q,
                                    OpCounter* ops = nullptr);

// Median distance from a feature to its nearest other feature in the same set,
// over at most `max_samples` evenly strided rows.
double feature_scale(const FeatureMatrix& f, std::size_t max_samples = 256);

RegistrationResult register_clouds(const PointCloud& src, const PointCloud& ref, const RegistrationConfig& cfg,
                                   const CascadeWeights& weights);
// Handcrafted mode only.
RegistrationResult register_clouds(const PointCloud& src, const PointCloud& ref, const RegistrationConfig& cfg);

}  // namespace qreg
