#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "qreg/pipeline.hpp"

namespace qreg {

struct BenchRecord {
  FeatureMode mode = FeatureMode::cascade;
  std::size_t n = 0;
  int k = 0;
  int l = 0;
  int d = 0;
  int rep = 0;
  std::uint64_t seed = 0;
  double t_knn_ms = 0.0;
  double t_feat_ms = 0.0;
  double t_sinkhorn_ms = 0.0;
  double t_procrustes_ms = 0.0;
  double t_total_ms = 0.0;
  std::uint64_t ops_feat = 0;
  std::uint64_t ops_sinkhorn = 0;
};

struct BenchOptions {
  std::vector<std::size_t> sizes{256, 1024, 4096};
  std::vector<FeatureMode> modes{FeatureMode::baseline, FeatureMode::cascade};
  int repeat = 5;
  std::uint64_t seed = 0;
  int k = 64;
  int iterations = 5;
  int feature_dim = kDefaultFeatureDim;
  SinkhornPolicy sinkhorn = SinkhornPolicy::fixed(5);
};

std::string csv_header();
std::string csv_row(const BenchRecord& r);

// Runs every (size, mode) pair with one discarded warm-up, streaming CSV rows
// to `csv` as they complete, and returns the records.
std::vector<BenchRecord> run_bench(const BenchOptions& opt, std::ostream& csv);

// '#'-prefixed summary: median time ratios and measured vs analytic op ratios.
void write_bench_summary(const BenchOptions& opt, const std::vector<BenchRecord>& records, std::ostream& out);

double median(std::vector<double> v);

}  // namespace qreg
