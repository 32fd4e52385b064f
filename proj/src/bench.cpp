#include "qreg/bench.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "qreg/error.hpp"
#include "qreg/synth.hpp"

namespace qreg {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  if (v.size() % 2 == 1) return v[mid];
  const double hi = v[mid];
  const double lo = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

std::string csv_header() {
  return "mode,N,K,L,D,rep,seed,t_knn_ms,t_feat_ms,t_sinkhorn_ms,t_procrustes_ms,t_total_ms,ops_feat,ops_sinkhorn";
}

std::string csv_row(const BenchRecord& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), "%s,%zu,%d,%d,%d,%d,%llu,%.4f,%.4f,%.4f,%.4f,%.4f,%llu,%llu", to_string(r.mode), r.n,
                r.k, r.l, r.d, r.rep, static_cast<unsigned long long>(r.seed), r.t_knn_ms, r.t_feat_ms,
                r.t_sinkhorn_ms, r.t_procrustes_ms, r.t_total_ms, static_cast<unsigned long long>(r.ops_feat),
                static_cast<unsigned long long>(r.ops_sinkhorn));
  return buf;
}

std::vector<BenchRecord> run_bench(const BenchOptions& opt, std::ostream& csv) {
  if (opt.repeat < 1) throw Error("bench_cli", "repeat must be >= 1");
  if (opt.sizes.empty() || opt.modes.empty()) throw Error("bench_cli", "need at least one size and one mode");
  const CascadeWeights weights = init_random(opt.seed, opt.iterations, opt.feature_dim);
  std::vector<BenchRecord> records;
  csv << csv_header() << '\n';
  for (std::size_t n : opt.sizes) {
    if (n < static_cast<std::size_t>(opt.k)) {
      throw Error("bench_cli", "size " + std::to_string(n) + " is smaller than k = " + std::to_string(opt.k));
    }
    SynthConfig sc;
    sc.n_points = n;
    sc.keep_fraction = 1.0;
    sc.seed = opt.seed;
    const SynthPair pair = synth_pair(sc, make_base_shape(BaseShape::helix, n, opt.seed));
    for (FeatureMode mode : opt.modes) {
      RegistrationConfig cfg;
      cfg.mode = mode;
      cfg.k = opt.k;
      cfg.iterations = opt.iterations;
      cfg.feature_dim = opt.feature_dim;
      cfg.sinkhorn = opt.sinkhorn;
      cfg.seed = opt.seed;
      register_clouds(pair.src, pair.ref, cfg, weights);  // warm-up, discarded
      for (int rep = 0; rep < opt.repeat; ++rep) {
        const RegistrationResult res = register_clouds(pair.src, pair.ref, cfg, weights);
        const StageTimes t = res.stage_totals();
        BenchRecord r;
        r.mode = mode;
        r.n = n;
        r.k = opt.k;
        r.l = opt.iterations;
        r.d = opt.feature_dim;
        r.rep = rep;
        r.seed = opt.seed;
        r.t_knn_ms = t.knn_ms;
        r.t_feat_ms = t.feat_ms;
        r.t_sinkhorn_ms = t.sinkhorn_ms;
        r.t_procrustes_ms = t.procrustes_ms;
        r.t_total_ms = res.total_ms;
        r.ops_feat = res.ops_feat();
        r.ops_sinkhorn = res.ops_sinkhorn();
        csv << csv_row(r) << '\n' << std::flush;
        records.push_back(r);
      }
    }
  }
  return records;
}

void write_bench_summary(const BenchOptions& opt, const std::vector<BenchRecord>& records, std::ostream& out) {
  const CascadeWeights weights = init_random(opt.seed, opt.iterations, opt.feature_dim);
  out << "# summary\n";
  for (std::size_t n : opt.sizes) {
    std::map<FeatureMode, std::vector<double>> times;
    std::map<FeatureMode, std::uint64_t> ops;
    for (const auto& r : records) {
      if (r.n != n) continue;
      times[r.mode].push_back(r.t_total_ms);
      ops[r.mode] = r.ops_feat;
    }
    for (FeatureMode m : opt.modes) {
      out << "# N=" << n << " mode=" << to_string(m) << " median_total_ms=" << median(times[m])
          << " ops_feat=" << ops[m] << '\n';
    }
    if (times.count(FeatureMode::baseline) && times.count(FeatureMode::cascade)) {
      const auto analytic = [&](ExtractorMode em) {
        // Both clouds have n points.
        return 2 * flop_estimate(weights, n, static_cast<std::uint64_t>(opt.k),
                                 static_cast<std::uint64_t>(opt.iterations), em)
                       .total;
      };
      const std::uint64_t ab = analytic(ExtractorMode::baseline);
      const std::uint64_t ac = analytic(ExtractorMode::cascade);
      const auto proxy = [&](ExtractorMode em) {
        return static_cast<double>(flop_estimate(weights, n, static_cast<std::uint64_t>(opt.k),
                                                 static_cast<std::uint64_t>(opt.iterations), em)
                                       .proxy);
      };
      out << "# N=" << n << " time_ratio_baseline_over_cascade="
          << median(times[FeatureMode::baseline]) / median(times[FeatureMode::cascade])
          << " ops_ratio_measured="
          << static_cast<double>(ops[FeatureMode::baseline]) / static_cast<double>(ops[FeatureMode::cascade])
          << " ops_ratio_analytic=" << static_cast<double>(ab) / static_cast<double>(ac)
          << " ops_ratio_proxy=" << proxy(ExtractorMode::baseline) / proxy(ExtractorMode::cascade)
          << " ops_match_analytic="
          << ((ops[FeatureMode::baseline] == ab && ops[FeatureMode::cascade] == ac) ? "yes" : "no") << '\n';
    }
  }
}

}  // namespace qreg
