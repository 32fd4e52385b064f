// qreg: register point clouds, generate synthetic pairs, benchmark the
// feature extractors and run the built-in consistency suites.

#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "qreg/bench.hpp"
#include "qreg/error.hpp"
#include "qreg/io.hpp"
#include "qreg/parallel.hpp"
#include "qreg/pipeline.hpp"
#include "qreg/selftest.hpp"
#include "qreg/synth.hpp"

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

qreg::SinkhornPolicy parse_sinkhorn(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos) throw UsageError("--sinkhorn expects fixed:N or adaptive:N");
  const std::string kind = s.substr(0, colon);
  int n = -1;
  try {
    std::size_t used = 0;
    n = std::stoi(s.substr(colon + 1), &used);
    if (used != s.size() - colon - 1) n = -1;
  } catch (const std::exception&) {
    n = -1;
  }
  if (n < 0) throw UsageError("--sinkhorn count must be a nonnegative integer");
  if (kind == "fixed") return qreg::SinkhornPolicy::fixed(n);
  if (kind == "adaptive") return qreg::SinkhornPolicy::adaptive(n);
  throw UsageError("--sinkhorn kind must be fixed or adaptive");
}

std::string format_transform(const qreg::RigidTransform& t) {
  std::ostringstream s;
  s.precision(17);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) s << t.rotation()(r, c) << ' ';
  s << t.translation().x() << ' ' << t.translation().y() << ' ' << t.translation().z();
  return s.str();
}

struct RegisterArgs {
  std::string src, ref, mode, weights, out, gt;
  std::string sinkhorn = "adaptive:5";
  int iters = 5;
  int k = 64;
  std::uint64_t seed = 0;
  bool no_slack = false;
};

int run_register(const RegisterArgs& a) {
  qreg::RegistrationConfig cfg;
  try {
    cfg.mode = qreg::parse_feature_mode(a.mode);
  } catch (const qreg::Error& e) {
    throw UsageError(e.what());
  }
  cfg.iterations = a.iters;
  cfg.k = a.k;
  cfg.seed = a.seed;
  cfg.slack = !a.no_slack;
  cfg.sinkhorn = parse_sinkhorn(a.sinkhorn);
  if (a.iters < 1) throw UsageError("--iters must be >= 1");
  if (a.k < 1) throw UsageError("--k must be >= 1");

  const qreg::PointCloud src = qreg::read_cloud(a.src);
  const qreg::PointCloud ref = qreg::read_cloud(a.ref);
  qreg::CascadeWeights weights;
  if (cfg.mode != qreg::FeatureMode::handcrafted) {
    if (!a.weights.empty()) {
      weights = qreg::load_weights(a.weights);
      cfg.feature_dim = static_cast<int>(weights.feature_dim());
    } else {
      std::cerr << "warning: no --weights given; using seeded random weights (seed " << a.seed << ")\n";
      weights = qreg::init_random(a.seed, a.iters, cfg.feature_dim);
    }
  }

  const qreg::RegistrationResult res = qreg::register_clouds(src, ref, cfg, weights);
  std::cout << "mode " << qreg::to_string(cfg.mode) << ", " << src.size() << " source / " << ref.size()
            << " reference points, " << cfg.iterations << " iterations\n";
  for (const auto& it : res.iterations) {
    std::printf("  iter %d: residual %.6g  mean weight %.4f  sinkhorn %d  feat %.2f ms  sinkhorn %.2f ms\n",
                it.iteration, it.residual, it.mean_weight, it.sinkhorn_iters, it.times.feat_ms, it.times.sinkhorn_ms);
  }
  std::cout << "transform " << format_transform(res.transform) << '\n';
  std::printf("total %.2f ms, feature ops %llu\n", res.total_ms, static_cast<unsigned long long>(res.ops_feat()));

  std::string metrics_line;
  if (!a.gt.empty()) {
    const qreg::RigidTransform gt = qreg::read_transform(a.gt);
    const qreg::Metrics m = qreg::metrics(res.transform, gt, src, ref);
    std::ostringstream s;
    s.precision(10);
    s << "metrics " << m.re_deg << ' ' << m.te << ' ' << m.cd;
    metrics_line = s.str();
    std::printf("RE %.6f deg  TE %.6g  CD %.6g\n", m.re_deg, m.te, m.cd);
  }
  if (!a.out.empty()) {
    std::ofstream out(a.out);
    if (!out) throw qreg::Error("bench_cli", "cannot write '" + a.out + "'");
    out << format_transform(res.transform) << '\n';
    if (!metrics_line.empty()) out << metrics_line << '\n';
  }
  return 0;
}

struct SynthArgs {
  std::string shape = "helix";
  std::size_t n = 1024;
  double keep = 0.7;
  double noise = 0.01;
  double max_rot = 45.0;
  double max_trans = 0.5;
  std::uint64_t seed = 0;
  std::string prefix = "synth";
};

int run_synth(const SynthArgs& a) {
  qreg::SynthConfig cfg;
  cfg.n_points = a.n;
  cfg.keep_fraction = a.keep;
  cfg.noise_sigma = a.noise;
  cfg.max_rot_deg = a.max_rot;
  cfg.max_trans = a.max_trans;
  cfg.seed = a.seed;
  qreg::BaseShape shape;
  try {
    shape = qreg::parse_shape(a.shape);
    cfg.validate();
  } catch (const qreg::Error& e) {
    throw UsageError(e.what());
  }
  if (a.n < 8) throw UsageError("--n must be >= 8");
  const qreg::SynthPair pair = qreg::synth_pair(cfg, qreg::make_base_shape(shape, 2 * a.n, a.seed));
  qreg::write_cloud(pair.src, a.prefix + "_src.xyz");
  qreg::write_cloud(pair.ref, a.prefix + "_ref.xyz");
  qreg::write_transform(pair.gt, a.prefix + "_gt.txt");
  std::cout << "wrote " << a.prefix << "_src.xyz (" << pair.src.size() << " points), " << a.prefix << "_ref.xyz ("
            << pair.ref.size() << " points), " << a.prefix << "_gt.txt\n";
  return 0;
}

struct BenchArgs {
  std::vector<std::size_t> sizes{256, 1024, 4096};
  std::vector<std::string> modes{"baseline", "cascade"};
  int repeat = 5;
  std::uint64_t seed = 0;
  int k = 64;
  int iters = 5;
  std::string sinkhorn = "fixed:5";
};

int run_bench(const BenchArgs& a) {
  if (a.repeat < 1) throw UsageError("--repeat must be >= 1");
  if (a.k < 1 || a.iters < 1) throw UsageError("--k and --iters must be >= 1");
  qreg::BenchOptions opt;
  opt.sizes = a.sizes;
  opt.modes.clear();
  for (const auto& m : a.modes) {
    try {
      opt.modes.push_back(qreg::parse_feature_mode(m));
    } catch (const qreg::Error& e) {
      throw UsageError(e.what());
    }
    if (opt.modes.back() == qreg::FeatureMode::handcrafted) throw UsageError("bench modes are baseline and cascade");
  }
  for (auto n : opt.sizes) {
    if (n < static_cast<std::size_t>(a.k)) throw UsageError("every size must be >= k");
  }
  opt.repeat = a.repeat;
  opt.seed = a.seed;
  opt.k = a.k;
  opt.iterations = a.iters;
  opt.sinkhorn = parse_sinkhorn(a.sinkhorn);
  const auto records = qreg::run_bench(opt, std::cout);
  qreg::write_bench_summary(opt, records, std::cout);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative point-cloud registration with cascaded feature extraction"};
  app.require_subcommand(1);
  int threads = 0;
  app.add_option("--threads", threads, "OpenMP threads for the kernels (default: all cores)");

  RegisterArgs reg;
  auto* cmd_reg = app.add_subcommand("register", "Register --src onto --ref");
  cmd_reg->add_option("--src", reg.src, "Source cloud (.xyz or .ply)")->required();
  cmd_reg->add_option("--ref", reg.ref, "Reference cloud (.xyz or .ply)")->required();
  cmd_reg->add_option("--mode", reg.mode, "baseline | cascade | handcrafted")->required();
  cmd_reg->add_option("--weights", reg.weights, "Weight file (NTW 1)");
  cmd_reg->add_option("--iters", reg.iters, "Registration iterations")->capture_default_str();
  cmd_reg->add_option("--k", reg.k, "Neighbours per point")->capture_default_str();
  cmd_reg->add_option("--seed", reg.seed, "Seed for synthesized weights")->capture_default_str();
  cmd_reg->add_option("--out", reg.out, "Write the 12-number transform (and metrics) here");
  cmd_reg->add_option("--sinkhorn", reg.sinkhorn, "fixed:N or adaptive:N")->capture_default_str();
  cmd_reg->add_flag("--no-slack", reg.no_slack, "Disable the slack row and column");
  cmd_reg->add_option("--gt", reg.gt, "Ground-truth transform file; prints RE/TE/CD");

  SynthArgs syn;
  auto* cmd_syn = app.add_subcommand("synth", "Generate a corrupted synthetic pair");
  cmd_syn->add_option("--shape", syn.shape, "cube_grid | sphere | two_planes | helix")->capture_default_str();
  cmd_syn->add_option("--n", syn.n, "Points sampled per cloud before cropping")->capture_default_str();
  cmd_syn->add_option("--keep", syn.keep, "Fraction kept by the half-space crop, in (0, 1]")->capture_default_str();
  cmd_syn->add_option("--noise", syn.noise, "Gaussian noise sigma per coordinate")->capture_default_str();
  cmd_syn->add_option("--max-rot", syn.max_rot, "Maximum Euler angle in degrees")->capture_default_str();
  cmd_syn->add_option("--max-trans", syn.max_trans, "Maximum translation per axis")->capture_default_str();
  cmd_syn->add_option("--seed", syn.seed, "Random seed")->capture_default_str();
  cmd_syn->add_option("--out-prefix", syn.prefix, "Output prefix")->capture_default_str();

  BenchArgs ben;
  auto* cmd_ben = app.add_subcommand("bench", "Benchmark baseline vs cascade extraction; CSV on stdout");
  cmd_ben->add_option("--sizes", ben.sizes, "Comma-separated point counts")->delimiter(',')->capture_default_str();
  cmd_ben->add_option("--modes", ben.modes, "Comma-separated modes")->delimiter(',')->capture_default_str();
  cmd_ben->add_option("--repeat", ben.repeat, "Timed repetitions per configuration")->capture_default_str();
  cmd_ben->add_option("--seed", ben.seed, "Random seed")->capture_default_str();
  cmd_ben->add_option("--k", ben.k, "Neighbours per point")->capture_default_str();
  cmd_ben->add_option("--iters", ben.iters, "Registration iterations")->capture_default_str();
  cmd_ben->add_option("--sinkhorn", ben.sinkhorn, "fixed:N or adaptive:N")->capture_default_str();

  qreg::SelftestOptions st;
  auto* cmd_self = app.add_subcommand("selftest", "Run the fold, Sinkhorn and Procrustes consistency suites");
  cmd_self->add_option("--seed", st.seed, "Random seed")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  try {
    if (threads < 0) throw UsageError("--threads must be >= 0");
    qreg::set_num_threads(threads);
    if (*cmd_reg) return run_register(reg);
    if (*cmd_syn) return run_synth(syn);
    if (*cmd_ben) return run_bench(ben);
    if (*cmd_self) return qreg::selftest_exit_code(st, std::cout);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const qreg::Error& e) {
    std::cerr << "error [" << e.module() << "]: " << e.what() << '\n';
    return kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
