#pragma once

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "qreg/network.hpp"

namespace qreg {

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SelftestOptions {
  int feature_dim = kDefaultFeatureDim;
  int fold_pairs = 10;
  int fold_vectors = 200;
  int sinkhorn_matrices = 20;
  int procrustes_trials = 200;
  std::uint64_t seed = 1;
  // Applied to every folded QMLP before it is compared (fault injection).
  std::function<void(Qmlp&)> corrupt_folded;
};

SuiteResult fold_suite(const SelftestOptions& opt);
SuiteResult sinkhorn_suite(const SelftestOptions& opt);
SuiteResult procrustes_suite(const SelftestOptions& opt);

// Runs the three suites and prints one line per suite.
std::vector<SuiteResult> run_selftest(const SelftestOptions& opt, std::ostream& out);

// Process exit code for the selftest command: 0 iff every suite passed, else 1.
int selftest_exit_code(const SelftestOptions& opt, std::ostream& out);

}  // namespace qreg
