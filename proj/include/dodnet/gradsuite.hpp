#pragma once
// Finite-difference checks over every differentiable building block and the
// whole micro model, shared by the CLI and the test suite.

#include <cstdint>
#include <string>
#include <vector>

#include "dodnet/config.hpp"
#include "dodnet/gradcheck.hpp"

namespace dodnet {

inline constexpr double kGradTolerance = 1e-4;

struct GradCase {
  std::string name;
  GradCheckReport report;
  /// Entries within h of a kink are skipped (see grad_check). A case still
  /// fails unless most probed entries, and at least `min_verified` of them,
  /// were actually compared.
  std::size_t min_verified = 1;
  bool passed() const {
    const std::size_t probed = report.checked + report.nonsmooth;
    return report.checked >= min_verified && 2 * report.checked > probed && report.max_rel_err < kGradTolerance;
  }
};

/// d=12, 2 heads, 2 levels, 2 points, stages {4, 8}, one encoder and one
/// decoder layer, head width 4, depth 3, 2 tasks.
ModelConfig micro_config();

/// Runs all cases at 64-bit with h = 1e-4. `model` drives the end-to-end case
/// on a volume of 8 voxels per axis (or the model's spatial multiple if larger).
std::vector<GradCase> run_grad_suite(std::uint64_t seed, const ModelConfig& model = micro_config());

/// Only the case called `name`; ConfigError for unknown names.
GradCase run_grad_case(const std::string& name, std::uint64_t seed, const ModelConfig& model = micro_config());

std::vector<std::string> grad_case_names();

}  // namespace dodnet
