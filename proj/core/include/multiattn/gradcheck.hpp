#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "multiattn/graph.hpp"

namespace multiattn {

/// Builds the scalar loss inside a fresh graph. Must be deterministic.
using LossBuilder = std::function<NodeId(Graph&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Denominator floor for the relative error |a - n| / max(|a|, |n|, floor).
  double floor = 1e-6;
  /// Restrict the check to these parameter ids (empty = all).
  std::vector<ParamId> only;
  std::optional<AdjointFault> fault;
};

struct ParamCheck {
  std::string name;
  std::size_t coordinates = 0;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::vector<ParamCheck> per_param;
};

/// Compares reverse-mode gradients against central differences
/// (f(p + eps) - f(p - eps)) / (2 eps), coordinate by coordinate.
/// Parameters are restored bit-exactly afterwards. Throws NumericError when
/// two evaluations at the same point disagree (non-deterministic loss).
GradCheckResult finite_difference_check(ParameterStore& params, const LossBuilder& build,
                                        const GradCheckOptions& options = {});

double relative_error(double analytic, double numeric, double floor = 1e-6);

}  // namespace multiattn
