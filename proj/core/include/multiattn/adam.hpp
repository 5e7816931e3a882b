#pragma once

#include <cstdint>
#include <vector>

#include "multiattn/graph.hpp"

namespace multiattn {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

/// First and second moments per parameter, plus the step counter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(const ParameterStore& store);
};

/// One bias-corrected Adam update of every parameter in the store.
/// Throws ShapeError if a gradient or moment does not match its parameter.
void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state, const AdamConfig& config);

}  // namespace multiattn
