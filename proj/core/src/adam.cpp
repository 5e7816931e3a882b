#include "multiattn/adam.hpp"

#include <cmath>

#include "multiattn/errors.hpp"

namespace multiattn {

void AdamConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam: learning rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adam: betas must lie in [0, 1)");
  }
  if (!(eps > 0.0)) throw ConfigError("adam: eps must be positive");
}

AdamState::AdamState(const ParameterStore& store) {
  m.reserve(store.size());
  v.reserve(store.size());
  for (ParamId id = 0; id < store.size(); ++id) {
    m.push_back(Tensor::zeros_like(store.value(id)));
    v.push_back(Tensor::zeros_like(store.value(id)));
  }
}

void adam_step(ParameterStore& params, const Gradients& grads, AdamState& state, const AdamConfig& config) {
  if (grads.size() != params.size() || state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam: parameter, gradient and state counts differ");
  }
  for (ParamId id = 0; id < params.size(); ++id) {
    const auto& shape = params.value(id).shape();
    if (grads[id].shape() != shape || state.m[id].shape() != shape || state.v[id].shape() != shape) {
      throw ShapeError("adam: shape mismatch for " + params.name(id) + ": param " + shape_to_string(shape) +
                       ", grad " + shape_to_string(grads[id].shape()));
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (ParamId id = 0; id < params.size(); ++id) {
    auto p = params.value(id).data();
    const auto g = grads[id].data();
    auto m = state.m[id].data();
    auto v = state.v[id].data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
      p[i] -= config.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + config.eps);
    }
  }
}

}  // namespace multiattn
