#include "multiattn/init.hpp"

#include <cmath>

namespace multiattn {

ParamId add_weight(ParameterStore& store, std::string name, std::size_t rows, std::size_t cols, SeededRng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor w(Shape{rows, cols});
  for (auto& x : w.data()) x = rng.uniform(-r, r);
  return store.add(std::move(name), std::move(w));
}

ParamId add_vector_weight(ParameterStore& store, std::string name, std::size_t size, SeededRng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(size + 1));
  Tensor v(Shape{size});
  for (auto& x : v.data()) x = rng.uniform(-r, r);
  return store.add(std::move(name), std::move(v));
}

ParamId add_bias(ParameterStore& store, std::string name, std::size_t size) {
  return store.add(std::move(name), Tensor(Shape{size}));
}

}  // namespace multiattn
