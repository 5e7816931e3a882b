#pragma once

#include <string>

#include "multiattn/graph.hpp"
#include "multiattn/rng.hpp"

namespace multiattn {

/// Registers a rows x cols weight drawn from uniform(-r, r) with
/// r = sqrt(6 / (rows + cols)).
ParamId add_weight(ParameterStore& store, std::string name, std::size_t rows, std::size_t cols, SeededRng& rng);

/// Registers a weight vector (a 1 x size projection stored as rank 1).
ParamId add_vector_weight(ParameterStore& store, std::string name, std::size_t size, SeededRng& rng);

/// Registers a zero bias vector.
ParamId add_bias(ParameterStore& store, std::string name, std::size_t size);

}  // namespace multiattn
