#pragma once

#include "multiattn/gradcheck.hpp"
#include "multiattn/model.hpp"

namespace multiattn {

/// A tiny two-source model (hidden 4, embed 3, attn 5, vocabularies of 7
/// ids, sources of length 3 and 2) with one fixed training pair, used to
/// check full-model gradients.
struct TinySetup {
  MultiSourceModel model;
  EncodedExample example;
};

TinySetup tiny_setup(const CombinationConfig& combination, DecoderKind decoder, std::uint64_t seed = 3);

/// Finite-difference check of every parameter of the tiny model.
GradCheckResult check_model_gradients(const CombinationConfig& combination, DecoderKind decoder,
                                      const GradCheckOptions& options = {});

}  // namespace multiattn
