#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "multiattn/dataset.hpp"

namespace multiattn {

/// Two-source copy task. Each target is a random sequence; source A is the
/// target with positions masked independently at `mask_rate`; source B lists
/// each masked position as a marker "@p" followed by the hidden token, or the
/// single token "<none>" when nothing is masked. Masked target positions are
/// annotated as depending on source B (index 1), the rest on source A.
struct MaskedCopyParams {
  std::uint64_t seed = 1;
  std::size_t count = 2000;
  std::size_t min_len = 8;
  std::size_t max_len = 12;
  std::size_t vocab_size = 20;
  double mask_rate = 0.3;
};

Dataset gen_masked_copy(const MaskedCopyParams& params);

/// Expected token accuracy of the best predictor that only sees source A:
/// 1 - mask_rate + mask_rate / vocab_size.
double masked_copy_ceiling(double mask_rate, std::size_t vocab_size);

/// Toy post-editing task. "src" is a clean sequence, "mt" a seeded
/// corruption of it (per token: substitute, delete, or insert a random token
/// after it), and the target is the edit script turning mt into src.
struct ToyApeParams {
  std::uint64_t seed = 1;
  std::size_t count = 2000;
  std::size_t min_len = 8;
  std::size_t max_len = 12;
  std::size_t vocab_size = 20;
  double substitution_rate = 0.05;
  double deletion_rate = 0.03;
  double insertion_rate = 0.03;
};

Dataset gen_toy_ape(const ToyApeParams& params);

/// Expected number of Delete/Insert ops per sentence:
/// E[len] * (2 * sub + del + ins).
double toy_ape_expected_edit_ops(const ToyApeParams& params);

/// Expected TER of the do-nothing baseline (keep the MT output), taking each
/// corruption as one word edit against the reference: sub + del + ins.
double toy_ape_baseline_ter(const ToyApeParams& params);

std::vector<std::string> content_tokens(std::size_t vocab_size);

}  // namespace multiattn
