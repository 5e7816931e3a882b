#include "multiattn/generators.hpp"

#include <cstdio>

#include "multiattn/errors.hpp"
#include "multiattn/rng.hpp"

namespace multiattn {

namespace {

constexpr const char* kMaskToken = "<mask>";
constexpr const char* kNoneToken = "<none>";

void check_lengths(std::size_t min_len, std::size_t max_len, std::size_t vocab_size) {
  if (min_len == 0 || min_len > max_len) throw ConfigError("invalid length range");
  if (vocab_size < 2) throw ConfigError("vocab_size must be at least 2");
}

std::string marker(std::size_t pos) { return "@" + std::to_string(pos); }

}  // namespace

std::vector<std::string> content_tokens(std::size_t vocab_size) {
  std::vector<std::string> out;
  const int width = vocab_size <= 100 ? 2 : vocab_size <= 1000 ? 3 : 6;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "w%0*zu", width, i);
    out.emplace_back(buf);
  }
  return out;
}

Dataset gen_masked_copy(const MaskedCopyParams& p) {
  check_lengths(p.min_len, p.max_len, p.vocab_size);
  if (!(p.mask_rate > 0.0 && p.mask_rate < 1.0)) throw ConfigError("mask_rate must lie in (0, 1)");

  const auto words = content_tokens(p.vocab_size);
  Dataset data;
  data.header.task = "masked_copy";
  std::vector<std::string> vocab_a = words;
  vocab_a.emplace_back(kMaskToken);
  std::vector<std::string> vocab_b = words;
  for (std::size_t pos = 0; pos < p.max_len; ++pos) vocab_b.push_back(marker(pos));
  vocab_b.emplace_back(kNoneToken);
  data.header.sources = {{"masked", SourceKind::Tokens, vocab_a, 0}, {"fills", SourceKind::Tokens, vocab_b, 0}};
  data.header.target_vocab = words;

  SeededRng rng(p.seed);
  for (std::size_t n = 0; n < p.count; ++n) {
    const auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(p.min_len),
                                                          static_cast<std::int64_t>(p.max_len)));
    Sentence target, a, b;
    std::vector<std::size_t> annotation;
    for (std::size_t i = 0; i < len; ++i) {
      const auto& w = words[rng.below(p.vocab_size)];
      target.push_back(w);
      if (rng.bernoulli(p.mask_rate)) {
        a.emplace_back(kMaskToken);
        b.push_back(marker(i));
        b.push_back(w);
        annotation.push_back(1);
      } else {
        a.push_back(w);
        annotation.push_back(0);
      }
    }
    if (b.empty()) b.emplace_back(kNoneToken);
    data.examples.push_back({{std::move(a), std::move(b)}, std::move(target), std::move(annotation)});
  }
  return data;
}

double masked_copy_ceiling(double mask_rate, std::size_t vocab_size) {
  return 1.0 - mask_rate + mask_rate / static_cast<double>(vocab_size);
}

Dataset gen_toy_ape(const ToyApeParams& p) {
  check_lengths(p.min_len, p.max_len, p.vocab_size);
  for (double r : {p.substitution_rate, p.deletion_rate, p.insertion_rate}) {
    if (!(r >= 0.0 && r < 1.0)) throw ConfigError("corruption rates must lie in [0, 1)");
  }
  const double total = p.substitution_rate + p.deletion_rate + p.insertion_rate;
  if (!(total < 1.0)) throw ConfigError("corruption rates must sum to less than 1");

  const auto words = content_tokens(p.vocab_size);
  Dataset data;
  data.header.task = "toy_ape";
  data.header.sources = {{"src", SourceKind::Tokens, words, 0}, {"mt", SourceKind::Tokens, words, 0}};
  std::vector<std::string> ops{edit_to_token(EditOp::keep()), edit_to_token(EditOp::del())};
  for (const auto& w : words) ops.push_back(edit_to_token(EditOp::insert(w)));
  data.header.target_vocab = ops;
  data.header.edit_source = 1;

  SeededRng rng(p.seed);
  auto other_word = [&](const std::string& w) {
    // Uniform over the vocabulary minus w.
    auto idx = rng.below(p.vocab_size - 1);
    if (words[idx] >= w) ++idx;
    return words[idx];
  };
  while (data.examples.size() < p.count) {
    const auto len = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(p.min_len),
                                                          static_cast<std::int64_t>(p.max_len)));
    Sentence clean, mt;
    for (std::size_t i = 0; i < len; ++i) clean.push_back(words[rng.below(p.vocab_size)]);
    for (const auto& w : clean) {
      const double u = rng.uniform();
      if (u < p.substitution_rate) {
        mt.push_back(other_word(w));
      } else if (u < p.substitution_rate + p.deletion_rate) {
        // dropped
      } else if (u < total) {
        mt.push_back(w);
        mt.push_back(words[rng.below(p.vocab_size)]);
      } else {
        mt.push_back(w);
      }
    }
    if (mt.empty()) continue;  // encoders need at least one token
    auto target = edits_to_tokens(encode_edits(mt, clean));
    data.examples.push_back({{clean, mt}, std::move(target), std::nullopt});
  }
  return data;
}

double toy_ape_expected_edit_ops(const ToyApeParams& p) {
  const double mean_len = 0.5 * static_cast<double>(p.min_len + p.max_len);
  return mean_len * (2.0 * p.substitution_rate + p.deletion_rate + p.insertion_rate);
}

double toy_ape_baseline_ter(const ToyApeParams& p) {
  return p.substitution_rate + p.deletion_rate + p.insertion_rate;
}

}  // namespace multiattn
