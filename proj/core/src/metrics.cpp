#include "multiattn/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "multiattn/errors.hpp"

namespace multiattn {

namespace {

void check_corpus(std::span<const Sentence> hyps, std::span<const Sentence> refs, const char* metric) {
  if (hyps.empty()) throw DataError(std::string(metric) + ": empty corpus");
  if (hyps.size() != refs.size()) {
    throw DataError(std::string(metric) + ": " + std::to_string(hyps.size()) + " hypotheses vs " +
                    std::to_string(refs.size()) + " references");
  }
}

using NgramCounts = std::map<std::vector<std::string>, std::size_t>;

NgramCounts ngrams(const Sentence& s, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= s.size(); ++i) {
    ++out[std::vector<std::string>(s.begin() + static_cast<std::ptrdiff_t>(i),
                                   s.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return out;
}

}  // namespace

std::size_t levenshtein(std::span<const std::string> a, std::span<const std::string> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

double bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  check_corpus(hypotheses, references, "bleu");
  constexpr std::size_t kMaxN = 4;
  std::size_t matches[kMaxN] = {};
  std::size_t totals[kMaxN] = {};
  std::size_t hyp_len = 0, ref_len = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const Sentence& hyp = hypotheses[s];
    const Sentence& ref = references[s];
    if (ref.empty()) throw DataError("bleu: empty reference at index " + std::to_string(s));
    hyp_len += hyp.size();
    ref_len += ref.size();
    for (std::size_t n = 1; n <= kMaxN; ++n) {
      const auto h = ngrams(hyp, n);
      const auto r = ngrams(ref, n);
      for (const auto& [gram, count] : h) {
        totals[n - 1] += count;
        if (auto it = r.find(gram); it != r.end()) matches[n - 1] += std::min(count, it->second);
      }
    }
  }
  if (hyp_len == 0 || matches[0] == 0) return 0.0;

  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    double p;
    if (n > 0 && matches[n] == 0) {
      p = 1.0 / static_cast<double>(totals[n] + 1);
    } else {
      p = static_cast<double>(matches[n]) / static_cast<double>(totals[n]);
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(hyp_len);
  const double r = static_cast<double>(ref_len);
  const double bp = c > r ? 1.0 : std::exp(1.0 - r / c);
  return bp * std::exp(log_sum / kMaxN);
}

double ter_noshift(std::span<const std::string> hypothesis, std::span<const std::string> reference) {
  if (reference.empty()) throw DataError("ter_noshift: empty reference");
  return static_cast<double>(levenshtein(hypothesis, reference)) / static_cast<double>(reference.size());
}

double corpus_ter_noshift(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  check_corpus(hypotheses, references, "ter_noshift");
  std::size_t edits = 0, length = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    if (references[s].empty()) throw DataError("ter_noshift: empty reference at index " + std::to_string(s));
    edits += levenshtein(hypotheses[s], references[s]);
    length += references[s].size();
  }
  return static_cast<double>(edits) / static_cast<double>(length);
}

double token_accuracy(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  check_corpus(hypotheses, references, "token_accuracy");
  std::size_t matches = 0, total = 0;
  for (std::size_t s = 0; s < hypotheses.size(); ++s) {
    const auto& h = hypotheses[s];
    const auto& r = references[s];
    total += std::max(h.size(), r.size());
    for (std::size_t i = 0; i < std::min(h.size(), r.size()); ++i) matches += h[i] == r[i] ? 1 : 0;
  }
  if (total == 0) return 1.0;
  return static_cast<double>(matches) / static_cast<double>(total);
}

}  // namespace multiattn
