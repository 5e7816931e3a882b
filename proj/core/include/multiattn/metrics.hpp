#pragma once

#include <span>
#include <vector>

#include "multiattn/edits.hpp"

namespace multiattn {

/// Word-level Levenshtein distance (substitution, insertion, deletion cost 1).
std::size_t levenshtein(std::span<const std::string> a, std::span<const std::string> b);

/// Corpus BLEU-4: geometric mean of clipped n-gram precisions (n = 1..4)
/// times the brevity penalty exp(1 - r/c) when c <= r. A zero match count
/// for n >= 2 is smoothed to 1 / (total + 1). Empty hypotheses score 0.
double bleu(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

/// Translation error rate without block shifts: levenshtein / |reference|.
double ter_noshift(std::span<const std::string> hypothesis, std::span<const std::string> reference);

/// Corpus form: total edit distance over total reference length.
double corpus_ter_noshift(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

/// Position-wise matches over sum of max(|hyp|, |ref|).
double token_accuracy(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

}  // namespace multiattn
