#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "multiattn/adam.hpp"
#include "multiattn/model.hpp"

namespace multiattn {

/// Batch size, step budget and stopping rule are not given by the original
/// experiments; the defaults here are desk-scale choices.
struct TrainConfig {
  AdamConfig adam;
  std::size_t batch_size = 32;
  std::size_t max_steps = 20000;
  std::size_t valid_interval = 250;
  /// Validations without a new best validation loss before stopping.
  std::size_t patience = 5;
  std::uint64_t seed = 1;
  /// Stop as soon as validation token accuracy reaches this value.
  std::optional<double> target_accuracy;
  std::size_t max_decode_len = 64;

  void validate() const;
};

struct CurvePoint {
  std::size_t step = 0;
  double train_loss = 0.0;  // mean batch loss since the previous row
  double valid_loss = 0.0;
  double valid_accuracy = 0.0;
  double valid_bleu = 0.0;

  bool operator==(const CurvePoint&) const = default;
};

struct TrainResult {
  std::vector<CurvePoint> curve;
  std::size_t steps = 0;
  std::size_t best_step = 0;
  double best_valid_loss = 0.0;
  bool early_stopped = false;
  bool reached_target = false;
};

/// Called after each validation; returning false stops training.
using ValidationHook = std::function<bool(const CurvePoint&)>;

/// Trains in place with Adam on shuffled mini-batches (reshuffled per epoch
/// from config.seed). On return the model holds the parameters with the best
/// validation loss. Deterministic for a given model, data and config.
TrainResult train(MultiSourceModel& model, std::span<const EncodedExample> train_set,
                  std::span<const EncodedExample> valid_set, const TrainConfig& config,
                  const ValidationHook& hook = nullptr);

/// One optimizer step on a batch; returns the batch loss before the update.
double train_step(MultiSourceModel& model, std::span<const EncodedExample> batch, AdamState& state,
                  const AdamConfig& config);

/// Mean token cross-entropy over a dataset, evaluated in batches.
double mean_loss(const MultiSourceModel& model, std::span<const EncodedExample> examples,
                 std::size_t batch_size = 32);

/// Greedy decodes of every example. Examples are independent, so work is
/// spread over `threads` workers (0 reads MULTIATTN_THREADS, default 1);
/// the result does not depend on the thread count.
std::vector<DecodeResult> decode_all(const MultiSourceModel& model, std::span<const EncodedExample> examples,
                                     std::size_t max_len, std::size_t threads = 0);

/// Teacher-forced attention traces, one per example.
std::vector<AttentionTrace> teacher_forced_traces(const MultiSourceModel& model,
                                                  std::span<const EncodedExample> examples);

struct Scores {
  double bleu = 0.0;
  double ter_noshift = 0.0;
  double token_accuracy = 0.0;
  std::size_t count = 0;
};

Scores score(std::span<const Sentence> hypotheses, std::span<const Sentence> references);

/// Worker count from MULTIATTN_THREADS (at least 1).
std::size_t configured_threads();

/// First curve step whose validation accuracy reaches `threshold`.
std::optional<std::size_t> steps_to_accuracy(std::span<const CurvePoint> curve, double threshold);

/// Header "step\ttrain_loss\tvalid_loss\tvalid_accuracy\tvalid_bleu", values
/// printed with %.9g so identical runs give identical files.
void write_curves_tsv(std::ostream& out, std::span<const CurvePoint> curve);

}  // namespace multiattn
