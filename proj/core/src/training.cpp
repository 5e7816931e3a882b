#include "multiattn/training.hpp"

#include <cstdio>
#include <cstdlib>
#include <numeric>
#include <ostream>
#include <string>
#include <thread>

#include "multiattn/errors.hpp"
#include "multiattn/metrics.hpp"

namespace multiattn {

void TrainConfig::validate() const {
  adam.validate();
  if (batch_size == 0 || max_steps == 0 || valid_interval == 0 || max_decode_len == 0) {
    throw ConfigError("train: batch_size, max_steps, valid_interval and max_decode_len must be positive");
  }
  if (patience < 1) throw ConfigError("train: patience must be at least 1");
  if (target_accuracy && !(*target_accuracy > 0.0 && *target_accuracy <= 1.0)) {
    throw ConfigError("train: target_accuracy must lie in (0, 1]");
  }
}

double train_step(MultiSourceModel& model, std::span<const EncodedExample> batch, AdamState& state,
                  const AdamConfig& config) {
  Graph g(&model.params());
  const ForwardResult fwd = model.forward_loss(g, batch);
  Gradients grads = g.backward(fwd.loss);
  const double loss = g.value(fwd.loss).item();
  adam_step(model.params(), grads, state, config);
  return loss;
}

double mean_loss(const MultiSourceModel& model, std::span<const EncodedExample> examples, std::size_t batch_size) {
  if (examples.empty()) throw DataError("mean_loss: no examples");
  double total = 0.0;
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < examples.size(); i += batch_size) {
    const auto batch = examples.subspan(i, std::min(batch_size, examples.size() - i));
    Graph g(&model.params());
    const ForwardResult fwd = model.forward_loss(g, batch);
    total += g.value(fwd.loss).item() * static_cast<double>(fwd.tokens);
    tokens += fwd.tokens;
  }
  return total / static_cast<double>(tokens);
}

std::size_t configured_threads() {
  const char* env = std::getenv("MULTIATTN_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const unsigned long n = std::strtoul(env, &end, 10);
  if (*end != '\0' || n == 0) throw ConfigError("MULTIATTN_THREADS must be a positive integer, got '" +
                                                std::string(env) + "'");
  return n;
}

std::vector<DecodeResult> decode_all(const MultiSourceModel& model, std::span<const EncodedExample> examples,
                                     std::size_t max_len, std::size_t threads) {
  if (threads == 0) threads = configured_threads();
  threads = std::min(threads, std::max<std::size_t>(examples.size(), 1));
  std::vector<DecodeResult> out(examples.size());
  if (threads <= 1) {
    for (std::size_t i = 0; i < examples.size(); ++i) out[i] = model.greedy_decode(examples[i], max_len);
    return out;
  }
  // Strided split; each worker owns its output slots.
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < examples.size(); i += threads) out[i] = model.greedy_decode(examples[i], max_len);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::vector<AttentionTrace> teacher_forced_traces(const MultiSourceModel& model,
                                                  std::span<const EncodedExample> examples) {
  std::vector<AttentionTrace> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    Graph g(&model.params());
    auto fwd = model.forward_loss(g, std::span(&ex, 1));
    out.push_back(std::move(fwd.traces.front()));
  }
  return out;
}

Scores score(std::span<const Sentence> hypotheses, std::span<const Sentence> references) {
  Scores s;
  s.bleu = bleu(hypotheses, references);
  s.ter_noshift = corpus_ter_noshift(hypotheses, references);
  s.token_accuracy = token_accuracy(hypotheses, references);
  s.count = references.size();
  return s;
}

namespace {

CurvePoint validate_model(const MultiSourceModel& model, std::span<const EncodedExample> valid, const TrainConfig& cfg,
                          std::size_t step, double train_loss) {
  CurvePoint p;
  p.step = step;
  p.train_loss = train_loss;
  p.valid_loss = mean_loss(model, valid, cfg.batch_size);
  const auto decoded = decode_all(model, valid, cfg.max_decode_len);
  std::vector<Sentence> hyps, refs;
  for (std::size_t i = 0; i < valid.size(); ++i) {
    hyps.push_back(model.detokenize(decoded[i].tokens));
    refs.push_back(model.detokenize(valid[i].target));
  }
  p.valid_accuracy = token_accuracy(hyps, refs);
  p.valid_bleu = bleu(hyps, refs);
  return p;
}

}  // namespace

TrainResult train(MultiSourceModel& model, std::span<const EncodedExample> train_set,
                  std::span<const EncodedExample> valid_set, const TrainConfig& config, const ValidationHook& hook) {
  config.validate();
  if (train_set.empty()) throw DataError("train: empty training set");
  if (valid_set.empty()) throw DataError("train: empty validation set");

  AdamState state(model.params());
  SeededRng rng(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  std::size_t cursor = 0;

  TrainResult result;
  std::vector<Tensor> best;
  std::size_t since_best = 0;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;
  std::vector<EncodedExample> batch;

  for (std::size_t step = 1; step <= config.max_steps; ++step) {
    batch.clear();
    while (batch.size() < config.batch_size) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      batch.push_back(train_set[order[cursor++]]);
      if (batch.size() == train_set.size()) break;
    }
    loss_sum += train_step(model, batch, state, config.adam);
    ++loss_count;
    result.steps = step;

    if (step % config.valid_interval != 0 && step != config.max_steps) continue;
    const CurvePoint point = validate_model(model, valid_set, config, step, loss_sum / static_cast<double>(loss_count));
    loss_sum = 0.0;
    loss_count = 0;
    result.curve.push_back(point);

    if (best.empty() || point.valid_loss < result.best_valid_loss) {
      result.best_valid_loss = point.valid_loss;
      result.best_step = step;
      best.clear();
      for (ParamId id = 0; id < model.params().size(); ++id) best.push_back(model.params().value(id));
      since_best = 0;
    } else if (++since_best >= config.patience) {
      result.early_stopped = true;
    }
    if (config.target_accuracy && point.valid_accuracy >= *config.target_accuracy) result.reached_target = true;
    const bool keep_going = !hook || hook(point);
    if (result.early_stopped || result.reached_target || !keep_going) break;
  }
  for (ParamId id = 0; id < best.size(); ++id) model.params().value(id) = best[id];
  return result;
}

std::optional<std::size_t> steps_to_accuracy(std::span<const CurvePoint> curve, double threshold) {
  for (const auto& p : curve) {
    if (p.valid_accuracy >= threshold) return p.step;
  }
  return std::nullopt;
}

void write_curves_tsv(std::ostream& out, std::span<const CurvePoint> curve) {
  out << "step\ttrain_loss\tvalid_loss\tvalid_accuracy\tvalid_bleu\n";
  char buf[160];
  for (const auto& p : curve) {
    std::snprintf(buf, sizeof buf, "%zu\t%.9g\t%.9g\t%.9g\t%.9g\n", p.step, p.train_loss, p.valid_loss,
                  p.valid_accuracy, p.valid_bleu);
    out << buf;
  }
}

}  // namespace multiattn
