#include "multiattn_cli/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <ostream>

#include "multiattn/checkpoint.hpp"
#include "multiattn/dataset.hpp"
#include "multiattn/errors.hpp"
#include "multiattn/generators.hpp"
#include "multiattn/model_check.hpp"
#include "multiattn/trace.hpp"
#include "multiattn/training.hpp"
#include "multiattn_cli/config.hpp"

namespace multiattn::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

/// Input files that do not exist are usage errors (exit 2), not runtime ones.
Dataset load_input(const fs::path& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string("no ") + what + " data file given");
  if (!fs::exists(path)) throw ConfigError(std::string(what) + " data file not found: " + path.string());
  return load_dataset(path);
}

MultiSourceModel load_model(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("checkpoint not found: " + path.string());
  return load_checkpoint_file(path);
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error("cannot create output directory " + dir.string());
}

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream f(path, mode | std::ios::trunc);
  if (!f) throw Error("cannot write " + path.string());
  return f;
}

Dataset maybe_select(Dataset data, const std::vector<std::size_t>& sources) {
  return sources.empty() ? data : select_sources(data, sources);
}

json scores_json(const Scores& s) {
  return {{"bleu", s.bleu}, {"ter_noshift", s.ter_noshift}, {"token_accuracy", s.token_accuracy}, {"count", s.count}};
}

// gen-data ------------------------------------------------------------------

struct GenArgs {
  std::string task = "masked-copy";
  std::uint64_t seed = 1;
  std::string out = "data";
  std::size_t train = 2000, valid = 200, test = 200;
  std::size_t vocab = 20, min_len = 8, max_len = 12;
  double mask_rate = 0.3;
  double sub = 0.05, del = 0.03, ins = 0.03;
};

int cmd_gen_data(const GenArgs& a, std::ostream& out) {
  const std::size_t total = a.train + a.valid + a.test;
  if (a.train == 0 || a.valid == 0 || a.test == 0) throw ConfigError("gen-data: split sizes must be positive");
  Dataset all;
  if (a.task == "masked-copy") {
    all = gen_masked_copy({a.seed, total, a.min_len, a.max_len, a.vocab, a.mask_rate});
  } else if (a.task == "toy-ape") {
    all = gen_toy_ape({a.seed, total, a.min_len, a.max_len, a.vocab, a.sub, a.del, a.ins});
  } else {
    throw ConfigError("gen-data: unknown task '" + a.task + "' (masked-copy or toy-ape)");
  }
  ensure_dir(a.out);
  const std::pair<const char*, std::size_t> splits[] = {{"train", a.train}, {"valid", a.valid}, {"test", a.test}};
  std::size_t offset = 0;
  json record = {{"task", a.task}, {"seed", a.seed}};
  for (const auto& [name, n] : splits) {
    Dataset part{all.header, {}};
    part.examples.assign(all.examples.begin() + static_cast<std::ptrdiff_t>(offset),
                         all.examples.begin() + static_cast<std::ptrdiff_t>(offset + n));
    offset += n;
    const fs::path path = fs::path(a.out) / (std::string(name) + ".jsonl");
    save_dataset(path, part);
    record[name] = {{"path", path.string()}, {"count", n}};
  }
  out << record.dump() << '\n';
  return kOk;
}

// train -----------------------------------------------------------------------

struct Overrides {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> strategy, decoder, out, train_data, valid_data;
  std::optional<std::size_t> max_steps;
  std::optional<double> lr;
  bool share = false, sentinel = false;
};

ExperimentConfig resolve_config(const Overrides& o) {
  ExperimentConfig c = o.config.empty() ? ExperimentConfig{} : [&] {
    if (!fs::exists(o.config)) throw ConfigError("config file not found: " + o.config);
    return load_config(o.config);
  }();
  if (o.seed) c.seed = *o.seed;
  if (o.strategy) c.model.combination.strategy = parse_strategy(*o.strategy);
  if (o.decoder) c.model.decoder = parse_decoder(*o.decoder);
  if (o.share) c.model.combination.share_projections = true;
  if (o.sentinel) c.model.combination.use_sentinel = true;
  if (o.out) c.out_dir = *o.out;
  if (o.train_data) c.train_data = *o.train_data;
  if (o.valid_data) c.valid_data = *o.valid_data;
  if (o.max_steps) c.train.max_steps = *o.max_steps;
  if (o.lr) c.train.adam.lr = *o.lr;
  c.model.seed = c.seed;
  c.train.seed = c.seed;
  c.validate();
  return c;
}

int cmd_train(const Overrides& o, std::ostream& out, std::ostream& err) {
  const ExperimentConfig c = resolve_config(o);
  const Dataset train_data = maybe_select(load_input(c.train_data, "train"), c.sources);
  const Dataset valid_data = maybe_select(load_input(c.valid_data, "valid"), c.sources);
  if (!(train_data.header.sources == valid_data.header.sources) ||
      train_data.header.target_vocab != valid_data.header.target_vocab) {
    throw DataError("train and valid datasets have different schemas");
  }
  validate(train_data);
  validate(valid_data);

  MultiSourceModel model(c.model, train_data.header.sources, train_data.header.target_vocab);
  const auto train_set = model.encode_all(train_data.examples);
  const auto valid_set = model.encode_all(valid_data.examples);
  ensure_dir(c.out_dir);
  open_out(c.out_dir / "config.json") << config_to_json(c);

  const TrainResult r = train(model, train_set, valid_set, c.train, [&](const CurvePoint& p) {
    err << "step " << p.step << " train_loss " << p.train_loss << " valid_loss " << p.valid_loss << " valid_accuracy "
        << p.valid_accuracy << '\n';
    return true;
  });
  {
    auto f = open_out(c.out_dir / "curves.tsv");
    write_curves_tsv(f, r.curve);
  }
  save_checkpoint_file(c.out_dir / "checkpoint.bin", model);

  json record = {{"steps", r.steps},
                 {"best_step", r.best_step},
                 {"best_valid_loss", r.best_valid_loss},
                 {"early_stopped", r.early_stopped},
                 {"reached_target", r.reached_target},
                 {"parameters", model.params().scalar_count()},
                 {"checkpoint", (c.out_dir / "checkpoint.bin").string()},
                 {"curves", (c.out_dir / "curves.tsv").string()}};
  if (!r.curve.empty()) record["final_valid_accuracy"] = r.curve.back().valid_accuracy;
  out << record.dump() << '\n';
  return kOk;
}

// eval ------------------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint, data, out;
  std::vector<std::size_t> sources;
  std::size_t max_len = 64;
  bool gold = false;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const MultiSourceModel model = load_model(a.checkpoint);
  const Dataset data = maybe_select(load_input(a.data, "eval"), a.sources);
  validate(data);
  check_compatible(model, data.header);

  std::vector<Sentence> hyps, refs;
  if (a.gold) {
    for (const auto& ex : data.examples) hyps.push_back(ex.target);
  } else {
    const auto encoded = model.encode_all(data.examples);
    for (const auto& d : decode_all(model, encoded, a.max_len)) hyps.push_back(model.detokenize(d.tokens));
  }
  for (const auto& ex : data.examples) refs.push_back(ex.target);

  json record = {{"checkpoint", a.checkpoint}, {"data", a.data}, {"hypotheses", a.gold ? "gold" : "greedy"}};
  record["target"] = scores_json(score(hyps, refs));
  if (data.header.edit_source) {
    // Score the post-edited output against the reference the gold ops produce,
    // next to the do-nothing baseline that keeps the MT output as is.
    const std::size_t k = *data.header.edit_source;
    std::vector<Sentence> edited, kept, references;
    for (std::size_t i = 0; i < data.examples.size(); ++i) {
      const auto& mt = std::get<Sentence>(data.examples[i].sources[k]);
      references.push_back(apply_edits(mt, edits_from_tokens(refs[i])));
      edited.push_back(apply_edits_lenient(mt, edits_from_tokens(hyps[i])));
      kept.push_back(mt);
    }
    record["post_edit"] = scores_json(score(edited, references));
    record["do_nothing"] = scores_json(score(kept, references));
  }
  const std::string text = record.dump();
  out << text << '\n';
  if (!a.out.empty()) open_out(a.out) << text << '\n';
  return kOk;
}

// inspect-attention -----------------------------------------------------------

struct InspectArgs {
  std::string checkpoint, data, out = "attention";
  std::vector<std::size_t> sources;
  std::size_t index = 0;
  std::size_t max_len = 64;
  bool teacher_forced = false;
};

int cmd_inspect(const InspectArgs& a, std::ostream& out) {
  const MultiSourceModel model = load_model(a.checkpoint);
  const Dataset data = maybe_select(load_input(a.data, "inspect"), a.sources);
  check_compatible(model, data.header);
  if (a.index >= data.examples.size()) {
    throw ConfigError("example index " + std::to_string(a.index) + " out of range (dataset has " +
                      std::to_string(data.examples.size()) + ")");
  }
  const EncodedExample ex = model.encode(data.examples[a.index]);
  const AttentionTrace trace = a.teacher_forced ? teacher_forced_traces(model, std::span(&ex, 1)).front()
                                                : model.greedy_decode(ex, a.max_len).trace;
  std::vector<std::string> names;
  for (std::size_t id = 0; id < model.target_vocab().size(); ++id) names.push_back(model.target_vocab().token(id));

  ensure_dir(a.out);
  const fs::path tsv = fs::path(a.out) / "trace.tsv";
  const fs::path pgm = fs::path(a.out) / "heatmap.pgm";
  {
    auto f = open_out(tsv);
    write_trace_tsv(f, trace, names);
  }
  const GrayImage image = attention_heatmap(trace);
  {
    auto f = open_out(pgm, std::ios::binary);
    write_pgm(f, image);
  }
  out << json{{"steps", trace.steps()},
              {"columns", trace.columns},
              {"width", image.width},
              {"height", image.height},
              {"trace", tsv.string()},
              {"heatmap", pgm.string()}}
             .dump()
      << '\n';
  return kOk;
}

// gradcheck -------------------------------------------------------------------

struct GradArgs {
  std::optional<std::string> strategy;
  std::string decoder = "cgru";
  bool share = false, sentinel = false, all = false;
  std::string corrupt;
  double threshold = 1e-4;
};

int cmd_gradcheck(const GradArgs& a, std::ostream& out) {
  std::vector<CombinationConfig> configs;
  if (a.all) {
    configs = all_valid_configs();
  } else {
    CombinationConfig c;
    c.strategy = parse_strategy(a.strategy.value_or("flat"));
    c.share_projections = a.share;
    c.use_sentinel = a.sentinel;
    configs.push_back(c.validated(5));
  }
  GradCheckOptions options;
  if (!a.corrupt.empty()) {
    const auto op = op_from_name(a.corrupt);
    if (!op) throw ConfigError("unknown op '" + a.corrupt + "' for --corrupt-adjoint");
    options.fault = AdjointFault{*op};
  }
  const DecoderKind decoder = parse_decoder(a.decoder);
  bool pass = true;
  for (const auto& c : configs) {
    const GradCheckResult r = check_model_gradients(c, decoder, options);
    const bool ok = r.max_rel_error < a.threshold;
    pass = pass && ok;
    out << c.label() << " decoder=" << decoder_name(decoder) << " max_rel_error " << r.max_rel_error << " ("
        << r.worst_param << "[" << r.worst_index << "]) " << (ok ? "PASS" : "FAIL") << '\n';
    for (const auto& p : r.per_param) out << "  " << p.name << '\t' << p.max_rel_error << '\n';
  }
  return pass ? kOk : kRuntimeError;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-source attention sequence models: data, training, evaluation and inspection", "multiattn"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Write train/valid/test splits of a synthetic task");
  gen_cmd->add_option("--task", gen.task, "masked-copy or toy-ape")->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output directory")->capture_default_str();
  gen_cmd->add_option("--train", gen.train)->capture_default_str();
  gen_cmd->add_option("--valid", gen.valid)->capture_default_str();
  gen_cmd->add_option("--test", gen.test)->capture_default_str();
  gen_cmd->add_option("--vocab", gen.vocab, "Content vocabulary size")->capture_default_str();
  gen_cmd->add_option("--min-len", gen.min_len)->capture_default_str();
  gen_cmd->add_option("--max-len", gen.max_len)->capture_default_str();
  gen_cmd->add_option("--mask-rate", gen.mask_rate)->capture_default_str();
  gen_cmd->add_option("--sub", gen.sub, "Substitution rate (toy-ape)")->capture_default_str();
  gen_cmd->add_option("--del", gen.del, "Deletion rate (toy-ape)")->capture_default_str();
  gen_cmd->add_option("--ins", gen.ins, "Insertion rate (toy-ape)")->capture_default_str();

  Overrides tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model; writes checkpoint.bin, curves.tsv, config.json");
  train_cmd->add_option("--config", tr.config, "JSON experiment config");
  train_cmd->add_option("--seed", tr.seed);
  train_cmd->add_option("--strategy", tr.strategy, "concat, flat or hier");
  train_cmd->add_flag("--share", tr.share, "Share energy and context projections");
  train_cmd->add_flag("--sentinel", tr.sentinel, "Add the sentinel gate");
  train_cmd->add_option("--decoder", tr.decoder, "gru or cgru");
  train_cmd->add_option("--out", tr.out, "Output directory");
  train_cmd->add_option("--train-data", tr.train_data);
  train_cmd->add_option("--valid-data", tr.valid_data);
  train_cmd->add_option("--max-steps", tr.max_steps);
  train_cmd->add_option("--lr", tr.lr);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Decode a dataset and print BLEU, ter_noshift and token accuracy");
  eval_cmd->add_option("--checkpoint", ev.checkpoint)->required();
  eval_cmd->add_option("--data", ev.data)->required();
  eval_cmd->add_option("--sources", ev.sources, "Dataset source indices the model was trained on");
  eval_cmd->add_option("--max-len", ev.max_len)->capture_default_str();
  eval_cmd->add_flag("--gold", ev.gold, "Score the gold targets instead of decodes");
  eval_cmd->add_option("--out", ev.out, "Also write the record to this file");

  InspectArgs in;
  auto* inspect_cmd = app.add_subcommand("inspect-attention", "Write the attention trace and heatmap of one example");
  inspect_cmd->add_option("--checkpoint", in.checkpoint)->required();
  inspect_cmd->add_option("--data", in.data)->required();
  inspect_cmd->add_option("--index", in.index)->capture_default_str();
  inspect_cmd->add_option("--sources", in.sources);
  inspect_cmd->add_option("--max-len", in.max_len)->capture_default_str();
  inspect_cmd->add_flag("--teacher-forced", in.teacher_forced, "Trace the gold target instead of the decode");
  inspect_cmd->add_option("--out", in.out, "Output directory")->capture_default_str();

  GradArgs gr;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of a tiny model's gradients");
  grad_cmd->add_option("--strategy", gr.strategy, "concat, flat or hier");
  grad_cmd->add_flag("--share", gr.share);
  grad_cmd->add_flag("--sentinel", gr.sentinel);
  grad_cmd->add_option("--decoder", gr.decoder)->capture_default_str();
  grad_cmd->add_flag("--all", gr.all, "Check every valid strategy/share/sentinel combination");
  grad_cmd->add_option("--threshold", gr.threshold)->capture_default_str();
  grad_cmd->add_option("--corrupt-adjoint", gr.corrupt)->group("");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsageError;
  }

  try {
    if (*gen_cmd) return cmd_gen_data(gen, out);
    if (*train_cmd) return cmd_train(tr, out, err);
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*inspect_cmd) return cmd_inspect(in, out);
    if (*grad_cmd) return cmd_gradcheck(gr, out);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}

}  // namespace multiattn::cli
