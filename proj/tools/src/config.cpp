#include "multiattn_cli/config.hpp"

#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>
#include <string_view>

#include "multiattn/errors.hpp"

namespace multiattn::cli {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, std::string_view where, std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + std::string(where) + "' must be an object");
  for (const auto& [key, value] : obj.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError("config: unknown key '" + key + "' in " + std::string(where));
  }
}

template <typename T>
void read(const json& obj, const char* key, T& into) {
  if (!obj.contains(key)) return;
  try {
    into = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad value for '") + key + "'");
  }
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_relative() && !base.empty() ? base / path : path;
}

}  // namespace

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (std::size_t j = i + 1; j < sources.size(); ++j) {
      if (sources[i] == sources[j]) throw ConfigError("config: source " + std::to_string(sources[i]) + " listed twice");
    }
  }
}

ExperimentConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  reject_unknown(root, "config", {"seed", "model", "train", "data", "sources", "out"});
  ExperimentConfig c;
  read(root, "seed", c.seed);

  if (root.contains("model")) {
    const auto& m = root["model"];
    reject_unknown(m, "model", {"embed_dim", "hidden_dim", "attn_dim", "decoder_dim", "strategy", "share_projections",
                                "sentinel", "ctx_dim", "decoder"});
    read(m, "embed_dim", c.model.embed_dim);
    read(m, "hidden_dim", c.model.hidden_dim);
    read(m, "attn_dim", c.model.attn_dim);
    read(m, "decoder_dim", c.model.decoder_dim);
    read(m, "share_projections", c.model.combination.share_projections);
    read(m, "sentinel", c.model.combination.use_sentinel);
    read(m, "ctx_dim", c.model.combination.ctx_dim);
    std::string name;
    read(m, "strategy", name);
    if (!name.empty()) c.model.combination.strategy = parse_strategy(name);
    name.clear();
    read(m, "decoder", name);
    if (!name.empty()) c.model.decoder = parse_decoder(name);
  }

  if (root.contains("train")) {
    const auto& t = root["train"];
    reject_unknown(t, "train", {"lr", "beta1", "beta2", "eps", "batch_size", "max_steps", "valid_interval", "patience",
                                "target_accuracy", "max_decode_len"});
    read(t, "lr", c.train.adam.lr);
    read(t, "beta1", c.train.adam.beta1);
    read(t, "beta2", c.train.adam.beta2);
    read(t, "eps", c.train.adam.eps);
    read(t, "batch_size", c.train.batch_size);
    read(t, "max_steps", c.train.max_steps);
    read(t, "valid_interval", c.train.valid_interval);
    read(t, "patience", c.train.patience);
    read(t, "max_decode_len", c.train.max_decode_len);
    if (t.contains("target_accuracy") && !t["target_accuracy"].is_null()) {
      double a = 0.0;
      read(t, "target_accuracy", a);
      c.train.target_accuracy = a;
    }
  }

  if (root.contains("data")) {
    const auto& d = root["data"];
    reject_unknown(d, "data", {"train", "valid"});
    std::string p;
    read(d, "train", p);
    if (!p.empty()) c.train_data = resolve(base_dir, p);
    p.clear();
    read(d, "valid", p);
    if (!p.empty()) c.valid_data = resolve(base_dir, p);
  }
  read(root, "sources", c.sources);
  std::string out;
  read(root, "out", out);
  if (!out.empty()) c.out_dir = out;
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path.parent_path());
}

std::string config_to_json(const ExperimentConfig& c) {
  json train = {{"lr", c.train.adam.lr},
                {"beta1", c.train.adam.beta1},
                {"beta2", c.train.adam.beta2},
                {"eps", c.train.adam.eps},
                {"batch_size", c.train.batch_size},
                {"max_steps", c.train.max_steps},
                {"valid_interval", c.train.valid_interval},
                {"patience", c.train.patience},
                {"max_decode_len", c.train.max_decode_len}};
  train["target_accuracy"] = c.train.target_accuracy ? json(*c.train.target_accuracy) : json(nullptr);
  json root = {
      {"seed", c.seed},
      {"model",
       {{"embed_dim", c.model.embed_dim},
        {"hidden_dim", c.model.hidden_dim},
        {"attn_dim", c.model.attn_dim},
        {"decoder_dim", c.model.decoder_dim},
        {"strategy", std::string(strategy_name(c.model.combination.strategy))},
        {"share_projections", c.model.combination.share_projections},
        {"sentinel", c.model.combination.use_sentinel},
        {"ctx_dim", c.model.combination.ctx_dim},
        {"decoder", std::string(decoder_name(c.model.decoder))}}},
      {"train", std::move(train)},
      {"data", {{"train", c.train_data.string()}, {"valid", c.valid_data.string()}}},
      {"sources", c.sources},
      {"out", c.out_dir.string()}};
  return root.dump(2) + "\n";
}

}  // namespace multiattn::cli
