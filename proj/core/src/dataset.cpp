#include "multiattn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "multiattn/errors.hpp"

namespace multiattn {

using nlohmann::json;

namespace {

std::string kind_name(SourceKind k) { return k == SourceKind::Tokens ? "tokens" : "features"; }

SourceKind parse_kind(const std::string& s) {
  if (s == "tokens") return SourceKind::Tokens;
  if (s == "features") return SourceKind::Features;
  throw DataError("dataset: unknown source kind '" + s + "'");
}

json header_json(const DatasetHeader& h) {
  json sources = json::array();
  for (const auto& s : h.sources) {
    json j = {{"name", s.name}, {"kind", kind_name(s.kind)}};
    if (s.kind == SourceKind::Tokens) {
      j["vocab"] = s.vocab;
    } else {
      j["feature_dim"] = s.feature_dim;
    }
    sources.push_back(std::move(j));
  }
  json out = {{"format", DatasetHeader::kFormat}, {"version", h.version},   {"task", h.task},
              {"sources", std::move(sources)},   {"target_vocab", h.target_vocab}};
  out["edit_source"] = h.edit_source ? json(*h.edit_source) : json(nullptr);
  return out;
}

DatasetHeader parse_header(const json& j) {
  if (!j.is_object() || j.value("format", "") != DatasetHeader::kFormat) {
    throw DataError("dataset: first line is not a multiattn-dataset header");
  }
  DatasetHeader h;
  h.version = j.at("version").get<int>();
  if (h.version != DatasetHeader::kVersion) {
    throw DataError("dataset: unsupported version " + std::to_string(h.version));
  }
  h.task = j.at("task").get<std::string>();
  for (const auto& s : j.at("sources")) {
    SourceSchema schema;
    schema.name = s.at("name").get<std::string>();
    schema.kind = parse_kind(s.at("kind").get<std::string>());
    if (schema.kind == SourceKind::Tokens) {
      schema.vocab = s.at("vocab").get<std::vector<std::string>>();
    } else {
      schema.feature_dim = s.at("feature_dim").get<std::size_t>();
    }
    h.sources.push_back(std::move(schema));
  }
  h.target_vocab = j.at("target_vocab").get<std::vector<std::string>>();
  if (j.contains("edit_source") && !j["edit_source"].is_null()) h.edit_source = j["edit_source"].get<std::size_t>();
  return h;
}

json example_json(const ParallelExample& ex) {
  json sources = json::array();
  for (const auto& src : ex.sources) {
    if (const auto* tokens = std::get_if<Sentence>(&src)) {
      sources.push_back(*tokens);
    } else {
      const Tensor& grid = std::get<Tensor>(src);
      json rows = json::array();
      for (std::size_t r = 0; r < grid.rows(); ++r) {
        std::vector<double> row(grid.raw() + r * grid.cols(), grid.raw() + (r + 1) * grid.cols());
        rows.push_back(std::move(row));
      }
      sources.push_back(std::move(rows));
    }
  }
  json out = {{"sources", std::move(sources)}, {"target", ex.target}};
  if (ex.annotation) out["annotation"] = *ex.annotation;
  return out;
}

ParallelExample parse_example(const json& j, const DatasetHeader& h) {
  ParallelExample ex;
  const auto& sources = j.at("sources");
  if (!sources.is_array() || sources.size() != h.sources.size()) {
    throw DataError("dataset: example has " + std::to_string(sources.size()) + " sources, header declares " +
                    std::to_string(h.sources.size()));
  }
  for (std::size_t k = 0; k < sources.size(); ++k) {
    if (h.sources[k].kind == SourceKind::Tokens) {
      ex.sources.emplace_back(sources[k].get<Sentence>());
    } else {
      const auto rows = sources[k].get<std::vector<std::vector<double>>>();
      if (rows.empty()) throw DataError("dataset: empty feature grid");
      const auto width = rows[0].size();
      std::vector<double> data;
      for (const auto& row : rows) {
        if (row.size() != width) throw DataError("dataset: ragged feature grid");
        data.insert(data.end(), row.begin(), row.end());
      }
      ex.sources.emplace_back(Tensor(Shape{rows.size(), width}, std::move(data)));
    }
  }
  ex.target = j.at("target").get<Sentence>();
  if (j.contains("annotation")) ex.annotation = j["annotation"].get<std::vector<std::size_t>>();
  return ex;
}

}  // namespace

void validate(const Dataset& data) {
  const auto& h = data.header;
  if (h.sources.empty()) throw DataError("dataset: no sources declared");
  if (h.edit_source && *h.edit_source >= h.sources.size()) throw DataError("dataset: edit_source out of range");
  for (std::size_t i = 0; i < data.examples.size(); ++i) {
    const auto& ex = data.examples[i];
    const std::string where = "dataset example " + std::to_string(i);
    if (ex.sources.size() != h.sources.size()) throw DataError(where + ": wrong number of sources");
    for (std::size_t k = 0; k < ex.sources.size(); ++k) {
      if (h.sources[k].kind == SourceKind::Tokens) {
        const auto* tokens = std::get_if<Sentence>(&ex.sources[k]);
        if (tokens == nullptr) throw DataError(where + ": source " + std::to_string(k) + " should be tokens");
        if (tokens->empty()) throw DataError(where + ": source " + std::to_string(k) + " is empty");
      } else {
        const auto* grid = std::get_if<Tensor>(&ex.sources[k]);
        if (grid == nullptr || grid->rank() != 2) {
          throw DataError(where + ": source " + std::to_string(k) + " should be a feature grid");
        }
        if (grid->cols() != h.sources[k].feature_dim) {
          throw DataError(where + ": feature grid width " + std::to_string(grid->cols()) + " != " +
                          std::to_string(h.sources[k].feature_dim));
        }
      }
    }
    if (ex.target.empty()) throw DataError(where + ": empty target");
    if (ex.annotation) {
      if (ex.annotation->size() != ex.target.size()) throw DataError(where + ": annotation length != target length");
      for (auto a : *ex.annotation) {
        if (a >= h.sources.size()) throw DataError(where + ": annotation references missing source");
      }
    }
  }
}

void write_dataset(std::ostream& out, const Dataset& data) {
  out << header_json(data.header).dump() << '\n';
  for (const auto& ex : data.examples) out << example_json(ex).dump() << '\n';
}

Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        data.header = parse_header(j);
        have_header = true;
      } else {
        data.examples.push_back(parse_example(j, data.header));
      }
    } catch (const json::exception& e) {
      throw DataError("dataset line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) throw DataError("dataset: missing header line");
  validate(data);
  return data;
}

void save_dataset(const std::filesystem::path& path, const Dataset& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write dataset file " + path.string());
  write_dataset(out, data);
  if (!out) throw DataError("error while writing " + path.string());
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  return read_dataset(in);
}

Dataset select_sources(const Dataset& data, const std::vector<std::size_t>& keep) {
  if (keep.empty()) throw ConfigError("select_sources: at least one source must be kept");
  for (auto k : keep) {
    if (k >= data.header.sources.size()) throw ConfigError("select_sources: no source " + std::to_string(k));
  }
  Dataset out;
  out.header = data.header;
  out.header.sources.clear();
  for (auto k : keep) out.header.sources.push_back(data.header.sources[k]);
  out.header.edit_source.reset();
  if (data.header.edit_source) {
    for (std::size_t i = 0; i < keep.size(); ++i) {
      if (keep[i] == *data.header.edit_source) out.header.edit_source = i;
    }
  }
  for (const auto& ex : data.examples) {
    ParallelExample e;
    for (auto k : keep) e.sources.push_back(ex.sources[k]);
    e.target = ex.target;
    if (ex.annotation) {
      std::vector<std::size_t> remapped;
      for (auto a : *ex.annotation) {
        auto it = std::find(keep.begin(), keep.end(), a);
        if (it == keep.end()) {
          remapped.clear();
          break;
        }
        remapped.push_back(static_cast<std::size_t>(it - keep.begin()));
      }
      if (remapped.size() == ex.annotation->size()) e.annotation = std::move(remapped);
    }
    out.examples.push_back(std::move(e));
  }
  return out;
}

}  // namespace multiattn
