#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "multiattn/edits.hpp"
#include "multiattn/tensor.hpp"
#include "multiattn/vocab.hpp"

namespace multiattn {

enum class SourceKind { Tokens, Features };

/// Description of one input stream of a dataset.
struct SourceSchema {
  std::string name;
  SourceKind kind = SourceKind::Tokens;
  std::vector<std::string> vocab;  // tokens: non-reserved entries
  std::size_t feature_dim = 0;     // features: row width

  bool operator==(const SourceSchema&) const = default;
};

struct DatasetHeader {
  static constexpr int kVersion = 1;
  static constexpr const char* kFormat = "multiattn-dataset";

  int version = kVersion;
  std::string task;
  std::vector<SourceSchema> sources;
  std::vector<std::string> target_vocab;
  /// For edit-operation targets: index of the source the ops apply to.
  std::optional<std::size_t> edit_source;

  bool operator==(const DatasetHeader&) const = default;
};

/// A token sequence or a (cells x feature_dim) grid.
using SourceInput = std::variant<Sentence, Tensor>;

struct ParallelExample {
  std::vector<SourceInput> sources;
  Sentence target;
  /// Per target position, the index of the source it depends on.
  std::optional<std::vector<std::size_t>> annotation;

  bool operator==(const ParallelExample&) const = default;
};

struct Dataset {
  DatasetHeader header;
  std::vector<ParallelExample> examples;
};

/// Checks example structure against the header (source count and kinds,
/// feature widths, non-empty target, annotation range). Vocabulary
/// membership is checked when examples are encoded for a model.
void validate(const Dataset& data);

/// JSON Lines. Line 1 is the header record
///   {"format":"multiattn-dataset","version":1,"task":...,"sources":[...],
///    "target_vocab":[...],"edit_source":k|null}
/// and each further line one example
///   {"sources":[["tok",...] | [[f,...],...]], "target":["tok",...],
///    "annotation":[k,...]}            (annotation optional)
void write_dataset(std::ostream& out, const Dataset& data);
Dataset read_dataset(std::istream& in);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Keeps only the listed sources (in the given order); annotations are
/// remapped and dropped for positions whose source was removed.
Dataset select_sources(const Dataset& data, const std::vector<std::size_t>& keep);

}  // namespace multiattn
