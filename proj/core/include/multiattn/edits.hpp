#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace multiattn {

using Sentence = std::vector<std::string>;

/// One step of the edit script that turns an MT output into its post-edit.
/// Substitutions are written as Delete followed by Insert.
struct EditOp {
  enum class Kind { Keep, Delete, Insert };
  Kind kind = Kind::Keep;
  std::string token;  // Insert only

  static EditOp keep() { return {Kind::Keep, {}}; }
  static EditOp del() { return {Kind::Delete, {}}; }
  static EditOp insert(std::string t) { return {Kind::Insert, std::move(t)}; }
  bool operator==(const EditOp&) const = default;
};

/// Minimal script under costs Keep=0, Delete=1, Insert=1. At every cell the
/// walk prefers Keep, then Delete, then Insert among cost-optimal moves.
std::vector<EditOp> encode_edits(std::span<const std::string> mt, std::span<const std::string> ref);

/// Replays `ops` over `mt`. Throws DataError unless the Keep+Delete count
/// equals mt.size().
Sentence apply_edits(std::span<const std::string> mt, std::span<const EditOp> ops);

/// Like apply_edits but tolerant of decoder output: surplus Keep/Delete ops
/// are ignored and unconsumed MT tokens are kept.
Sentence apply_edits_lenient(std::span<const std::string> mt, std::span<const EditOp> ops);

/// Number of Delete and Insert ops.
std::size_t edit_cost(std::span<const EditOp> ops);

/// Token spelling used in target vocabularies: "KEEP", "DEL", "ADD:<tok>".
std::string edit_to_token(const EditOp& op);
EditOp edit_from_token(std::string_view token);
std::vector<std::string> edits_to_tokens(std::span<const EditOp> ops);
std::vector<EditOp> edits_from_tokens(std::span<const std::string> tokens);

}  // namespace multiattn
