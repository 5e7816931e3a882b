#include "multiattn/edits.hpp"

#include <algorithm>

#include "multiattn/errors.hpp"

namespace multiattn {

namespace {
constexpr std::string_view kKeep = "KEEP";
constexpr std::string_view kDelete = "DEL";
constexpr std::string_view kInsertPrefix = "ADD:";
}  // namespace

std::vector<EditOp> encode_edits(std::span<const std::string> mt, std::span<const std::string> ref) {
  const auto n = mt.size();
  const auto m = ref.size();
  // cost[i][j]: cheapest script turning mt[i:] into ref[j:].
  std::vector<std::vector<std::size_t>> cost(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = n + 1; i-- > 0;) {
    for (std::size_t j = m + 1; j-- > 0;) {
      if (i == n) {
        cost[i][j] = m - j;
      } else if (j == m) {
        cost[i][j] = n - i;
      } else {
        std::size_t best = 1 + std::min(cost[i + 1][j], cost[i][j + 1]);
        if (mt[i] == ref[j]) best = std::min(best, cost[i + 1][j + 1]);
        cost[i][j] = best;
      }
    }
  }

  std::vector<EditOp> ops;
  std::size_t i = 0, j = 0;
  while (i < n || j < m) {
    if (i < n && j < m && mt[i] == ref[j] && cost[i][j] == cost[i + 1][j + 1]) {
      ops.push_back(EditOp::keep());
      ++i;
      ++j;
    } else if (i < n && cost[i][j] == 1 + cost[i + 1][j]) {
      ops.push_back(EditOp::del());
      ++i;
    } else {
      ops.push_back(EditOp::insert(ref[j]));
      ++j;
    }
  }
  return ops;
}

Sentence apply_edits(std::span<const std::string> mt, std::span<const EditOp> ops) {
  Sentence out;
  std::size_t pos = 0;
  for (const auto& op : ops) {
    switch (op.kind) {
      case EditOp::Kind::Keep:
      case EditOp::Kind::Delete:
        if (pos >= mt.size()) {
          throw DataError("apply_edits: more Keep/Delete ops than MT tokens (" + std::to_string(mt.size()) + ")");
        }
        if (op.kind == EditOp::Kind::Keep) out.push_back(mt[pos]);
        ++pos;
        break;
      case EditOp::Kind::Insert:
        out.push_back(op.token);
        break;
    }
  }
  if (pos != mt.size()) {
    throw DataError("apply_edits: ops consume " + std::to_string(pos) + " of " + std::to_string(mt.size()) +
                    " MT tokens");
  }
  return out;
}

Sentence apply_edits_lenient(std::span<const std::string> mt, std::span<const EditOp> ops) {
  Sentence out;
  std::size_t pos = 0;
  for (const auto& op : ops) {
    if (op.kind == EditOp::Kind::Insert) {
      out.push_back(op.token);
    } else if (pos < mt.size()) {
      if (op.kind == EditOp::Kind::Keep) out.push_back(mt[pos]);
      ++pos;
    }
  }
  for (; pos < mt.size(); ++pos) out.push_back(mt[pos]);
  return out;
}

std::size_t edit_cost(std::span<const EditOp> ops) {
  return static_cast<std::size_t>(
      std::count_if(ops.begin(), ops.end(), [](const EditOp& op) { return op.kind != EditOp::Kind::Keep; }));
}

std::string edit_to_token(const EditOp& op) {
  switch (op.kind) {
    case EditOp::Kind::Keep: return std::string(kKeep);
    case EditOp::Kind::Delete: return std::string(kDelete);
    case EditOp::Kind::Insert: return std::string(kInsertPrefix) + op.token;
  }
  return {};
}

EditOp edit_from_token(std::string_view token) {
  if (token == kKeep) return EditOp::keep();
  if (token == kDelete) return EditOp::del();
  if (token.starts_with(kInsertPrefix) && token.size() > kInsertPrefix.size()) {
    return EditOp::insert(std::string(token.substr(kInsertPrefix.size())));
  }
  throw DataError("not an edit-op token: '" + std::string(token) + "'");
}

std::vector<std::string> edits_to_tokens(std::span<const EditOp> ops) {
  std::vector<std::string> out;
  out.reserve(ops.size());
  for (const auto& op : ops) out.push_back(edit_to_token(op));
  return out;
}

std::vector<EditOp> edits_from_tokens(std::span<const std::string> tokens) {
  std::vector<EditOp> out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(edit_from_token(t));
  return out;
}

}  // namespace multiattn
