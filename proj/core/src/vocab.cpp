#include "multiattn/vocab.hpp"

#include <zlib.h>

#include "multiattn/errors.hpp"

namespace multiattn {

Vocab::Vocab() : Vocab(std::vector<std::string>{}) {}

Vocab::Vocab(const std::vector<std::string>& tokens) {
  tokens_ = {std::string(kPadToken), std::string(kEosToken), std::string(kUnkToken)};
  tokens_.insert(tokens_.end(), tokens.begin(), tokens.end());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) throw DataError("vocab: empty token");
    if (!ids_.emplace(tokens_[i], i).second) throw DataError("vocab: duplicate token '" + tokens_[i] + "'");
  }
}

std::optional<std::size_t> Vocab::find(std::string_view token) const {
  auto it = ids_.find(std::string(token));
  if (it == ids_.end()) return std::nullopt;
  return it->second;
}

std::size_t Vocab::id(std::string_view token) const {
  if (auto i = find(token)) return *i;
  throw DataError("out-of-vocabulary token '" + std::string(token) + "'");
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= tokens_.size()) throw DataError("token id " + std::to_string(id) + " out of range");
  return tokens_[id];
}

std::vector<std::string> Vocab::user_tokens() const {
  return {tokens_.begin() + static_cast<std::ptrdiff_t>(kReserved), tokens_.end()};
}

std::uint32_t Vocab::fingerprint() const {
  uLong crc = crc32(0L, Z_NULL, 0);
  for (const auto& t : tokens_) {
    crc = crc32(crc, reinterpret_cast<const Bytef*>(t.data()), static_cast<uInt>(t.size()));
    crc = crc32(crc, reinterpret_cast<const Bytef*>("\n"), 1);
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace multiattn
