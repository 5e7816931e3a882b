#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace multiattn {

/// Token <-> id bijection with fixed reserved ids PAD=0, EOS=1, UNK=2.
class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kEos = 1;
  static constexpr std::size_t kUnk = 2;
  static constexpr std::size_t kReserved = 3;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kEosToken = "<eos>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocab();
  /// `tokens` are the non-reserved entries, assigned ids 3, 4, ... in order.
  explicit Vocab(const std::vector<std::string>& tokens);

  std::size_t size() const noexcept { return tokens_.size(); }
  std::optional<std::size_t> find(std::string_view token) const;
  /// Throws DataError for unknown tokens.
  std::size_t id(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  /// Entries after the reserved ones, in id order.
  std::vector<std::string> user_tokens() const;
  /// CRC-32 over the full token list, newline separated.
  std::uint32_t fingerprint() const;

  bool operator==(const Vocab& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

}  // namespace multiattn
