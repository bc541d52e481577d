#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace enlg {

using TokenId = std::int32_t;
using TokenSequence = std::vector<TokenId>;

namespace special {
inline constexpr TokenId kPad = 0;
inline constexpr TokenId kBos = 1;
inline constexpr TokenId kEos = 2;
inline constexpr TokenId kUnk = 3;
inline constexpr TokenId kSep = 4;
inline constexpr TokenId kCount = 5;

constexpr bool is_special(TokenId id) { return id >= 0 && id < kCount; }
}  // namespace special

/// Word-level vocabulary. Ids 0..4 are the reserved specials, ordinary tokens
/// follow in build order.
class Vocabulary {
 public:
  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> tokens);

  std::size_t size() const { return tokens_.size() + special::kCount; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  /// Id of a normalized lowercase word, or UNK.
  TokenId id_of(std::string_view word) const;
  bool contains(std::string_view word) const;
  /// Surface form; throws RangeError for out-of-range ids.
  const std::string& token(TokenId id) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  bool operator==(const Vocabulary& other) const { return tokens_ == other.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

/// Frequency-ranked vocabulary (ties broken lexicographically) over lowercased
/// whitespace-delimited words. At most max_size - 5 ordinary tokens.
Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size,
                       std::size_t min_freq);

/// Normalized lowercase words of a text.
std::vector<std::string> words_of(std::string_view text);

TokenSequence encode(std::string_view text, const Vocabulary& vocab);
std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab);

/// BOS keyword SEP tweet SEP
TokenSequence frame_prompt(const Vocabulary& vocab, std::string_view keyword,
                           std::string_view tweet);

/// BOS keyword SEP tweet SEP reply EOS
TokenSequence frame_example(const Vocabulary& vocab, std::string_view keyword,
                            std::string_view tweet, std::string_view reply);

}  // namespace enlg
