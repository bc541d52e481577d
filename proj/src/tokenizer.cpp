#include "enlg/tokenizer.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "enlg/errors.hpp"
#include "enlg/log.hpp"
#include "enlg/text.hpp"

namespace enlg {

namespace {
constexpr std::string_view kSpecialNames[] = {"<pad>", "<bos>", "<eos>", "<unk>", "<sep>"};
}

Vocabulary::Vocabulary(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    const auto [it, inserted] =
        index_.emplace(tokens_[i], static_cast<TokenId>(i) + special::kCount);
    if (!inserted) throw FormatError("duplicate vocabulary token '" + tokens_[i] + "'");
  }
}

TokenId Vocabulary::id_of(std::string_view word) const {
  const auto it = index_.find(std::string(word));
  return it == index_.end() ? special::kUnk : it->second;
}

bool Vocabulary::contains(std::string_view word) const {
  return index_.contains(std::string(word));
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < special::kCount || static_cast<std::size_t>(id) >= size()) {
    if (id >= 0 && id < special::kCount) {
      static const std::vector<std::string> names(std::begin(kSpecialNames),
                                                  std::end(kSpecialNames));
      return names[static_cast<std::size_t>(id)];
    }
    throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(size()));
  }
  return tokens_[static_cast<std::size_t>(id - special::kCount)];
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json specials = nlohmann::json::object();
  for (TokenId i = 0; i < special::kCount; ++i)
    specials[std::string(kSpecialNames[i])] = i;
  return {{"specials", specials}, {"tokens", tokens_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (!j.contains("tokens") || !j.contains("specials"))
    throw FormatError("vocabulary JSON needs 'specials' and 'tokens'");
  const auto& specials = j.at("specials");
  for (TokenId i = 0; i < special::kCount; ++i) {
    const std::string name(kSpecialNames[i]);
    if (!specials.contains(name) || specials.at(name).get<int>() != i)
      throw FormatError("vocabulary specials block does not match the fixed layout");
  }
  return Vocabulary(j.at("tokens").get<std::vector<std::string>>());
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write vocabulary to " + path);
  out << to_json().dump(2) << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read vocabulary from " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed vocabulary JSON " + path + ": " + e.what());
  }
}

std::vector<std::string> words_of(std::string_view text) {
  return text::split_words(text::lowercase(text::normalize(text)));
}

Vocabulary build_vocab(std::span<const std::string> texts, std::size_t max_size,
                       std::size_t min_freq) {
  if (max_size < special::kCount + 1) throw ParameterError("max_size must be at least 6");
  if (min_freq < 1) throw ParameterError("min_freq must be at least 1");

  std::map<std::string, std::size_t> counts;
  for (const auto& t : texts)
    for (auto& w : words_of(t)) ++counts[std::move(w)];
  if (counts.empty()) log::warn("build_vocab: empty corpus, vocabulary holds specials only");

  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [w, c] : counts)
    if (c >= min_freq) ranked.emplace_back(w, c);
  // std::map iteration is lexicographic, so a stable sort on frequency keeps
  // the lexicographic tie order.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  const std::size_t keep = std::min(ranked.size(), max_size - special::kCount);
  std::vector<std::string> tokens;
  tokens.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) tokens.push_back(ranked[i].first);
  return Vocabulary(std::move(tokens));
}

TokenSequence encode(std::string_view text, const Vocabulary& vocab) {
  TokenSequence ids;
  for (const auto& w : words_of(text)) ids.push_back(vocab.id_of(w));
  return ids;
}

std::string decode(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  for (const TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab.size())
      throw RangeError("token id " + std::to_string(id) + " outside vocabulary of size " +
                       std::to_string(vocab.size()));
    if (special::is_special(id)) continue;
    if (!out.empty()) out += ' ';
    out += vocab.token(id);
  }
  return out;
}

TokenSequence frame_prompt(const Vocabulary& vocab, std::string_view keyword,
                           std::string_view tweet) {
  TokenSequence seq{special::kBos};
  for (TokenId id : encode(keyword, vocab)) seq.push_back(id);
  seq.push_back(special::kSep);
  for (TokenId id : encode(tweet, vocab)) seq.push_back(id);
  seq.push_back(special::kSep);
  return seq;
}

TokenSequence frame_example(const Vocabulary& vocab, std::string_view keyword,
                            std::string_view tweet, std::string_view reply) {
  TokenSequence seq = frame_prompt(vocab, keyword, tweet);
  for (TokenId id : encode(reply, vocab)) seq.push_back(id);
  seq.push_back(special::kEos);
  return seq;
}

}  // namespace enlg
