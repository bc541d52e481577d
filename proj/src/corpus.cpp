#include "enlg/corpus.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "enlg/errors.hpp"
#include "enlg/rng.hpp"
#include "enlg/text.hpp"

namespace enlg {

namespace {

constexpr std::array<std::string_view, 5> kColumns = {"keyword", "main_tweet", "main_likes",
                                                      "reply", "reply_likes"};

/// RFC 4180 record reader. Returns false at end of input.
class CsvReader {
 public:
  explicit CsvReader(std::istream& in) : in_(in) {}

  // `malformed` is set when a quoted field runs into end of input.
  bool next(std::vector<std::string>& fields, bool& malformed) {
    fields.clear();
    malformed = false;
    int c = in_.get();
    if (c == EOF) return false;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    while (true) {
      if (quoted) {
        if (c == EOF) {
          malformed = true;
          fields.push_back(std::move(field));
          return true;
        }
        if (c == '"') {
          if (in_.peek() == '"') {
            in_.get();
            field += '"';
          } else {
            quoted = false;
          }
        } else {
          field += static_cast<char>(c);
        }
      } else if (c == '"' && !field_started) {
        quoted = true;
        field_started = true;
      } else if (c == ',') {
        fields.push_back(std::move(field));
        field.clear();
        field_started = false;
      } else if (c == '\r' && in_.peek() == '\n') {
        // CRLF handled at the '\n'
      } else if (c == '\n' || c == EOF) {
        fields.push_back(std::move(field));
        return true;
      } else {
        field += static_cast<char>(c);
        field_started = true;
      }
      c = in_.get();
    }
  }

 private:
  std::istream& in_;
};

enum class CountParse { Ok, Negative, NotInteger };

CountParse parse_count(std::string_view s, std::int64_t& value) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  if (s.empty()) return CountParse::NotInteger;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, value, 10);
  if (ec != std::errc() || ptr != last) return CountParse::NotInteger;
  return value < 0 ? CountParse::Negative : CountParse::Ok;
}

bool needs_quotes(std::string_view s) {
  return s.find_first_of(",\"\r\n") != std::string_view::npos ||
         (!s.empty() && (s.front() == ' ' || s.back() == ' '));
}

void write_field(std::ostream& out, std::string_view s) {
  if (!needs_quotes(s)) {
    out << s;
    return;
  }
  out << '"';
  for (char c : s) {
    if (c == '"') out << '"';
    out << c;
  }
  out << '"';
}

void add_cap_warnings(const std::vector<ReplyRecord>& records, IngestDiagnostics& diag) {
  std::map<std::string, std::set<std::string>> tweets_per_keyword;
  std::map<std::pair<std::string, std::string>, std::size_t> replies_per_tweet;
  for (const auto& r : records) {
    tweets_per_keyword[r.keyword].insert(r.main_tweet);
    ++replies_per_tweet[{r.keyword, r.main_tweet}];
  }
  for (const auto& [kw, tweets] : tweets_per_keyword)
    if (tweets.size() > kMaxTweetsPerKeyword)
      diag.warnings.push_back("keyword '" + kw + "' has " + std::to_string(tweets.size()) +
                              " tweets, above the crawl cap of 13000");
  std::size_t over = 0;
  for (const auto& [key, n] : replies_per_tweet)
    if (n > kMaxRepliesPerTweet) ++over;
  if (over > 0)
    diag.warnings.push_back(std::to_string(over) +
                            " tweets have more than 20 replies (crawl cap)");
}

}  // namespace

nlohmann::json IngestDiagnostics::to_json() const {
  return {{"rows_read", rows_read},
          {"rows_accepted", rows_accepted},
          {"rows_rejected", rows_rejected},
          {"rejection_reasons", rejection_reasons},
          {"per_keyword_counts", per_keyword_counts},
          {"warnings", warnings}};
}

IngestResult ingest_csv(std::istream& in, bool strict) {
  CsvReader reader(in);
  std::vector<std::string> fields;
  bool malformed = false;
  if (!reader.next(fields, malformed))
    throw SchemaError("missing header row; expected keyword,main_tweet,main_likes,reply,reply_likes");

  // Column positions by name. A UTF-8 BOM on the first header cell is tolerated.
  if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) fields[0].erase(0, 3);
  std::array<std::size_t, 5> position{};
  std::array<bool, 5> seen{};
  if (fields.size() != kColumns.size())
    throw SchemaError("header must name exactly the five corpus columns, got " +
                      std::to_string(fields.size()));
  for (std::size_t i = 0; i < fields.size(); ++i) {
    std::string name = text::normalize(fields[i]);
    const auto it = std::find(kColumns.begin(), kColumns.end(), name);
    if (it == kColumns.end()) throw SchemaError("unknown column '" + name + "'");
    const auto col = static_cast<std::size_t>(it - kColumns.begin());
    if (seen[col]) throw SchemaError("duplicate column '" + name + "'");
    seen[col] = true;
    position[col] = i;
  }

  IngestResult result;
  auto& diag = result.diagnostics;
  std::size_t line = 1;
  while (reader.next(fields, malformed)) {
    ++line;
    // A trailing blank line is not a row.
    if (fields.size() == 1 && fields[0].empty() && in.peek() == EOF) break;
    ++diag.rows_read;

    std::string reason;
    ReplyRecord rec;
    if (malformed) {
      reason = "unterminated quoted field";
    } else if (fields.size() != kColumns.size()) {
      reason = "field count mismatch";
    } else {
      try {
        rec.keyword = text::normalize(fields[position[0]]);
        rec.main_tweet = text::normalize(fields[position[1]]);
        rec.reply = text::normalize(fields[position[3]]);
      } catch (const FormatError&) {
        reason = "invalid utf-8";
      }
      if (reason.empty()) {
        const CountParse main = parse_count(fields[position[2]], rec.main_likes);
        const CountParse rep = parse_count(fields[position[4]], rec.reply_likes);
        if (main == CountParse::NotInteger || rep == CountParse::NotInteger)
          reason = "non-integer like count";
        else if (main == CountParse::Negative || rep == CountParse::Negative)
          reason = "negative like count";
        else if (rec.keyword.empty() || rec.main_tweet.empty() || rec.reply.empty())
          reason = "empty text field";
      }
    }

    if (!reason.empty()) {
      if (strict) throw RowError("row " + std::to_string(line) + " rejected: " + reason);
      ++diag.rows_rejected;
      ++diag.rejection_reasons[reason];
      continue;
    }
    ++diag.rows_accepted;
    ++diag.per_keyword_counts[rec.keyword];
    result.records.push_back(std::move(rec));
  }
  add_cap_warnings(result.records, diag);
  return result;
}

IngestResult ingest_csv(const std::string& path, bool strict) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open corpus file " + path);
  return ingest_csv(in, strict);
}

IngestResult ingest_csv_files(std::span<const std::string> paths, bool strict) {
  IngestResult merged;
  for (const auto& p : paths) {
    IngestResult part = ingest_csv(p, strict);
    auto& d = merged.diagnostics;
    const auto& pd = part.diagnostics;
    d.rows_read += pd.rows_read;
    d.rows_accepted += pd.rows_accepted;
    d.rows_rejected += pd.rows_rejected;
    for (const auto& [k, v] : pd.rejection_reasons) d.rejection_reasons[k] += v;
    for (const auto& [k, v] : pd.per_keyword_counts) d.per_keyword_counts[k] += v;
    std::move(part.records.begin(), part.records.end(), std::back_inserter(merged.records));
  }
  add_cap_warnings(merged.records, merged.diagnostics);
  return merged;
}

void write_csv(std::ostream& out, std::span<const ReplyRecord> records) {
  out << "keyword,main_tweet,main_likes,reply,reply_likes\n";
  for (const auto& r : records) {
    write_field(out, r.keyword);
    out << ',';
    write_field(out, r.main_tweet);
    out << ',' << r.main_likes << ',';
    write_field(out, r.reply);
    out << ',' << r.reply_likes << '\n';
  }
}

void write_csv(const std::string& path, std::span<const ReplyRecord> records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_csv(out, records);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------------------

nlohmann::json SyntheticSpec::to_json() const {
  return {{"num_keywords", num_keywords},
          {"vocabulary_size", vocabulary_size},
          {"lexicon_size", lexicon_size},
          {"preferred_lexicon", preferred_lexicon},
          {"replies_per_tweet", replies_per_tweet},
          {"tweets_per_keyword", tweets_per_keyword},
          {"tweet_length", tweet_length},
          {"reply_length_range", {reply_length_range.first, reply_length_range.second}},
          {"preference_skew", preference_skew},
          {"like_base", like_base},
          {"like_gain", like_gain},
          {"seed", seed}};
}

SyntheticSpec SyntheticSpec::from_json(const nlohmann::json& j) {
  SyntheticSpec s;
  s.num_keywords = j.value("num_keywords", s.num_keywords);
  s.vocabulary_size = j.value("vocabulary_size", s.vocabulary_size);
  s.lexicon_size = j.value("lexicon_size", s.lexicon_size);
  if (j.contains("preferred_lexicon"))
    s.preferred_lexicon = j.at("preferred_lexicon").get<std::map<std::string, std::set<std::string>>>();
  s.replies_per_tweet = j.value("replies_per_tweet", s.replies_per_tweet);
  s.tweets_per_keyword = j.value("tweets_per_keyword", s.tweets_per_keyword);
  s.tweet_length = j.value("tweet_length", s.tweet_length);
  if (j.contains("reply_length_range")) {
    const auto& r = j.at("reply_length_range");
    s.reply_length_range = {r.at(0).get<std::size_t>(), r.at(1).get<std::size_t>()};
  }
  s.preference_skew = j.value("preference_skew", s.preference_skew);
  s.like_base = j.value("like_base", s.like_base);
  s.like_gain = j.value("like_gain", s.like_gain);
  s.seed = j.value("seed", s.seed);
  return s;
}

void SyntheticSpec::validate() const {
  if (tweets_per_keyword > kMaxTweetsPerKeyword)
    throw SpecError("tweets_per_keyword " + std::to_string(tweets_per_keyword) +
                    " exceeds the cap of 13000");
  if (replies_per_tweet > kMaxRepliesPerTweet)
    throw SpecError("replies_per_tweet " + std::to_string(replies_per_tweet) +
                    " exceeds the cap of 20");
  if (num_keywords == 0 || tweets_per_keyword == 0 || replies_per_tweet == 0)
    throw SpecError("num_keywords, tweets_per_keyword and replies_per_tweet must be positive");
  if (reply_length_range.first == 0 || reply_length_range.first > reply_length_range.second)
    throw SpecError("reply_length_range must satisfy 1 <= min <= max");
  if (tweet_length == 0) throw SpecError("tweet_length must be positive");
  if (preference_skew <= 0.0 || like_base <= 0.0 || like_gain < 0.0)
    throw SpecError("preference_skew and like_base must be positive, like_gain nonnegative");

  if (!preferred_lexicon.empty()) {
    if (preferred_lexicon.size() != num_keywords)
      throw SpecError("preferred_lexicon must have one entry per keyword");
    std::set<std::string> all;
    std::size_t size = preferred_lexicon.begin()->second.size();
    for (const auto& [kw, lex] : preferred_lexicon) {
      if (lex.empty() || lex.size() != size)
        throw SpecError("preferred lexicons must be non-empty and of equal size");
      for (const auto& w : lex)
        if (!all.insert(w).second)
          throw SpecError("preferred lexicons are not pairwise disjoint (token '" + w + "')");
    }
    if (all.size() >= vocabulary_size && vocabulary_size != 0)
      throw SpecError("lexicons leave no non-preferred content words");
  } else if (num_keywords * lexicon_size >= vocabulary_size || lexicon_size == 0) {
    throw SpecError("vocabulary_size must exceed num_keywords * lexicon_size");
  }
}

nlohmann::json OracleState::to_json() const {
  return {{"note", "test harness only: hidden preferred lexicon per keyword"},
          {"lexicon", lexicon}};
}

OracleState OracleState::from_json(const nlohmann::json& j) {
  OracleState s;
  s.lexicon = j.at("lexicon").get<std::map<std::string, std::set<std::string>>>();
  return s;
}

void OracleState::save(const std::string& path) const { write_json(path, to_json()); }

OracleState OracleState::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read oracle state " + path);
  try {
    return from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("malformed oracle JSON " + path + ": " + e.what());
  }
}

namespace {

std::string numbered(std::string_view prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  if (digits.size() < static_cast<std::size_t>(width))
    digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return std::string(prefix) + digits;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) {
    if (!out.empty()) out += ' ';
    out += w;
  }
  return out;
}

}  // namespace

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticCorpus out;

  // Keywords and the content word pool.
  std::vector<std::string> keywords;
  std::vector<std::string> words;
  if (!spec.preferred_lexicon.empty()) {
    std::set<std::string> pool;
    for (const auto& [kw, lex] : spec.preferred_lexicon) {
      keywords.push_back(kw);
      pool.insert(lex.begin(), lex.end());
    }
    for (std::size_t i = 0; pool.size() < spec.vocabulary_size; ++i)
      pool.insert(numbered("w", i, 4));
    words.assign(pool.begin(), pool.end());
    out.oracle.lexicon = spec.preferred_lexicon;
  } else {
    for (std::size_t k = 0; k < spec.num_keywords; ++k) keywords.push_back(numbered("k", k, 2));
    for (std::size_t i = 0; i < spec.vocabulary_size; ++i) words.push_back(numbered("w", i, 4));
    std::vector<std::size_t> order(words.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    std::size_t next = 0;
    for (const auto& kw : keywords)
      for (std::size_t j = 0; j < spec.lexicon_size; ++j)
        out.oracle.lexicon[kw].insert(words[order[next++]]);
  }

  const auto [min_len, max_len] = spec.reply_length_range;
  for (const auto& kw : keywords) {
    const auto& lex_set = out.oracle.lexicon.at(kw);
    const std::vector<std::string> lexicon(lex_set.begin(), lex_set.end());
    std::vector<std::string> others;
    for (const auto& w : words)
      if (!lex_set.contains(w)) others.push_back(w);

    for (std::size_t t = 0; t < spec.tweets_per_keyword; ++t) {
      std::vector<std::string> tweet;
      for (std::size_t i = 0; i < spec.tweet_length; ++i) tweet.push_back(words[rng.index(words.size())]);
      const std::string tweet_text = join(tweet);
      const auto main_likes = static_cast<std::int64_t>(rng.poisson(5.0));

      for (std::size_t r = 0; r < spec.replies_per_tweet; ++r) {
        const std::size_t len = min_len + rng.index(max_len - min_len + 1);
        const double rate = std::pow(rng.uniform(), spec.preference_skew);
        std::vector<std::string> reply;
        std::size_t hits = 0;
        for (std::size_t i = 0; i < len; ++i) {
          if (rng.uniform() < rate) {
            reply.push_back(lexicon[rng.index(lexicon.size())]);
            ++hits;
          } else {
            reply.push_back(others[rng.index(others.size())]);
          }
        }
        const double score = static_cast<double>(hits) / static_cast<double>(len);
        const double mean = spec.like_base * (1.0 + spec.like_gain * score);
        out.records.push_back({kw, tweet_text, main_likes, join(reply),
                               static_cast<std::int64_t>(rng.poisson(mean))});
      }
    }
  }
  return out;
}

double oracle_score(std::span<const std::string> reply_words, const std::string& keyword,
                    const OracleState& oracle) {
  const auto it = oracle.lexicon.find(keyword);
  if (it == oracle.lexicon.end()) throw LookupError("keyword '" + keyword + "' unknown to the oracle");
  if (reply_words.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& w : reply_words)
    if (it->second.contains(w)) ++hits;
  return static_cast<double>(hits) / static_cast<double>(reply_words.size());
}

Oracle::Oracle(const OracleState& state, const Vocabulary& vocab) {
  for (const auto& [kw, lex] : state.lexicon) {
    auto& ids = preferred_[kw];
    for (const auto& w : lex) {
      const TokenId id = vocab.id_of(w);
      if (id != special::kUnk) ids.push_back(id);
    }
    std::sort(ids.begin(), ids.end());
  }
}

const std::vector<TokenId>& Oracle::lookup(const std::string& keyword) const {
  const auto it = preferred_.find(keyword);
  if (it == preferred_.end()) throw LookupError("keyword '" + keyword + "' unknown to the oracle");
  return it->second;
}

const std::vector<TokenId>& Oracle::preferred(const std::string& keyword) const {
  return lookup(keyword);
}

bool Oracle::is_preferred(TokenId id, const std::string& keyword) const {
  const auto& ids = lookup(keyword);
  return std::binary_search(ids.begin(), ids.end(), id);
}

double Oracle::score(std::span<const TokenId> reply, const std::string& keyword) const {
  const auto& ids = lookup(keyword);
  std::size_t content = 0;
  std::size_t hits = 0;
  for (const TokenId id : reply) {
    if (special::is_special(id)) continue;
    ++content;
    if (std::binary_search(ids.begin(), ids.end(), id)) ++hits;
  }
  return content == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(content);
}

// ---------------------------------------------------------------------------

CorpusSplit split(std::span<const ReplyRecord> records, SplitRatios ratios, std::uint64_t seed) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0)
    throw ParameterError("split ratios must be positive");
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw ParameterError("split ratios must sum to 1");

  std::vector<std::vector<std::size_t>> groups;
  std::unordered_map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto [it, inserted] = group_of.emplace(records[i].main_tweet, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  if (groups.size() < 3)
    throw SplitError("need at least 3 distinct main_tweet values, got " +
                     std::to_string(groups.size()));

  Rng rng(derive_seed(seed, 0x5b1u));
  for (std::size_t i = groups.size(); i > 1; --i) std::swap(groups[i - 1], groups[rng.index(i)]);

  const auto n = static_cast<double>(groups.size());
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.validation + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios.test + 1e-9));
  const std::size_t n_train = groups.size() - n_val - n_test;

  CorpusSplit out;
  out.split_seed = seed;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& part = g < n_train ? out.train : (g < n_train + n_val ? out.validation : out.test);
    for (std::size_t i : groups[g]) part.push_back(records[i]);
  }
  return out;
}

}  // namespace enlg
