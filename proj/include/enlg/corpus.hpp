#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <set>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "enlg/tokenizer.hpp"

namespace enlg {

/// One row of the reply corpus: a keyword-tagged tweet and one reply to it.
struct ReplyRecord {
  std::string keyword;
  std::string main_tweet;
  std::int64_t main_likes = 0;
  std::string reply;
  std::int64_t reply_likes = 0;

  bool operator==(const ReplyRecord&) const = default;
};

inline constexpr std::size_t kMaxTweetsPerKeyword = 13000;
inline constexpr std::size_t kMaxRepliesPerTweet = 20;

struct IngestDiagnostics {
  std::size_t rows_read = 0;
  std::size_t rows_accepted = 0;
  std::size_t rows_rejected = 0;
  std::map<std::string, std::size_t> rejection_reasons;
  std::map<std::string, std::size_t> per_keyword_counts;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

struct IngestResult {
  std::vector<ReplyRecord> records;
  IngestDiagnostics diagnostics;
};

/// Reads a corpus CSV (RFC 4180, header with the five schema columns in any
/// order). Bad rows are counted and skipped; with `strict` the first bad row
/// throws RowError. Missing or unknown columns throw SchemaError.
IngestResult ingest_csv(const std::string& path, bool strict);
IngestResult ingest_csv(std::istream& in, bool strict);

/// Ingests several files and concatenates them in argument order.
IngestResult ingest_csv_files(std::span<const std::string> paths, bool strict);

void write_csv(std::ostream& out, std::span<const ReplyRecord> records);
void write_csv(const std::string& path, std::span<const ReplyRecord> records);
void write_json(const std::string& path, const nlohmann::json& j);

// ---------------------------------------------------------------------------
// Synthetic corpora with a hidden lexicon-coverage oracle

struct SyntheticSpec {
  std::size_t num_keywords = 20;
  /// Content word types available to tweets and replies (keywords are extra).
  std::size_t vocabulary_size = 600;
  std::size_t lexicon_size = 8;
  /// Optional explicit lexicons; generated from `seed` when empty.
  std::map<std::string, std::set<std::string>> preferred_lexicon;
  std::size_t replies_per_tweet = 4;
  std::size_t tweets_per_keyword = 200;
  std::size_t tweet_length = 3;
  std::pair<std::size_t, std::size_t> reply_length_range{2, 6};
  /// Per-reply preference rate is u^skew with u uniform; mean 1/(skew+1).
  double preference_skew = 3.0;
  double like_base = 0.2;
  double like_gain = 10.0;
  std::uint64_t seed = 7;

  nlohmann::json to_json() const;
  static SyntheticSpec from_json(const nlohmann::json& j);
  void validate() const;
};

/// Hidden ground truth: preferred tokens per keyword. Test-harness only.
struct OracleState {
  std::map<std::string, std::set<std::string>> lexicon;

  nlohmann::json to_json() const;
  static OracleState from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static OracleState load(const std::string& path);
};

struct SyntheticCorpus {
  std::vector<ReplyRecord> records;
  OracleState oracle;
};

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

/// Fraction of words in the reply that belong to the keyword's lexicon.
double oracle_score(std::span<const std::string> reply_words, const std::string& keyword,
                    const OracleState& oracle);

/// Id-level oracle bound to one vocabulary. Specials are excluded from the
/// denominator; an empty (or all-special) reply scores 0.
class Oracle {
 public:
  Oracle(const OracleState& state, const Vocabulary& vocab);

  double score(std::span<const TokenId> reply, const std::string& keyword) const;
  bool is_preferred(TokenId id, const std::string& keyword) const;
  const std::vector<TokenId>& preferred(const std::string& keyword) const;

 private:
  const std::vector<TokenId>& lookup(const std::string& keyword) const;
  std::map<std::string, std::vector<TokenId>> preferred_;  // sorted ids
};

// ---------------------------------------------------------------------------

struct SplitRatios {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  std::vector<ReplyRecord> train;
  std::vector<ReplyRecord> validation;
  std::vector<ReplyRecord> test;
  std::uint64_t split_seed = 0;
};

/// Partitions by main_tweet group. Part sizes in groups are floored and the
/// remainder goes to train.
CorpusSplit split(std::span<const ReplyRecord> records, SplitRatios ratios, std::uint64_t seed);

}  // namespace enlg
