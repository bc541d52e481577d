#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enlg/corpus.hpp"
#include "enlg/errors.hpp"
#include "enlg/rng.hpp"
#include "enlg/text.hpp"

using namespace enlg;

namespace {

IngestResult ingest_string(const std::string& s, bool strict = false) {
  std::istringstream in(s);
  return ingest_csv(in, strict);
}

const std::string kHeader = "keyword,main_tweet,main_likes,reply,reply_likes\n";

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.num_keywords = 4;
  s.vocabulary_size = 80;
  s.lexicon_size = 5;
  s.tweets_per_keyword = 30;
  s.replies_per_tweet = 5;
  return s;
}

void check_reconciles(const IngestDiagnostics& d) {
  CHECK(d.rows_read == d.rows_accepted + d.rows_rejected);
  std::size_t reasons = 0;
  for (const auto& [k, v] : d.rejection_reasons) reasons += v;
  CHECK(reasons == d.rows_rejected);
  std::size_t kw = 0;
  for (const auto& [k, v] : d.per_keyword_counts) kw += v;
  CHECK(kw == d.rows_accepted);
}

}  // namespace

TEST_CASE("ingest accepts a well-formed row with quoted unicode text") {
  const std::string row =
      "Queen Elizabeth,\"I don\xE2\x80\x99t know, its a part of our gene pool? \xE2\x80\xA6\",7,"
      "\"Is this another \xE2\x80\x9Cgood\xE2\x80\x9D Covid tweet? \xE2\x80\xA6\",3\n";
  const auto r = ingest_string(kHeader + row);
  REQUIRE(r.records.size() == 1);
  const auto& rec = r.records[0];
  CHECK(rec.keyword == "Queen Elizabeth");
  CHECK(rec.main_tweet == "I don\xE2\x80\x99t know, its a part of our gene pool? \xE2\x80\xA6");
  CHECK(rec.main_likes == 7);
  CHECK(rec.reply == "Is this another \xE2\x80\x9Cgood\xE2\x80\x9D Covid tweet? \xE2\x80\xA6");
  CHECK(rec.reply_likes == 3);
  CHECK(r.diagnostics.per_keyword_counts.at("Queen Elizabeth") == 1);
}

TEST_CASE("ingest rejection reasons") {
  const auto r = ingest_string(kHeader +
                               "k,t,1,r,-1\n"
                               "k,t,x,r,1\n"
                               "k,t,1,r\n"
                               "k,\"  \",1,r,1\n"
                               "k,t,1,\"bad \xFF\",1\n"
                               "k,t, 4 ,r,2\n");
  const auto& d = r.diagnostics;
  CHECK(d.rows_read == 6);
  CHECK(d.rows_accepted == 1);
  CHECK(d.rejection_reasons.at("negative like count") == 1);
  CHECK(d.rejection_reasons.at("non-integer like count") == 1);
  CHECK(d.rejection_reasons.at("field count mismatch") == 1);
  CHECK(d.rejection_reasons.at("empty text field") == 1);
  CHECK(d.rejection_reasons.at("invalid utf-8") == 1);
  CHECK(r.records[0].main_likes == 4);
  check_reconciles(d);
}

TEST_CASE("strict ingestion aborts on the first bad row") {
  CHECK_THROWS_AS(ingest_string(kHeader + "k,t,1,r,1\nk,t,1,r,-1\n", true), RowError);
  CHECK(ingest_string(kHeader + "k,t,1,r,1\n", true).records.size() == 1);
}

TEST_CASE("header handling") {
  const auto empty = ingest_string(kHeader);
  CHECK(empty.records.empty());
  CHECK(empty.diagnostics.rows_read == 0);

  const auto reordered = ingest_string("reply_likes,reply,main_likes,main_tweet,keyword\r\n2,r,1,t,k\r\n");
  REQUIRE(reordered.records.size() == 1);
  CHECK(reordered.records[0] == ReplyRecord{"k", "t", 1, "r", 2});

  CHECK(ingest_string("\xEF\xBB\xBF" + kHeader + "k,t,1,r,1\n").records.size() == 1);
  CHECK_THROWS_AS(ingest_string("keyword,main_tweet,main_likes,reply\n"), SchemaError);
  CHECK_THROWS_AS(ingest_string("keyword,tweet,main_likes,reply,reply_likes\n"), SchemaError);
  CHECK_THROWS_AS(ingest_string("keyword,keyword,main_likes,reply,reply_likes\n"), SchemaError);
  CHECK_THROWS_AS(ingest_string(""), SchemaError);
  CHECK_THROWS_AS(ingest_csv("/nonexistent/enlg.csv", false), IoError);
}

TEST_CASE("unterminated quote at end of file is a counted rejection") {
  const auto r = ingest_string(kHeader + "k,t,1,r,1\n\"open,t,1,r,1\n");
  CHECK(r.diagnostics.rows_read == 2);
  CHECK(r.diagnostics.rejection_reasons.at("unterminated quoted field") == 1);
}

TEST_CASE("golden 1000-row file yields the independently computed counts") {
  const std::string dir = ENLG_TEST_DATA_DIR;
  const auto r = ingest_csv(dir + "/golden_1000.csv", false);
  std::ifstream in(dir + "/golden_1000_expected.json");
  const auto expected = nlohmann::json::parse(in);
  const auto& d = r.diagnostics;
  CHECK(d.rows_read == expected.at("rows_read").get<std::size_t>());
  CHECK(d.rows_accepted == expected.at("rows_accepted").get<std::size_t>());
  CHECK(d.rows_rejected == expected.at("rows_rejected").get<std::size_t>());
  CHECK(d.rejection_reasons == expected.at("rejection_reasons").get<std::map<std::string, std::size_t>>());
  CHECK(d.per_keyword_counts == expected.at("per_keyword_counts").get<std::map<std::string, std::size_t>>());
  CHECK(r.records.size() == d.rows_accepted);
  check_reconciles(d);
}

TEST_CASE("write then ingest is the identity on valid records") {
  std::vector<ReplyRecord> recs = {{"k", "tweet, with comma", 3, "say \"hi\"\nnext", 0},
                                   {"caf\xC3\xA9", "t", 0, "r", 12}};
  std::ostringstream out;
  write_csv(out, recs);
  const auto back = ingest_string(out.str(), true);
  REQUIRE(back.records.size() == 2);
  // normalization collapses the embedded newline
  CHECK(back.records[0].reply == "say \"hi\" next");
  CHECK(back.records[0].main_tweet == recs[0].main_tweet);
  CHECK(back.records[1] == recs[1]);

  std::ostringstream again;
  write_csv(again, back.records);
  CHECK(ingest_string(again.str(), true).records == back.records);
}

TEST_CASE("multi-file ingestion concatenates in argument order") {
  namespace fs = std::filesystem;
  const auto a = (fs::temp_directory_path() / "enlg_a.csv").string();
  const auto b = (fs::temp_directory_path() / "enlg_b.csv").string();
  std::ofstream(a) << kHeader << "k1,t,1,first,1\n";
  std::ofstream(b) << kHeader << "k2,t,1,second,1\nk2,t,1,r,-5\n";
  const std::vector<std::string> paths = {b, a};
  const auto r = ingest_csv_files(paths, false);
  REQUIRE(r.records.size() == 2);
  CHECK(r.records[0].reply == "second");
  CHECK(r.records[1].reply == "first");
  CHECK(r.diagnostics.rows_read == 3);
  check_reconciles(r.diagnostics);
  fs::remove(a);
  fs::remove(b);
}

TEST_CASE("crawl caps warn instead of rejecting") {
  std::string csv = kHeader;
  for (int i = 0; i < 21; ++i) csv += "k,same tweet,1,r" + std::to_string(i) + ",0\n";
  const auto r = ingest_string(csv);
  CHECK(r.records.size() == 21);
  REQUIRE(r.diagnostics.warnings.size() == 1);
  CHECK(r.diagnostics.warnings[0].find("more than 20") != std::string::npos);
}

TEST_CASE("synthetic generation is deterministic and respects caps") {
  const auto spec = small_spec();
  const auto a = generate_synthetic(spec);
  const auto b = generate_synthetic(spec);
  CHECK(a.records == b.records);
  CHECK(a.oracle.lexicon == b.oracle.lexicon);
  CHECK(a.records.size() == 4 * 30 * 5);
  std::ostringstream sa, sb;
  write_csv(sa, a.records);
  write_csv(sb, b.records);
  CHECK(sa.str() == sb.str());

  auto other = spec;
  other.seed = 8;
  CHECK(generate_synthetic(other).records != a.records);

  auto big = spec;
  big.tweets_per_keyword = 13001;
  CHECK_THROWS_AS(generate_synthetic(big), SpecError);
  big = spec;
  big.replies_per_tweet = 21;
  CHECK_THROWS_AS(generate_synthetic(big), SpecError);
}

TEST_CASE("synthetic lexicons are disjoint and of equal size") {
  const auto c = generate_synthetic(small_spec());
  std::set<std::string> all;
  for (const auto& [kw, lex] : c.oracle.lexicon) {
    CHECK(lex.size() == 5);
    for (const auto& w : lex) CHECK(all.insert(w).second);
  }

  auto spec = small_spec();
  spec.num_keywords = 2;
  spec.preferred_lexicon = {{"x", {"a", "b"}}, {"y", {"b", "c"}}};
  CHECK_THROWS_AS(generate_synthetic(spec), SpecError);
  spec.preferred_lexicon = {{"x", {"a", "b"}}, {"y", {"c"}}};
  CHECK_THROWS_AS(generate_synthetic(spec), SpecError);
  spec.preferred_lexicon = {{"x", {"a", "b"}}, {"y", {"c", "d"}}};
  const auto explicit_lex = generate_synthetic(spec);
  CHECK(explicit_lex.oracle.lexicon == spec.preferred_lexicon);
}

TEST_CASE("synthetic spec json round trip") {
  auto spec = small_spec();
  spec.reply_length_range = {3, 7};
  const auto back = SyntheticSpec::from_json(spec.to_json());
  CHECK(back.to_json() == spec.to_json());
}

TEST_CASE("oracle score definition") {
  OracleState o;
  o.lexicon = {{"k", {"good", "great"}}, {"j", {"fine"}}};
  const std::vector<std::string> half = {"good", "bad", "great", "meh"};
  CHECK(oracle_score(half, "k", o) == 0.5);
  const std::vector<std::string> none = {"bad", "meh"};
  CHECK(oracle_score(none, "k", o) == 0.0);
  const std::vector<std::string> all = {"great", "good", "good"};
  CHECK(oracle_score(all, "k", o) == 1.0);
  CHECK(oracle_score(std::vector<std::string>{}, "k", o) == 0.0);
  CHECK_THROWS_AS(oracle_score(half, "unknown", o), LookupError);

  const std::vector<std::string> texts = {"good great bad meh fine"};
  const auto vocab = build_vocab(texts, 100, 1);
  const Oracle oracle(o, vocab);
  const TokenSequence ids = {special::kBos, vocab.id_of("good"), vocab.id_of("bad"), special::kEos};
  CHECK(oracle.score(ids, "k") == 0.5);
  CHECK(oracle.score(TokenSequence{special::kEos}, "k") == 0.0);
  CHECK(oracle.is_preferred(vocab.id_of("fine"), "j"));
  CHECK_FALSE(oracle.is_preferred(vocab.id_of("fine"), "k"));
  CHECK_THROWS_AS(oracle.score(ids, "zzz"), LookupError);
}

TEST_CASE("oracle score is invariant under permutation") {
  const auto c = generate_synthetic(small_spec());
  Rng rng(3);
  for (std::size_t i = 0; i < c.records.size(); i += 7) {
    auto words = text::split_words(c.records[i].reply);
    const double s = oracle_score(words, c.records[i].keyword, c.oracle);
    for (std::size_t j = words.size(); j > 1; --j) std::swap(words[j - 1], words[rng.index(j)]);
    CHECK(oracle_score(words, c.records[i].keyword, c.oracle) == s);
  }
}

TEST_CASE("exhaustive search over a toy vocabulary finds the all-preferred reply") {
  OracleState o;
  o.lexicon = {{"k", {"p"}}};
  const std::vector<std::string> toy = {"p", "q", "r"};
  for (std::size_t len = 1; len <= 4; ++len) {
    double best = -1;
    std::vector<std::string> argmax;
    std::size_t total = 1;
    for (std::size_t i = 0; i < len; ++i) total *= toy.size();
    for (std::size_t code = 0; code < total; ++code) {
      std::vector<std::string> reply;
      for (std::size_t i = 0, c = code; i < len; ++i, c /= toy.size()) reply.push_back(toy[c % 3]);
      const double s = oracle_score(reply, "k", o);
      if (s > best) best = s, argmax = reply;
    }
    CHECK(best == 1.0);
    CHECK(argmax == std::vector<std::string>(len, "p"));
  }
}

TEST_CASE("likes are monotone in oracle score decile") {
  auto spec = small_spec();
  spec.tweets_per_keyword = 100;
  spec.replies_per_tweet = 10;  // 4000 replies
  const auto c = generate_synthetic(spec);
  std::vector<double> sum(10, 0.0);
  std::vector<std::size_t> count(10, 0);
  for (const auto& r : c.records) {
    const auto words = text::split_words(r.reply);
    const double s = oracle_score(words, r.keyword, c.oracle);
    const auto bucket = std::min<std::size_t>(9, static_cast<std::size_t>(s * 10));
    sum[bucket] += static_cast<double>(r.reply_likes);
    ++count[bucket];
  }
  double prev = -1;
  for (std::size_t b = 0; b < 10; ++b) {
    if (count[b] == 0) continue;
    const double mean = sum[b] / static_cast<double>(count[b]);
    CAPTURE(b);
    CHECK(mean >= prev);
    prev = mean;
  }
}

TEST_CASE("split rounding, determinism and grouping") {
  std::vector<ReplyRecord> recs;
  for (int t = 0; t < 10; ++t)
    for (int r = 0; r < 3; ++r)
      recs.push_back({"k", "tweet " + std::to_string(t), 0, "r" + std::to_string(r), 0});

  const auto s = split(recs, {0.8, 0.1, 0.1}, 42);
  auto groups = [](const std::vector<ReplyRecord>& part) {
    std::set<std::string> g;
    for (const auto& r : part) g.insert(r.main_tweet);
    return g;
  };
  CHECK(groups(s.train).size() == 8);
  CHECK(groups(s.validation).size() == 1);
  CHECK(groups(s.test).size() == 1);
  CHECK(s.train.size() + s.validation.size() + s.test.size() == recs.size());
  CHECK(s.split_seed == 42);

  const auto again = split(recs, {0.8, 0.1, 0.1}, 42);
  CHECK(again.train == s.train);
  CHECK(again.validation == s.validation);
  CHECK(again.test == s.test);

  CHECK_THROWS_AS(split(std::span(recs).first(6), {0.8, 0.1, 0.1}, 1), SplitError);
  CHECK_THROWS_AS(split(recs, {0.8, 0.1, 0.2}, 1), ParameterError);
  CHECK_THROWS_AS(split(recs, {1.0, 0.0, 0.0}, 1), ParameterError);
}

TEST_CASE("split is a group-atomic partition for random inputs") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ReplyRecord> recs;
    const std::size_t n = 3 + rng.index(200);
    for (std::size_t i = 0; i < n; ++i)
      recs.push_back({"k", "t" + std::to_string(rng.index(n / 2 + 3)), 0, "r" + std::to_string(i), 0});
    std::set<std::string> distinct;
    for (const auto& r : recs) distinct.insert(r.main_tweet);
    if (distinct.size() < 3) continue;

    const auto s = split(recs, {0.6, 0.2, 0.2}, rng.next());
    std::map<std::string, int> part_of;
    std::multiset<std::string> seen;
    int p = 0;
    for (const auto* part : {&s.train, &s.validation, &s.test}) {
      for (const auto& r : *part) {
        const auto [it, fresh] = part_of.emplace(r.main_tweet, p);
        REQUIRE(it->second == p);
        seen.insert(r.reply);
      }
      ++p;
    }
    std::multiset<std::string> expected;
    for (const auto& r : recs) expected.insert(r.reply);
    CHECK(seen == expected);
  }
}
