#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "enlg/errors.hpp"
#include "enlg/policy_training.hpp"
#include "enlg/reward_model.hpp"
#include "enlg/rng.hpp"

using namespace enlg;

namespace {

ModelConfig tiny(std::size_t vocab_size) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.n_layers = 1;
  mc.context_len = 16;
  return mc;
}

std::vector<ReplyRecord> yes_corpus() {
  std::vector<ReplyRecord> recs;
  const char* kws[] = {"apple", "pear", "plum"};
  const char* tweets[] = {"red ripe fruit", "green hard fruit", "small sour fruit", "big sweet"};
  for (const char* k : kws)
    for (const char* t : tweets) recs.push_back({k, t, 1, "yes", 1});
  return recs;
}

Vocabulary vocab_of(const std::vector<ReplyRecord>& recs) {
  std::vector<std::string> texts;
  for (const auto& r : recs) {
    texts.push_back(r.keyword);
    texts.push_back(r.main_tweet);
    texts.push_back(r.reply);
  }
  return build_vocab(texts, 256, 1);
}

CorpusSplit train_only(std::vector<ReplyRecord> recs) {
  CorpusSplit s;
  s.train = std::move(recs);
  return s;
}

// Log-softmax at one position computed from the full logits, independent of nll().
double token_nll(const std::vector<float>& logits, std::size_t V, std::size_t pos, TokenId tok) {
  const float* row = logits.data() + pos * V;
  double mx = row[0];
  for (std::size_t v = 1; v < V; ++v) mx = std::max(mx, static_cast<double>(row[v]));
  double z = 0;
  for (std::size_t v = 0; v < V; ++v) z += std::exp(row[v] - mx);
  return -(row[tok] - mx - std::log(z));
}

}  // namespace

TEST_CASE("prompts_of keeps first-seen distinct prompts") {
  const std::vector<ReplyRecord> recs = {
      {"k", "t1", 0, "a", 0}, {"k", "t2", 0, "b", 0}, {"k", "t1", 0, "c", 0}, {"j", "t1", 0, "d", 0}};
  const auto p = prompts_of(recs);
  REQUIRE(p.size() == 3);
  CHECK(p[0] == Prompt{"k", "t1"});
  CHECK(p[1] == Prompt{"k", "t2"});
  CHECK(p[2] == Prompt{"j", "t1"});
}

TEST_CASE("bc data frames, truncates and skips") {
  const std::vector<ReplyRecord> recs = {
      {"k", "t", 0, "a b c d e", 0}, {"k", "t", 0, "zzz", 0}, {"k", "t", 0, "a", 0}};
  const std::vector<std::string> texts = {"k t a b c d e"};
  const auto vocab = build_vocab(texts, 32, 1);
  const auto d = make_bc_data(recs, vocab, 3, 16);
  REQUIRE(d.examples.size() == 3);
  CHECK(d.truncated == 1);
  CHECK(d.examples[0].truncated);
  CHECK(d.examples[0].prompt_len == 5);
  CHECK(d.examples[0].tokens.size() == 5 + 3 + 1);
  CHECK(d.examples[0].tokens.back() == special::kEos);
  // out-of-vocabulary words still count as a (UNK) reply token
  CHECK(d.examples[1].tokens[5] == special::kUnk);

  const std::vector<ReplyRecord> blank = {{"k", "t", 0, " ", 0}};
  CHECK(make_bc_data(blank, vocab, 3, 16).skipped_empty == 1);
  CHECK(make_bc_data(recs, vocab, 3, 5).skipped_long == 3);
}

TEST_CASE("bc loss covers reply positions only") {
  const auto recs = yes_corpus();
  const auto vocab = vocab_of(recs);
  PolicyNet<float> policy(tiny(vocab.size()));
  policy.init(3);
  const auto d = make_bc_data(recs, vocab, 4, 16);
  const auto& ex = d.examples[0];
  const auto targets = reply_targets(ex, 0, 1.0f);
  REQUIRE(targets.size() == ex.tokens.size() - ex.prompt_len);
  for (const auto& t : targets) {
    CHECK(t.position + 1 >= ex.prompt_len);
    CHECK(t.token == ex.tokens[t.position + 1]);
  }

  const auto logits = policy.logits(ex.tokens);
  double expect = 0;
  for (std::size_t p = ex.prompt_len; p < ex.tokens.size(); ++p)
    expect += token_nll(logits, vocab.size(), p - 1, ex.tokens[p]);
  expect /= static_cast<double>(ex.tokens.size() - ex.prompt_len);
  CHECK(bc_loss(policy, std::span(&ex, 1)) == doctest::Approx(expect).epsilon(1e-5));
}

TEST_CASE("untrained policy loss is near ln V") {
  SyntheticSpec spec;
  spec.num_keywords = 3;
  spec.vocabulary_size = 60;
  spec.lexicon_size = 4;
  spec.tweets_per_keyword = 10;
  const auto c = generate_synthetic(spec);
  const auto vocab = vocab_of(c.records);
  PolicyNet<float> policy(tiny(vocab.size()));
  policy.init(1);
  const auto d = make_bc_data(c.records, vocab, 8, 16);
  const double loss = bc_loss(policy, d.examples);
  const double lnv = std::log(static_cast<double>(vocab.size()));
  CHECK(std::abs(loss - lnv) <= 0.05 * lnv);
}

TEST_CASE("bc on an all-yes corpus makes greedy decoding say yes") {
  const auto recs = yes_corpus();
  const auto vocab = vocab_of(recs);
  PolicyNet<float> policy(tiny(vocab.size()));
  policy.init(2);
  BCConfig cfg;
  cfg.epochs = 40;
  cfg.batch = 4;
  cfg.lr = 3e-3;
  const auto stats = train_bc(policy, train_only(recs), vocab, cfg);
  CHECK(stats.train_loss.back() < stats.train_loss.front());
  for (const auto& r : recs) {
    GenerationRequest req{r.keyword, r.main_tweet, 1, 1e-6, 8, 0};
    CHECK(generate(policy, vocab, req) == std::vector<std::string>{"yes"});
  }
  // unseen prompt words map to UNK in the prompt; the reply is still "yes"
  GenerationRequest unseen{"banana", "unknown words", 1, 1e-6, 8, 0};
  CHECK(generate(policy, vocab, unseen) == std::vector<std::string>{"yes"});
}

TEST_CASE("bc training is deterministic and rejects empty data") {
  const auto recs = yes_corpus();
  const auto vocab = vocab_of(recs);
  BCConfig cfg;
  cfg.epochs = 2;
  cfg.seed = 11;
  PolicyNet<float> a(tiny(vocab.size())), b(tiny(vocab.size()));
  a.init(4);
  b.init(4);
  train_bc(a, train_only(recs), vocab, cfg);
  train_bc(b, train_only(recs), vocab, cfg);
  CHECK(a.params().values() == b.params().values());

  const std::vector<ReplyRecord> empty_replies = {{"k", "t", 0, "   ", 0}};
  CHECK_THROWS_AS(train_bc(a, train_only(empty_replies), vocab, cfg), TrainingError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("generation is seeded, greedy at tiny temperature and never emits structure tokens") {
  SyntheticSpec spec;
  spec.num_keywords = 2;
  spec.vocabulary_size = 30;
  spec.lexicon_size = 3;
  spec.tweets_per_keyword = 5;
  const auto c = generate_synthetic(spec);
  const auto vocab = vocab_of(c.records);
  PolicyNet<float> policy(tiny(vocab.size()));
  policy.init(6);
  GenerationRequest req{"k00", c.records[0].main_tweet, 50, 1.0, 6, 17};
  const auto a = generate(policy, vocab, req);
  const auto b = generate(policy, vocab, req);
  CHECK(a == b);
  CHECK(a.size() == 50);
  req.seed = 18;
  CHECK(generate(policy, vocab, req) != a);

  // Greedy oracle: repeatedly take the lowest-id argmax over non-structural tokens.
  TokenSequence seq = frame_prompt(vocab, "k00", c.records[0].main_tweet);
  std::vector<TokenId> greedy;
  for (int step = 0; step < 6; ++step) {
    auto logits = policy.last_logits(seq);
    TokenId best = -1;
    for (TokenId v = 0; v < static_cast<TokenId>(logits.size()); ++v) {
      if (v == special::kPad || v == special::kBos || v == special::kSep || v == special::kUnk)
        continue;
      if (best < 0 || logits[v] > logits[best]) best = v;
    }
    if (best == special::kEos) break;
    greedy.push_back(best);
    seq.push_back(best);
  }
  req.temperature = 1e-6;
  req.n_samples = 3;
  const auto g = generate(policy, vocab, req);
  for (const auto& s : g) CHECK(s == decode(greedy, vocab));

  // sampled ids never include PAD/BOS/SEP/UNK or an EOS mid-reply
  std::vector<TokenSequence> prompts = {frame_prompt(vocab, "k00", "x"), frame_prompt(vocab, "k01", "y")};
  const auto samples = sample_replies(policy, prompts, 200, 1.5, 6, 3);
  for (const auto& per_prompt : samples)
    for (const auto& r : per_prompt) {
      CHECK(r.size() <= 6);
      for (TokenId id : r) {
        CHECK(id != special::kPad);
        CHECK(id != special::kBos);
        CHECK(id != special::kSep);
        CHECK(id != special::kUnk);
        CHECK(id != special::kEos);
      }
    }

  req.temperature = 0.0;
  CHECK_THROWS_AS(generate(policy, vocab, req), ParameterError);
  req.temperature = -1.0;
  CHECK_THROWS_AS(generate(policy, vocab, req), ParameterError);
}

TEST_CASE("sampling frequencies match softmax within three standard errors") {
  std::vector<float> logits(7, -std::numeric_limits<float>::infinity());
  logits[5] = 0.4f;
  logits[6] = -0.3f;
  for (double T : {1.0, 0.5, 2.0}) {
    const double p5 = 1.0 / (1.0 + std::exp((-0.3 - 0.4) / T));
    Rng rng(123);
    const int n = 10000;
    int count5 = 0;
    for (int i = 0; i < n; ++i) {
      const TokenId t = sample_token(logits, T, rng);
      REQUIRE((t == 5 || t == 6));
      count5 += t == 5;
    }
    const double se = std::sqrt(p5 * (1 - p5) / n);
    CAPTURE(T);
    CHECK(std::abs(static_cast<double>(count5) / n - p5) <= 3 * se);
  }
  Rng rng(1);
  CHECK_THROWS_AS(sample_token(logits, 0.0, rng), ParameterError);
  // tie at tiny temperature goes to the lowest id
  std::vector<float> tie = {0.f, 0.f, 0.f, 0.f, 0.f, 2.f, 2.f};
  CHECK(sample_token(tie, 1e-6, rng) == 5);
}

TEST_CASE("a policy with all mass on EOS produces empty replies") {
  const auto recs = yes_corpus();
  const auto vocab = vocab_of(recs);
  PolicyNet<float> policy(tiny(vocab.size()));
  policy.init(1);
  // Final norm outputs a constant vector of ones; only the EOS row of the head reads it.
  auto& ps = policy.params();
  for (float& g : ps.view(ps.find("trunk.lnf.g"))) g = 0.0f;
  for (float& b : ps.view(ps.find("trunk.lnf.b"))) b = 1.0f;
  auto head = ps.view(ps.find("lm_head"));
  const std::size_t d = policy.config().d_model;
  for (std::size_t i = 0; i < head.size(); ++i)
    head[i] = i / d == static_cast<std::size_t>(special::kEos) ? 100.0f : 0.0f;
  GenerationRequest req{"apple", "red ripe fruit", 5, 1.0, 8, 0};
  for (const auto& r : generate(policy, vocab, req)) CHECK(r.empty());
}

TEST_CASE("mask_structural blocks framing tokens only") {
  std::vector<float> l(8, 1.0f);
  mask_structural(l);
  CHECK(std::isinf(l[special::kPad]));
  CHECK(std::isinf(l[special::kBos]));
  CHECK(std::isinf(l[special::kSep]));
  CHECK(std::isinf(l[special::kUnk]));
  CHECK(l[special::kEos] == 1.0f);
  CHECK(l[5] == 1.0f);
}

TEST_CASE("ranking is a stable descending sort") {
  const std::vector<ScoredReply> s = {{"a", 0.2}, {"b", 0.9}, {"c", 0.2}};
  const auto r = rank_scored(s);
  REQUIRE(r.size() == 3);
  CHECK(r[0].reply == "b");
  CHECK(r[1].reply == "a");
  CHECK(r[2].reply == "c");
  CHECK(rank_scored({{"x", 0.5}}).size() == 1);

  Rng rng(8);
  std::vector<ScoredReply> many;
  double mean = 0;
  for (int i = 0; i < 20; ++i) {
    many.push_back({std::to_string(i), static_cast<double>(rng.index(5)) / 4});
    mean += many.back().score / 20;
  }
  const auto ranked = rank_scored(many);
  CHECK(ranked.front().score >= mean);
  for (std::size_t i = 1; i < ranked.size(); ++i) {
    CHECK(ranked[i - 1].score >= ranked[i].score);
    if (ranked[i - 1].score == ranked[i].score)
      CHECK(std::stoi(ranked[i - 1].reply) < std::stoi(ranked[i].reply));
  }
}

TEST_CASE("rank_replies scores with the scorer") {
  const auto recs = yes_corpus();
  const auto vocab = vocab_of(recs);
  ScorerNet<float> scorer(tiny(vocab.size()));
  scorer.init(1);
  Rng rng(2);
  for (auto& v : scorer.params().values()) v += 0.2f * static_cast<float>(rng.normal());
  const std::vector<std::string> replies = {"yes", "yes apple", "red"};
  const auto ranked = rank_replies(replies, scorer, vocab, "apple", "red ripe fruit");
  REQUIRE(ranked.size() == 3);
  for (const auto& r : ranked)
    CHECK(r.score == score_text(scorer, vocab, "apple", "red ripe fruit", r.reply));
  CHECK(ranked[0].score >= ranked[1].score);
  CHECK(ranked[1].score >= ranked[2].score);
}
