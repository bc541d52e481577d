#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "enlg/corpus.hpp"
#include "enlg/errors.hpp"
#include "enlg/models.hpp"
#include "enlg/reward_model.hpp"
#include "enlg/text.hpp"

using namespace enlg;

namespace {

ModelConfig tiny_config(std::size_t vocab_size) {
  ModelConfig mc;
  mc.vocab_size = vocab_size;
  mc.d_model = 16;
  mc.n_heads = 2;
  mc.n_layers = 1;
  mc.context_len = 24;
  return mc;
}

struct Fixture {
  SyntheticCorpus corpus;
  Vocabulary vocab;

  Fixture() {
    SyntheticSpec spec;
    spec.num_keywords = 3;
    spec.vocabulary_size = 40;
    spec.lexicon_size = 4;
    spec.tweets_per_keyword = 20;
    spec.replies_per_tweet = 4;
    corpus = generate_synthetic(spec);
    std::vector<std::string> texts;
    for (const auto& r : corpus.records) {
      texts.push_back(r.keyword);
      texts.push_back(r.main_tweet);
      texts.push_back(r.reply);
    }
    vocab = build_vocab(texts, 512, 1);
  }
};

}  // namespace

TEST_CASE("labels follow the like threshold") {
  const std::vector<ReplyRecord> recs = {{"k", "t", 0, "a", 0}, {"k", "t", 0, "a", 1},
                                         {"k", "t", 0, "a", 4}};
  const std::vector<std::string> texts = {"k t a"};
  const auto vocab = build_vocab(texts, 10, 1);
  const auto l1 = label_records(recs, vocab, 1);
  CHECK(l1[0].label == 0);
  CHECK(l1[1].label == 1);
  CHECK(l1[2].label == 1);
  CHECK(l1[2].reply_likes == 4);
  const auto l5 = label_records(recs, vocab, 5);
  CHECK(l5[2].label == 0);
  CHECK(l1[0].input_tokens == frame_example(vocab, "k", "t", "a"));
  CHECK_THROWS_AS(label_records(recs, vocab, 0), ParameterError);
}

TEST_CASE("scoring frames truncate the reply from the right") {
  const std::vector<std::string> texts = {"k t a b c d"};
  const auto vocab = build_vocab(texts, 20, 1);
  const auto reply = encode("a b c d", vocab);
  bool truncated = true;
  const auto full = frame_for_scoring(vocab, "k", "t", reply, 0, &truncated);
  CHECK_FALSE(truncated);
  CHECK(full.size() == 10);
  const auto cut = frame_for_scoring(vocab, "k", "t", reply, 8, &truncated);
  CHECK(truncated);
  CHECK(cut == TokenSequence{1, vocab.id_of("k"), 4, vocab.id_of("t"), 4, vocab.id_of("a"),
                             vocab.id_of("b"), 2});
  CHECK_THROWS_AS(frame_for_scoring(vocab, "k", "t", reply, 5, nullptr), LengthError);
}

TEST_CASE("positive rate rises with oracle score decile") {
  SyntheticSpec spec;
  spec.num_keywords = 4;
  spec.vocabulary_size = 80;
  spec.lexicon_size = 5;
  spec.tweets_per_keyword = 200;
  spec.replies_per_tweet = 10;
  spec.reply_length_range = {5, 5};  // scores land on 0, 0.2, ..., 1
  const auto c = generate_synthetic(spec);
  std::vector<std::string> texts;
  for (const auto& r : c.records) texts.push_back(r.reply);
  const auto vocab = build_vocab(texts, 512, 1);
  const auto labeled = label_records(c.records, vocab, 1);
  std::vector<double> pos(6, 0), n(6, 0);
  for (std::size_t i = 0; i < c.records.size(); ++i) {
    const auto words = text::split_words(c.records[i].reply);
    const auto b = static_cast<std::size_t>(std::lround(oracle_score(words, c.records[i].keyword, c.oracle) * 5));
    pos[b] += labeled[i].label;
    ++n[b];
  }
  double prev = -1;
  for (std::size_t b = 0; b < 6; ++b) {
    REQUIRE(n[b] > 0);
    CAPTURE(b);
    CHECK(pos[b] / n[b] > prev);
    prev = pos[b] / n[b];
  }
}

TEST_CASE("untrained scorer has BCE ln 2") {
  Fixture f;
  const auto ex = label_records(f.corpus.records, f.vocab, 1);
  ScorerNet<float> scorer(tiny_config(f.vocab.size()));
  scorer.init(3);
  const auto ev = evaluate_scorer(scorer, ex);
  CHECK(std::abs(ev.loss - std::log(2.0)) < 1e-6);
  for (const auto& e : ex) CHECK(scorer.score(e.input_tokens) == 0.5f);
}

TEST_CASE("scorer training rejects degenerate data") {
  Fixture f;
  auto ex = label_records(f.corpus.records, f.vocab, 1);
  ScorerNet<float> scorer(tiny_config(f.vocab.size()));
  scorer.init(1);
  ScorerTrainConfig cfg;
  CHECK_THROWS_AS(train_scorer(scorer, {}, ex, cfg), TrainingError);
  for (auto& e : ex) e.label = 1;
  CHECK_THROWS_AS(train_scorer(scorer, ex, {}, cfg), TrainingError);
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("scorer training is deterministic, improves and calibrates") {
  Fixture f;
  const auto ex = label_records(f.corpus.records, f.vocab, 1);
  const std::span<const LabeledExample> all(ex);
  const auto train = all.subspan(0, 200);
  const auto val = all.subspan(200);
  ScorerTrainConfig cfg;
  cfg.epochs = 3;
  cfg.lr = 1e-3;
  cfg.seed = 4;

  ScorerNet<float> a(tiny_config(f.vocab.size())), b(tiny_config(f.vocab.size()));
  a.init(9);
  b.init(9);
  const auto ma = train_scorer(a, train, val, cfg);
  const auto mb = train_scorer(b, train, val, cfg);
  CHECK(a.params().values() == b.params().values());
  CHECK(ma.to_json() == mb.to_json());

  REQUIRE(ma.train_loss.size() == 4);
  REQUIRE(ma.validation_loss.size() == 4);
  CHECK(ma.train_loss.back() <= ma.train_loss.front());
  CHECK(*std::min_element(ma.validation_loss.begin(), ma.validation_loss.end()) <=
        ma.validation_loss[0]);
  CHECK(ma.validation_loss[ma.best_epoch] ==
        *std::min_element(ma.validation_loss.begin(), ma.validation_loss.end()));

  REQUIRE(ma.calibration.size() == 10);
  std::size_t total = 0;
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(ma.calibration[i].lower == doctest::Approx(i / 10.0));
    CHECK(ma.calibration[i].upper == doctest::Approx((i + 1) / 10.0));
    if (i > 0) CHECK(ma.calibration[i].lower == ma.calibration[i - 1].upper);
    total += ma.calibration[i].count;
  }
  CHECK(ma.calibration.front().lower == 0.0);
  CHECK(ma.calibration.back().upper == 1.0);
  CHECK(total == val.size());
}

TEST_CASE("scores are in (0,1) and pure") {
  Fixture f;
  const auto ex = label_records(f.corpus.records, f.vocab, 1);
  ScorerNet<float> scorer(tiny_config(f.vocab.size()));
  scorer.init(2);
  ScorerTrainConfig cfg;
  cfg.epochs = 2;
  cfg.lr = 3e-3;
  train_scorer(scorer, ex, {}, cfg);
  for (const auto& r : f.corpus.records) {
    const double s = score_text(scorer, f.vocab, r.keyword, r.main_tweet, r.reply);
    CHECK(s > 0.0);
    CHECK(s < 1.0);
    CHECK(s == score_text(scorer, f.vocab, r.keyword, r.main_tweet, r.reply));
  }
  bool truncated = false;
  std::string long_reply;
  for (int i = 0; i < 40; ++i) long_reply += f.corpus.records[0].reply + " ";
  const double s = score_text(scorer, f.vocab, "k00", "x", long_reply, &truncated);
  CHECK(truncated);
  CHECK(s > 0.0);
  CHECK(s < 1.0);
}

TEST_CASE("log-likes objective uses saturating soft targets") {
  LabeledExample ex;
  ScorerTrainConfig cfg;
  ex.reply_likes = 3;
  ex.label = 1;
  CHECK(scorer_target(ex, cfg) == 1.0);
  cfg.objective = ScorerObjective::LogLikes;
  CHECK(scorer_target(ex, cfg) == doctest::Approx(std::log(4.0) / std::log(21.0)));
  ex.reply_likes = 500;
  CHECK(scorer_target(ex, cfg) == 1.0);
  ex.reply_likes = 0;
  CHECK(scorer_target(ex, cfg) == 0.0);

  const auto back = ScorerTrainConfig::from_json(cfg.to_json());
  CHECK(back.objective == ScorerObjective::LogLikes);
  CHECK_THROWS_AS(ScorerTrainConfig::from_json({{"objective", "ranking"}}), ConfigError);
}
