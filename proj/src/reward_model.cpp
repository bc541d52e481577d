#include "enlg/reward_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "enlg/errors.hpp"
#include "enlg/log.hpp"
#include "enlg/optim.hpp"

namespace enlg {

TokenSequence frame_for_scoring(const Vocabulary& vocab, std::string_view keyword,
                                std::string_view tweet, std::span<const TokenId> reply,
                                std::size_t context_len, bool* truncated) {
  TokenSequence seq = frame_prompt(vocab, keyword, tweet);
  std::size_t keep = reply.size();
  if (context_len != 0) {
    if (seq.size() + 1 > context_len)
      throw LengthError("prompt of " + std::to_string(seq.size()) +
                        " tokens leaves no room in context_len " + std::to_string(context_len));
    keep = std::min(keep, context_len - seq.size() - 1);
  }
  if (truncated != nullptr) *truncated = keep < reply.size();
  seq.insert(seq.end(), reply.begin(), reply.begin() + static_cast<std::ptrdiff_t>(keep));
  seq.push_back(special::kEos);
  return seq;
}

std::vector<LabeledExample> label_records(std::span<const ReplyRecord> records,
                                          const Vocabulary& vocab, std::int64_t like_threshold,
                                          std::size_t context_len) {
  if (like_threshold < 1) throw ParameterError("like_threshold must be at least 1");
  std::vector<LabeledExample> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    LabeledExample ex;
    const TokenSequence reply = encode(r.reply, vocab);
    ex.input_tokens =
        frame_for_scoring(vocab, r.keyword, r.main_tweet, reply, context_len, &ex.truncated);
    ex.label = r.reply_likes >= like_threshold ? 1 : 0;
    ex.reply_likes = r.reply_likes;
    out.push_back(std::move(ex));
  }
  return out;
}

void ScorerTrainConfig::validate() const {
  if (log_likes_cap < 1) throw ConfigError("log_likes_cap must be at least 1");
  if (epochs == 0) throw ConfigError("scorer epochs must be positive");
  if (batch == 0) throw ConfigError("scorer batch must be positive");
  if (!(lr > 0)) throw ConfigError("scorer lr must be positive");
  if (weight_decay < 0) throw ConfigError("scorer weight_decay must be non-negative");
  if (like_threshold < 1) throw ConfigError("like_threshold must be at least 1");
}

nlohmann::json ScorerTrainConfig::to_json() const {
  return {{"objective", objective == ScorerObjective::LogLikes ? "log_likes" : "classification"},
          {"log_likes_cap", log_likes_cap},
          {"epochs", epochs}, {"batch", batch},
          {"lr", lr},         {"weight_decay", weight_decay},
          {"like_threshold", like_threshold}, {"seed", seed}};
}

ScorerTrainConfig ScorerTrainConfig::from_json(const nlohmann::json& j) {
  ScorerTrainConfig c;
  const std::string obj = j.value("objective", std::string("classification"));
  if (obj == "log_likes")
    c.objective = ScorerObjective::LogLikes;
  else if (obj != "classification")
    throw ConfigError("unknown scorer objective '" + obj + "'");
  c.log_likes_cap = j.value("log_likes_cap", c.log_likes_cap);
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.like_threshold = j.value("like_threshold", c.like_threshold);
  c.seed = j.value("seed", c.seed);
  return c;
}

double scorer_target(const LabeledExample& ex, const ScorerTrainConfig& config) {
  if (config.objective == ScorerObjective::Classification) return ex.label;
  const double likes = static_cast<double>(std::max<std::int64_t>(0, ex.reply_likes));
  return std::min(1.0, std::log1p(likes) / std::log1p(static_cast<double>(config.log_likes_cap)));
}

nlohmann::json ScorerMetrics::to_json() const {
  nlohmann::json bins = nlohmann::json::array();
  for (const auto& b : calibration)
    bins.push_back({{"lower", b.lower},
                    {"upper", b.upper},
                    {"count", b.count},
                    {"mean_predicted", b.mean_predicted},
                    {"positive_rate", b.positive_rate}});
  return {{"train_loss", train_loss},
          {"validation_loss", validation_loss},
          {"validation_accuracy", validation_accuracy},
          {"best_epoch", best_epoch},
          {"calibration", bins}};
}

namespace {

constexpr std::size_t kEvalChunk = 64;
constexpr std::size_t kBins = 10;

std::vector<TokenSequence> inputs_of(std::span<const LabeledExample> ex, std::size_t begin,
                                     std::size_t end) {
  std::vector<TokenSequence> out;
  out.reserve(end - begin);
  for (std::size_t i = begin; i < end; ++i) out.push_back(ex[i].input_tokens);
  return out;
}

}  // namespace

ScorerEvaluation evaluate_scorer(const ScorerNet<float>& scorer,
                                 std::span<const LabeledExample> examples,
                                 const ScorerTrainConfig& config) {
  ScorerEvaluation ev;
  ev.calibration.resize(kBins);
  for (std::size_t b = 0; b < kBins; ++b) {
    ev.calibration[b].lower = static_cast<double>(b) / kBins;
    ev.calibration[b].upper = static_cast<double>(b + 1) / kBins;
  }
  if (examples.empty()) return ev;
  std::vector<double> positives(kBins, 0.0);
  double loss = 0;
  std::size_t correct = 0;
  for (std::size_t begin = 0; begin < examples.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(examples.size(), begin + kEvalChunk);
    const auto batch = inputs_of(examples, begin, end);
    const auto logits = scorer.logits(std::span<const TokenSequence>(batch));
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const double z = logits[i];
      const double y = scorer_target(examples[begin + i], config);
      const double sp_pos = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
      loss += y * (sp_pos - z) + (1 - y) * sp_pos;  // softplus(-z) = softplus(z) - z
      const double p = 1.0 / (1.0 + std::exp(-z));
      if ((p >= 0.5 ? 1 : 0) == examples[begin + i].label) ++correct;
      const std::size_t bin = std::min(kBins - 1, static_cast<std::size_t>(p * kBins));
      auto& cb = ev.calibration[bin];
      ++cb.count;
      cb.mean_predicted += p;
      positives[bin] += examples[begin + i].label;
    }
  }
  for (std::size_t b = 0; b < kBins; ++b) {
    auto& cb = ev.calibration[b];
    if (cb.count > 0) {
      cb.mean_predicted /= static_cast<double>(cb.count);
      cb.positive_rate = positives[b] / static_cast<double>(cb.count);
    }
  }
  ev.loss = loss / static_cast<double>(examples.size());
  ev.accuracy = static_cast<double>(correct) / static_cast<double>(examples.size());
  return ev;
}

ScorerMetrics train_scorer(ScorerNet<float>& scorer, std::span<const LabeledExample> train,
                           std::span<const LabeledExample> validation,
                           const ScorerTrainConfig& config) {
  config.validate();
  if (train.empty()) throw TrainingError("scorer training set is empty");
  const auto positives = std::count_if(train.begin(), train.end(),
                                       [](const LabeledExample& e) { return e.label == 1; });
  if (positives == 0 || static_cast<std::size_t>(positives) == train.size())
    throw TrainingError("scorer training labels hold a single class; BCE would be degenerate");

  ScorerMetrics metrics;
  AdamW<float> opt(scorer.params(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng rng(derive_seed(config.seed, 0x5c0));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  Grad<float> grad(scorer.params().size());

  auto record = [&](std::size_t epoch) {
    metrics.train_loss.push_back(evaluate_scorer(scorer, train, config).loss);
    if (!validation.empty()) {
      const double v = evaluate_scorer(scorer, validation, config).loss;
      metrics.validation_loss.push_back(v);
      log::info("scorer epoch " + std::to_string(epoch) + ": train " +
                std::to_string(metrics.train_loss.back()) + " validation " + std::to_string(v));
    }
  };
  record(0);
  std::vector<float> best = scorer.params().values();
  double best_loss = validation.empty() ? 0.0 : metrics.validation_loss[0];

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      std::vector<TokenSequence> batch;
      std::vector<float> labels, weights;
      const float w = 1.0f / static_cast<float>(end - begin);
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(train[order[i]].input_tokens);
        labels.push_back(static_cast<float>(scorer_target(train[order[i]], config)));
        weights.push_back(w);
      }
      std::fill(grad.begin(), grad.end(), 0.0f);
      const float loss = scorer.bce(std::span<const TokenSequence>(batch), labels, weights, &grad);
      if (!std::isfinite(loss)) throw TrainingError("scorer loss became non-finite");
      opt.step(scorer.params(), grad);
    }
    record(epoch);
    if (!validation.empty() && metrics.validation_loss.back() < best_loss) {
      best_loss = metrics.validation_loss.back();
      best = scorer.params().values();
      metrics.best_epoch = epoch;
    }
  }
  if (validation.empty()) {
    metrics.best_epoch = config.epochs;
  } else {
    scorer.params().values() = best;
    const auto ev = evaluate_scorer(scorer, validation, config);
    metrics.validation_accuracy = ev.accuracy;
    metrics.calibration = ev.calibration;
  }
  return metrics;
}

double score_ids(const ScorerNet<float>& scorer, const Vocabulary& vocab, std::string_view keyword,
                 std::string_view tweet, std::span<const TokenId> reply, bool* truncated) {
  const TokenSequence seq =
      frame_for_scoring(vocab, keyword, tweet, reply, scorer.config().context_len, truncated);
  return scorer.score(seq);
}

double score_text(const ScorerNet<float>& scorer, const Vocabulary& vocab,
                  std::string_view keyword, std::string_view tweet, std::string_view reply,
                  bool* truncated) {
  const TokenSequence ids = encode(reply, vocab);
  return score_ids(scorer, vocab, keyword, tweet, ids, truncated);
}

}  // namespace enlg
