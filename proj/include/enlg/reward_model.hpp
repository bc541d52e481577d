#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enlg/corpus.hpp"
#include "enlg/models.hpp"
#include "enlg/tokenizer.hpp"

namespace enlg {

struct LabeledExample {
  TokenSequence input_tokens;  // BOS keyword SEP tweet SEP reply EOS
  int label = 0;
  std::int64_t reply_likes = 0;
  bool truncated = false;
};

/// Frames (keyword, tweet, reply) and, if the result exceeds `context_len`,
/// drops reply tokens from the right until it fits. Throws LengthError when the
/// prompt alone leaves no room for EOS. context_len 0 disables the limit.
TokenSequence frame_for_scoring(const Vocabulary& vocab, std::string_view keyword,
                                std::string_view tweet, std::span<const TokenId> reply,
                                std::size_t context_len, bool* truncated = nullptr);

/// label = 1 iff reply_likes >= like_threshold. Throws ParameterError for a
/// threshold below 1.
std::vector<LabeledExample> label_records(std::span<const ReplyRecord> records,
                                          const Vocabulary& vocab, std::int64_t like_threshold,
                                          std::size_t context_len = 0);

/// Classification fits the binary like label. LogLikes fits the soft target
/// min(1, log(1 + likes) / log(1 + log_likes_cap)) with the same BCE.
enum class ScorerObjective { Classification, LogLikes };

struct ScorerTrainConfig {
  ScorerObjective objective = ScorerObjective::Classification;
  std::int64_t log_likes_cap = 20;
  std::size_t epochs = 10;
  std::size_t batch = 16;
  double lr = 3e-5;
  double weight_decay = 0.01;
  std::int64_t like_threshold = 1;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::json to_json() const;
  static ScorerTrainConfig from_json(const nlohmann::json& j);
};

/// Training target of an example under the configured objective.
double scorer_target(const LabeledExample& ex, const ScorerTrainConfig& config);

struct CalibrationBin {
  double lower = 0, upper = 0;
  std::size_t count = 0;
  double mean_predicted = 0;
  double positive_rate = 0;
};

struct ScorerMetrics {
  std::vector<double> train_loss;       // index 0 is the untrained model, then one per epoch
  std::vector<double> validation_loss;  // same indexing
  double validation_accuracy = 0;
  std::size_t best_epoch = 0;
  std::vector<CalibrationBin> calibration;  // 10 equal-width bins over [0, 1]

  nlohmann::json to_json() const;
};

/// Mean BCE against the objective's targets, accuracy at 0.5 against the binary
/// label, and calibration of `scorer` on `examples`.
struct ScorerEvaluation {
  double loss = 0;
  double accuracy = 0;
  std::vector<CalibrationBin> calibration;
};
ScorerEvaluation evaluate_scorer(const ScorerNet<float>& scorer,
                                 std::span<const LabeledExample> examples,
                                 const ScorerTrainConfig& config = {});

/// Mini-batch BCE with AdamW. Keeps the parameters of the epoch with the lowest
/// validation loss (the untrained model counts as epoch 0); with no validation
/// examples the final epoch is kept. Throws TrainingError when the training set
/// is empty or holds a single class.
ScorerMetrics train_scorer(ScorerNet<float>& scorer, std::span<const LabeledExample> train,
                           std::span<const LabeledExample> validation,
                           const ScorerTrainConfig& config);

/// Like-score of a reply in (0, 1). Over-long inputs are truncated from the
/// right of the reply and flagged through `truncated`.
double score_text(const ScorerNet<float>& scorer, const Vocabulary& vocab,
                  std::string_view keyword, std::string_view tweet, std::string_view reply,
                  bool* truncated = nullptr);
double score_ids(const ScorerNet<float>& scorer, const Vocabulary& vocab, std::string_view keyword,
                 std::string_view tweet, std::span<const TokenId> reply, bool* truncated = nullptr);

}  // namespace enlg
