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

/// A (keyword, tweet) context that replies are generated for.
struct Prompt {
  std::string keyword;
  std::string tweet;
  bool operator==(const Prompt&) const = default;
};

/// Distinct prompts of a record list in first-seen order.
std::vector<Prompt> prompts_of(std::span<const ReplyRecord> records);

struct BCConfig {
  std::size_t epochs = 3;
  std::size_t batch = 16;
  double lr = 3e-4;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;
  std::size_t max_reply_len = 8;

  void validate() const;
  nlohmann::json to_json() const;
  static BCConfig from_json(const nlohmann::json& j);
};

/// One behaviour-cloning example: the framed sequence and where the reply starts.
struct BCExample {
  TokenSequence tokens;      // prompt, reply tokens, EOS
  std::size_t prompt_len = 0;
  bool truncated = false;
};

/// Frames records for BC. Replies longer than max_reply_len are cut (flagged)
/// and still end in EOS; replies that tokenize to nothing are skipped. Records
/// whose prompt does not fit `context_len` are skipped too.
struct BCData {
  std::vector<BCExample> examples;
  std::size_t skipped_empty = 0;
  std::size_t skipped_long = 0;
  std::size_t truncated = 0;
};
BCData make_bc_data(std::span<const ReplyRecord> records, const Vocabulary& vocab,
                    std::size_t max_reply_len, std::size_t context_len);

/// Targets predicting every reply token and the final EOS, weight `weight` each.
std::vector<PolicyNet<float>::Target> reply_targets(const BCExample& ex, std::size_t sequence,
                                                    float weight);

/// Mean per-token reply NLL.
double bc_loss(const PolicyNet<float>& policy, std::span<const BCExample> examples);

struct BCStats {
  std::vector<double> train_loss;       // per-token, index 0 before training
  std::vector<double> validation_loss;  // same indexing; empty without validation data
  std::size_t skipped_empty = 0;
  std::size_t truncated = 0;

  nlohmann::json to_json() const;
};

/// Next-token cross-entropy on reply positions only. Throws TrainingError if
/// no train record has a non-empty reply.
BCStats train_bc(PolicyNet<float>& policy, const CorpusSplit& split, const Vocabulary& vocab,
                 const BCConfig& config);

// ---------------------------------------------------------------------------
// Sampling

struct GenerationRequest {
  std::string keyword;
  std::string tweet;
  std::size_t n_samples = 1;
  double temperature = 1.0;
  std::size_t max_reply_len = 8;
  std::uint64_t seed = 0;
};

/// Temperatures below this decode greedily: the T -> 0 limit of sampling, with
/// ties going to the lowest token id.
inline constexpr double kGreedyTemperature = 1e-4;

/// Sets PAD, BOS, SEP and UNK to -inf so they are never emitted.
void mask_structural(std::span<float> logits);

/// Draws one token from softmax(logits / temperature) by inverse CDF over ids
/// in increasing order. Throws ParameterError for temperature <= 0.
TokenId sample_token(std::span<const float> logits, double temperature, Rng& rng);

/// Reply ids (without EOS) for several prompts at once. Sample j of prompt i
/// draws from its own stream derive_seed(derive_seed(seed, i), j), so results
/// do not depend on how work is batched.
std::vector<std::vector<TokenSequence>> sample_replies(const PolicyNet<float>& policy,
                                                       std::span<const TokenSequence> prompts,
                                                       std::size_t n_per_prompt,
                                                       double temperature,
                                                       std::size_t max_reply_len,
                                                       std::uint64_t seed);

/// Replies as text. `request_index` selects the stream when serving several
/// requests from one seed.
std::vector<std::string> generate(const PolicyNet<float>& policy, const Vocabulary& vocab,
                                  const GenerationRequest& request,
                                  std::uint64_t request_index = 0);

struct ScoredReply {
  std::string reply;
  double score = 0;
};

/// Scores each reply and sorts descending; ties keep generation order.
std::vector<ScoredReply> rank_replies(std::span<const std::string> replies,
                                      const ScorerNet<float>& scorer, const Vocabulary& vocab,
                                      std::string_view keyword, std::string_view tweet);
std::vector<ScoredReply> rank_scored(std::vector<ScoredReply> scored);

}  // namespace enlg
