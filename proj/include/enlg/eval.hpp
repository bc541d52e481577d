#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enlg/offline_rl.hpp"
#include "enlg/policy_training.hpp"

namespace enlg {

struct PromptScores {
  std::string prompt_id;
  Prompt prompt;
  std::vector<std::string> replies;
  std::vector<double> scores;
  double mean() const;
};

struct EvalDetail {
  std::vector<PromptScores> per_prompt;
  double mean = 0;
  std::size_t n_per_prompt = 0;
  double temperature = 1;
  std::uint64_t seed = 0;
};

/// Samples n_per_prompt replies per prompt and scores each with `score`. Prompt
/// ids are positional ("p0000", ...). Throws ParameterError for an empty
/// prompt set, n_per_prompt == 0 or temperature <= 0.
EvalDetail evaluate_policy(const PolicyNet<float>& policy, const Vocabulary& vocab,
                           std::span<const Prompt> prompts, const RewardFn& score,
                           std::size_t n_per_prompt, double temperature, std::uint64_t seed,
                           std::size_t max_reply_len);

struct EvalReport {
  double baseline_mean = 0;
  double rl_mean = 0;
  double relative_improvement = 0;
  std::size_t n_prompts = 0;
  std::size_t n_samples_per_prompt = 0;
  double sign_test_p = 1;
  struct Row {
    std::string prompt_id;
    std::vector<double> baseline, rl;
  };
  std::vector<Row> per_prompt;
  std::vector<std::uint64_t> seeds;
  std::string prompt_set = "test";

  nlohmann::json to_json() const;
};

/// Two-sided exact sign test: `positive` of `n` non-zero differences.
double sign_test_p_value(std::size_t positive, std::size_t n);

/// Throws ComparisonError when the prompt sets or sample counts differ.
EvalReport compare(const EvalDetail& baseline, const EvalDetail& rl);

/// Keyword line, article-input line, then "1. reply (0.97)" per reply.
/// Throws ParameterError for an empty reply list.
std::string render_showcase(std::string_view keyword, std::string_view tweet,
                            std::span<const ScoredReply> replies);

/// Side-by-side showcase of the same prompt before and after RL.
std::string render_comparison(std::string_view keyword, std::string_view tweet,
                              std::span<const ScoredReply> baseline,
                              std::span<const ScoredReply> rl);

}  // namespace enlg
