#include "enlg/eval.hpp"

#include <cmath>
#include <cstdio>

#include "enlg/errors.hpp"

namespace enlg {

namespace {

/// Running mean; exact when every sample is equal.
struct Mean {
  double value = 0;
  std::size_t count = 0;
  void add(double x) { value += (x - value) / static_cast<double>(++count); }
};

}  // namespace

double PromptScores::mean() const {
  Mean m;
  for (double s : scores) m.add(s);
  return m.value;
}

EvalDetail evaluate_policy(const PolicyNet<float>& policy, const Vocabulary& vocab,
                           std::span<const Prompt> prompts, const RewardFn& score,
                           std::size_t n_per_prompt, double temperature, std::uint64_t seed,
                           std::size_t max_reply_len) {
  if (prompts.empty()) throw ParameterError("evaluation needs at least one prompt");
  if (n_per_prompt == 0) throw ParameterError("n_per_prompt must be at least 1");
  if (!(temperature > 0)) throw ParameterError("temperature must be positive");
  std::vector<TokenSequence> framed;
  for (const auto& p : prompts) framed.push_back(frame_prompt(vocab, p.keyword, p.tweet));
  const auto replies =
      sample_replies(policy, framed, n_per_prompt, temperature, max_reply_len, seed);

  EvalDetail detail;
  detail.n_per_prompt = n_per_prompt;
  detail.temperature = temperature;
  detail.seed = seed;
  Mean total;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    PromptScores ps;
    char id[32];
    std::snprintf(id, sizeof id, "p%04zu", i);
    ps.prompt_id = id;
    ps.prompt = prompts[i];
    for (const auto& r : replies[i]) {
      ps.replies.push_back(decode(r, vocab));
      ps.scores.push_back(score(prompts[i], r));
      total.add(ps.scores.back());
    }
    detail.per_prompt.push_back(std::move(ps));
  }
  detail.mean = total.value;
  return detail;
}

double sign_test_p_value(std::size_t positive, std::size_t n) {
  if (n == 0) return 1.0;
  const std::size_t k = std::min(positive, n - positive);
  // P(X <= k) for X ~ Binomial(n, 1/2), summed in log space
  double tail = 0;
  for (std::size_t i = 0; i <= k; ++i) {
    const double log_term = std::lgamma(static_cast<double>(n) + 1) -
                            std::lgamma(static_cast<double>(i) + 1) -
                            std::lgamma(static_cast<double>(n - i) + 1) -
                            static_cast<double>(n) * std::log(2.0);
    tail += std::exp(log_term);
  }
  return std::min(1.0, 2.0 * tail);
}

EvalReport compare(const EvalDetail& baseline, const EvalDetail& rl) {
  if (baseline.per_prompt.size() != rl.per_prompt.size())
    throw ComparisonError("baseline has " + std::to_string(baseline.per_prompt.size()) +
                          " prompts, rl has " + std::to_string(rl.per_prompt.size()));
  EvalReport report;
  report.n_prompts = baseline.per_prompt.size();
  report.n_samples_per_prompt = baseline.n_per_prompt;
  report.seeds = {baseline.seed, rl.seed};
  Mean mean_b, mean_r;
  std::size_t positive = 0, nonzero = 0;
  for (std::size_t i = 0; i < report.n_prompts; ++i) {
    const auto& b = baseline.per_prompt[i];
    const auto& r = rl.per_prompt[i];
    if (b.prompt_id != r.prompt_id || !(b.prompt == r.prompt))
      throw ComparisonError("prompt " + std::to_string(i) + " differs between baseline and rl");
    if (b.scores.size() != r.scores.size())
      throw ComparisonError("prompt " + b.prompt_id + " has unequal sample counts");
    report.per_prompt.push_back({b.prompt_id, b.scores, r.scores});
    for (double s : b.scores) mean_b.add(s);
    for (double s : r.scores) mean_r.add(s);
    const double d = r.mean() - b.mean();
    if (d != 0.0) {
      ++nonzero;
      if (d > 0.0) ++positive;
    }
  }
  report.baseline_mean = mean_b.value;
  report.rl_mean = mean_r.value;
  report.relative_improvement =
      (report.rl_mean - report.baseline_mean) / std::max(report.baseline_mean, 1e-9);
  report.sign_test_p = sign_test_p_value(positive, nonzero);
  return report;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : per_prompt)
    rows.push_back({{"prompt_id", r.prompt_id}, {"baseline", r.baseline}, {"rl", r.rl}});
  return {{"baseline_mean", baseline_mean},
          {"rl_mean", rl_mean},
          {"relative_improvement", relative_improvement},
          {"n_prompts", n_prompts},
          {"n_samples_per_prompt", n_samples_per_prompt},
          {"sign_test_p", sign_test_p},
          {"prompt_set", prompt_set},
          {"seeds", seeds},
          {"per_prompt", rows}};
}

namespace {

std::string score_suffix(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, " (%.2f)", score);
  return buf;
}

void append_replies(std::string& out, std::span<const ScoredReply> replies) {
  for (std::size_t i = 0; i < replies.size(); ++i) {
    out += std::to_string(i + 1) + ". ";
    out += replies[i].reply.empty() ? "<empty>" : replies[i].reply;
    out += score_suffix(replies[i].score) + "\n";
  }
}

}  // namespace

std::string render_showcase(std::string_view keyword, std::string_view tweet,
                            std::span<const ScoredReply> replies) {
  if (replies.empty()) throw ParameterError("showcase needs at least one reply");
  std::string out = "Keyword: " + std::string(keyword) + "\n";
  out += "Article input: " + std::string(tweet) + "\n";
  append_replies(out, replies);
  return out;
}

std::string render_comparison(std::string_view keyword, std::string_view tweet,
                              std::span<const ScoredReply> baseline,
                              std::span<const ScoredReply> rl) {
  if (baseline.empty() || rl.empty()) throw ParameterError("comparison needs replies on both sides");
  auto mean = [](std::span<const ScoredReply> r) {
    double s = 0;
    for (const auto& x : r) s += x.score;
    return s / static_cast<double>(r.size());
  };
  std::string out = "(i) Keyword: " + std::string(keyword) + "\n";
  out += "(ii) Article input: " + std::string(tweet) + "\n";
  out += "(iii) Before RL:\n";
  append_replies(out, baseline);
  out += "(iv) After RL:\n";
  append_replies(out, rl);
  char buf[96];
  std::snprintf(buf, sizeof buf, "Mean score: %.2f -> %.2f\n", mean(baseline), mean(rl));
  out += buf;
  return out;
}

}  // namespace enlg
