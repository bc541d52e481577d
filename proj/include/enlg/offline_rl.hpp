#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enlg/corpus.hpp"
#include "enlg/models.hpp"
#include "enlg/optim.hpp"
#include "enlg/policy_training.hpp"

namespace enlg {

/// One step of the token-level MDP. next_state is state with action appended;
/// reward is zero except on the EOS step of a reply.
struct Transition {
  TokenSequence state;
  TokenId action = special::kEos;
  double reward = 0;
  TokenSequence next_state;
  bool done = false;
  double episode_reward = 0;  // terminal reward of the reply this step belongs to
};

/// Reward of a reply (ids without EOS) in the given context, in [0, 1].
using RewardFn = std::function<double(const Prompt&, std::span<const TokenId>)>;

RewardFn oracle_reward(const Oracle& oracle);
RewardFn scorer_reward(const ScorerNet<float>& scorer, const Vocabulary& vocab);

/// Consecutive transitions of one reply inside a TransitionSet.
struct Episode {
  std::size_t first = 0;
  std::size_t count = 0;
};

struct TransitionSet {
  std::vector<Transition> transitions;
  std::vector<Episode> episodes;
  std::size_t replies = 0;
  std::size_t skipped_empty = 0;
  std::size_t skipped_long = 0;  // prompt leaves no room in the context
  std::size_t truncated = 0;
};

/// Appends the T = reply.size() + 1 steps of one reply (EOS last).
void append_reply(const TokenSequence& prompt, std::span<const TokenId> reply, double reward,
                  std::vector<Transition>& out);

/// Transitions for every record. Replies are cut to max_reply_len tokens (and
/// to what fits in context_len) with the cut counted in `truncated`; empty
/// replies are skipped and counted.
TransitionSet build_transitions(std::span<const ReplyRecord> records, const RewardFn& reward,
                                const Vocabulary& vocab, std::size_t max_reply_len,
                                std::size_t context_len);

/// |tau - 1[u < 0]| * u^2. Throws ParameterError unless 0 < tau < 1.
double expectile_loss(double u, double tau);
/// Mean over the batch.
double expectile_loss(std::span<const double> u, double tau);
/// argmin over m of the mean expectile loss of x - m, by reweighted averaging
/// (the fixed point converges in a finite number of steps). Throws
/// ParameterError on empty input.
double empirical_expectile(std::span<const double> x, double tau);

enum class SampleSource { Corpus, SelfGenerated, Mixed };
std::string_view sample_source_name(SampleSource s);
SampleSource parse_sample_source(std::string_view name);  // throws ConfigError

struct RLConfig {
  double lr_model = 1e-6;
  double lr_critic = 3e-4;
  std::size_t batch = 8;
  std::size_t updates = 5000;
  double temperature = 1.0;
  double gamma = 0.99;
  double tau = 0.7;
  double awr_beta = 100.0;
  double weight_clip = 100.0;
  double polyak = 0.995;
  SampleSource sample_source = SampleSource::Mixed;
  std::size_t self_gen_interval = 10;
  std::size_t self_gen_prompts = 32;
  std::size_t max_reply_len = 8;
  double weight_decay = 0.01;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  nlohmann::json to_json() const;
  /// Keys absent from `j` keep the defaults above.
  static RLConfig from_json(const nlohmann::json& j);
};

struct UpdateStats {
  std::size_t update = 0;
  double v_loss = 0;
  double q_loss = 0;
  double pi_loss = 0;
  double mean_advantage = 0;
  double mean_weight = 0;
  double mean_batch_reward = 0;

  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Loss pieces, exposed for gradient checks. Every critic quantity for (s, a)
// is read at the last row of s inside a forward over next_state; V(s') is the
// row after it. Transitions whose next_state is a prefix of another's in the
// same batch share one forward.

/// min(targetQ1, targetQ2)(s, a) and V(s) for each transition.
template <class T>
struct CriticReadout {
  std::vector<T> v_state;
  std::vector<T> min_target_q;
  std::vector<T> v_next;
};

/// Mean expectile loss of min target Q minus V. Accumulates V-head and trunk
/// gradients when `grad` is given.
template <class T>
T value_loss(const CriticBundle<T>& critic, std::span<const Transition> batch, double tau,
             Grad<T>* grad, CriticReadout<T>* readout = nullptr);

/// r + gamma (1 - done) V(s') from the current critic.
template <class T>
std::vector<T> td_targets(const CriticBundle<T>& critic, std::span<const Transition> batch,
                          double gamma);

/// Mean over the batch and both heads of (y - Q_i(s, a))^2 for fixed targets y.
/// With `targets` empty, y is computed from the same forward pass (held
/// constant for the gradient).
template <class T>
T q_loss(const CriticBundle<T>& critic, std::span<const Transition> batch,
         std::span<const T> targets, double gamma, Grad<T>* grad,
         CriticReadout<T>* readout = nullptr);

/// Mean of w_i * -log pi(a_i | s_i) with constant weights.
template <class T>
T policy_loss(const PolicyNet<T>& policy, std::span<const Transition> batch,
              std::span<const T> weights, Grad<T>* grad);

/// min(exp(beta * advantage), clip)
double awr_weight(double advantage, double beta, double clip);

/// Owns the two AdamW optimizers and performs one ordered IQL update:
/// V step, Q step, policy step, Polyak.
class IqlLearner {
 public:
  IqlLearner(PolicyNet<float>& policy, CriticBundle<float>& critics, const RLConfig& config);

  /// `pool_indices` only feeds the diagnostic raised on a non-finite loss.
  UpdateStats update(std::span<const Transition> batch,
                     std::span<const std::size_t> pool_indices = {});

 private:
  PolicyNet<float>& policy_;
  CriticBundle<float>& critics_;
  RLConfig config_;
  AdamW<float> policy_opt_;
  AdamW<float> critic_opt_;
  std::vector<std::size_t> value_slots_, q_slots_;
  Grad<float> policy_grad_, critic_grad_;
  std::size_t updates_ = 0;
};

/// Samples one reply per prompt at the configured temperature, rewards it and
/// converts it with the build_transitions rule.
TransitionSet self_generate_batch(const PolicyNet<float>& policy, std::span<const Prompt> prompts,
                                  const RewardFn& reward, const Vocabulary& vocab,
                                  const RLConfig& config, std::uint64_t seed);

struct RLSinks {
  std::string curve_csv;    // update,reward
  std::string stats_jsonl;  // one UpdateStats object per line
};

struct RLResult {
  std::vector<double> reward_curve;  // mean episode reward of each update's batch
  std::vector<UpdateStats> stats;
  std::size_t corpus_transitions = 0;
  std::size_t self_generated_transitions = 0;
  bool policy_looked_untrained = false;

  nlohmann::json summary() const;
};

/// Runs config.updates IQL updates. A batch is config.batch replies drawn with
/// replacement, each contributing all of its transitions. In self_generated and
/// mixed modes the self-generated pool is replaced every self_gen_interval
/// updates; mixed draws each reply from the corpus or the self-generated pool
/// with equal probability. The curve value is the batch's mean terminal reward.
/// Throws TrainingError on an empty pool.
RLResult train_rl(PolicyNet<float>& policy, CriticBundle<float>& critics,
                  const TransitionSet& corpus, std::span<const Prompt> prompts,
                  const RewardFn& reward, const Vocabulary& vocab, const RLConfig& config,
                  const RLSinks& sinks = {});

RLResult train_rl(PolicyNet<float>& policy, CriticBundle<float>& critics, const CorpusSplit& split,
                  const RewardFn& reward, const Vocabulary& vocab, const RLConfig& config,
                  const RLSinks& sinks = {});

}  // namespace enlg
