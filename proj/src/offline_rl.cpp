#include "enlg/offline_rl.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "enlg/errors.hpp"
#include "enlg/log.hpp"
#include "enlg/reward_model.hpp"

namespace enlg {

RewardFn oracle_reward(const Oracle& oracle) {
  return [&oracle](const Prompt& p, std::span<const TokenId> reply) {
    return oracle.score(reply, p.keyword);
  };
}

RewardFn scorer_reward(const ScorerNet<float>& scorer, const Vocabulary& vocab) {
  return [&scorer, &vocab](const Prompt& p, std::span<const TokenId> reply) {
    return score_ids(scorer, vocab, p.keyword, p.tweet, reply);
  };
}

void append_reply(const TokenSequence& prompt, std::span<const TokenId> reply, double reward,
                  std::vector<Transition>& out) {
  TokenSequence state = prompt;
  for (std::size_t t = 0; t <= reply.size(); ++t) {
    Transition tr;
    tr.state = state;
    tr.action = t < reply.size() ? reply[t] : special::kEos;
    tr.next_state = state;
    tr.next_state.push_back(tr.action);
    tr.done = t == reply.size();
    tr.reward = tr.done ? reward : 0.0;
    tr.episode_reward = reward;
    state = tr.next_state;
    out.push_back(std::move(tr));
  }
}

TransitionSet build_transitions(std::span<const ReplyRecord> records, const RewardFn& reward,
                                const Vocabulary& vocab, std::size_t max_reply_len,
                                std::size_t context_len) {
  TransitionSet set;
  for (const auto& r : records) {
    TokenSequence reply = encode(r.reply, vocab);
    if (reply.empty()) {
      ++set.skipped_empty;
      continue;
    }
    const TokenSequence prompt = frame_prompt(vocab, r.keyword, r.main_tweet);
    if (prompt.size() + 1 > context_len) {
      ++set.skipped_long;
      continue;
    }
    const std::size_t limit = std::min(max_reply_len, context_len - prompt.size() - 1);
    if (reply.size() > limit) {
      reply.resize(limit);
      ++set.truncated;
    }
    const double rw = reward({r.keyword, r.main_tweet}, reply);
    if (!(rw >= 0.0 && rw <= 1.0))
      throw RangeError("reward " + std::to_string(rw) + " outside [0, 1]");
    set.episodes.push_back({set.transitions.size(), reply.size() + 1});
    append_reply(prompt, reply, rw, set.transitions);
    ++set.replies;
  }
  return set;
}

double expectile_loss(double u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("expectile tau must lie in (0, 1)");
  return (u < 0.0 ? 1.0 - tau : tau) * u * u;
}

double expectile_loss(std::span<const double> u, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("expectile tau must lie in (0, 1)");
  if (u.empty()) return 0.0;
  double sum = 0;
  for (double x : u) sum += expectile_loss(x, tau);
  return sum / static_cast<double>(u.size());
}

double empirical_expectile(std::span<const double> x, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("expectile tau must lie in (0, 1)");
  if (x.empty()) throw ParameterError("expectile of an empty sample");
  double m = 0;
  for (double v : x) m += v / static_cast<double>(x.size());
  for (int it = 0; it < 1000; ++it) {
    double num = 0, den = 0;
    for (double v : x) {
      const double w = v > m ? tau : 1.0 - tau;
      num += w * v;
      den += w;
    }
    const double next = num / den;
    if (next == m) break;
    m = next;
  }
  return m;
}

std::string_view sample_source_name(SampleSource s) {
  switch (s) {
    case SampleSource::Corpus: return "corpus";
    case SampleSource::SelfGenerated: return "self_generated";
    case SampleSource::Mixed: return "mixed";
  }
  return "mixed";
}

SampleSource parse_sample_source(std::string_view name) {
  if (name == "corpus") return SampleSource::Corpus;
  if (name == "self_generated") return SampleSource::SelfGenerated;
  if (name == "mixed") return SampleSource::Mixed;
  throw ConfigError("sample_source must be corpus, self_generated or mixed, not '" +
                    std::string(name) + "'");
}

void RLConfig::validate() const {
  if (!(lr_model > 0) || !(lr_critic > 0)) throw ConfigError("learning rates must be positive");
  if (batch == 0) throw ConfigError("batch must be positive");
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (!(gamma > 0 && gamma <= 1)) throw ConfigError("gamma must lie in (0, 1]");
  if (!(tau > 0 && tau < 1)) throw ConfigError("tau must lie in (0, 1)");
  if (!(awr_beta > 0)) throw ConfigError("awr_beta must be positive");
  if (!(weight_clip > 0)) throw ConfigError("weight_clip must be positive");
  if (!(polyak >= 0 && polyak < 1)) throw ConfigError("polyak must lie in [0, 1)");
  if (self_gen_interval == 0) throw ConfigError("self_gen_interval must be positive");
  if (self_gen_prompts == 0) throw ConfigError("self_gen_prompts must be positive");
  if (max_reply_len == 0) throw ConfigError("max_reply_len must be positive");
  if (weight_decay < 0) throw ConfigError("weight_decay must be non-negative");
}

nlohmann::json RLConfig::to_json() const {
  return {{"lr_model", lr_model},
          {"lr_critic", lr_critic},
          {"batch", batch},
          {"updates", updates},
          {"temperature", temperature},
          {"gamma", gamma},
          {"tau", tau},
          {"awr_beta", awr_beta},
          {"weight_clip", weight_clip},
          {"polyak", polyak},
          {"sample_source", sample_source_name(sample_source)},
          {"self_gen_interval", self_gen_interval},
          {"self_gen_prompts", self_gen_prompts},
          {"max_reply_len", max_reply_len},
          {"weight_decay", weight_decay},
          {"seed", seed}};
}

RLConfig RLConfig::from_json(const nlohmann::json& j) {
  RLConfig c;
  c.lr_model = j.value("lr_model", c.lr_model);
  c.lr_critic = j.value("lr_critic", c.lr_critic);
  c.batch = j.value("batch", c.batch);
  c.updates = j.value("updates", c.updates);
  c.temperature = j.value("temperature", c.temperature);
  c.gamma = j.value("gamma", c.gamma);
  c.tau = j.value("tau", c.tau);
  c.awr_beta = j.value("awr_beta", c.awr_beta);
  c.weight_clip = j.value("weight_clip", c.weight_clip);
  c.polyak = j.value("polyak", c.polyak);
  if (j.contains("sample_source"))
    c.sample_source = parse_sample_source(j.at("sample_source").get<std::string>());
  c.self_gen_interval = j.value("self_gen_interval", c.self_gen_interval);
  c.self_gen_prompts = j.value("self_gen_prompts", c.self_gen_prompts);
  c.max_reply_len = j.value("max_reply_len", c.max_reply_len);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  return c;
}

nlohmann::json UpdateStats::to_json() const {
  return {{"update", update},
          {"v_loss", v_loss},
          {"q_loss", q_loss},
          {"pi_loss", pi_loss},
          {"mean_advantage", mean_advantage},
          {"mean_weight", mean_weight},
          {"mean_batch_reward", mean_batch_reward}};
}

// ---------------------------------------------------------------------------

namespace {

template <class T>
using Pass = typename CriticBundle<T>::Pass;
template <class T>
using Head = typename CriticBundle<T>::Head;

/// Transitions whose next_state is a prefix of another's share that longer
/// sequence (a carrier): causal rows of the carrier equal those of the prefix.
struct Packing {
  std::vector<TokenSequence> carriers;
  std::vector<std::size_t> carrier;  // per transition
};

Packing pack_next_states(std::span<const Transition> batch) {
  std::vector<std::size_t> order(batch.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return batch[a].next_state.size() > batch[b].next_state.size();
  });
  Packing p;
  p.carrier.resize(batch.size());
  for (std::size_t i : order) {
    const auto& s = batch[i].next_state;
    std::size_t c = 0;
    for (; c < p.carriers.size(); ++c)
      if (std::equal(s.begin(), s.end(), p.carriers[c].begin())) break;
    if (c == p.carriers.size()) p.carriers.push_back(s);
    p.carrier[i] = c;
  }
  return p;
}

template <class T>
Packing forward_next_states(const CriticBundle<T>& critic, std::span<const Transition> batch,
                            Pass<T>& pass) {
  Packing p = pack_next_states(batch);
  critic.forward(std::span<const TokenSequence>(p.carriers), pass);
  return p;
}

/// Row of the last state token (where (s, a) quantities are read).
template <class T>
std::size_t state_row(const TrunkCache<T>& trunk, const Packing& p,
                      std::span<const Transition> batch, std::size_t i) {
  return trunk.row(p.carrier[i], batch[i].state.size() - 1);
}

template <class T>
void read_out(const CriticBundle<T>& critic, std::span<const Transition> batch,
              const Pass<T>& pass, const Packing& p, CriticReadout<T>& out) {
  const std::size_t n = batch.size();
  out.v_state.resize(n);
  out.min_target_q.resize(n);
  out.v_next.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row = state_row(pass.trunk, p, batch, i);
    out.v_state[i] = critic.value(pass, row);
    out.min_target_q[i] = std::min(critic.target_q(pass, row, Head<T>::Q1, batch[i].action),
                                   critic.target_q(pass, row, Head<T>::Q2, batch[i].action));
    out.v_next[i] = batch[i].done ? T(0) : critic.value(pass, row + 1);
  }
}

}  // namespace

template <class T>
T value_loss(const CriticBundle<T>& critic, std::span<const Transition> batch, double tau,
             Grad<T>* grad, CriticReadout<T>* readout) {
  if (!(tau > 0.0 && tau < 1.0)) throw ParameterError("expectile tau must lie in (0, 1)");
  Pass<T> pass;
  const Packing p = forward_next_states(critic, batch, pass);
  CriticReadout<T> local;
  CriticReadout<T>& ro = readout != nullptr ? *readout : local;
  read_out(critic, batch, pass, p, ro);
  const T n = static_cast<T>(batch.size());
  T loss = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const T u = ro.min_target_q[i] - ro.v_state[i];
    const T w = static_cast<T>(u < T(0) ? 1.0 - tau : tau);
    loss += w * u * u / n;
    if (grad != nullptr)
      critic.backward_value(pass, state_row(pass.trunk, p, batch, i), T(-2) * w * u / n, *grad);
  }
  if (grad != nullptr) critic.finish_backward(pass, *grad);
  return loss;
}

template <class T>
std::vector<T> td_targets(const CriticBundle<T>& critic, std::span<const Transition> batch,
                          double gamma) {
  Pass<T> pass;
  const Packing p = forward_next_states(critic, batch, pass);
  CriticReadout<T> ro;
  read_out(critic, batch, pass, p, ro);
  std::vector<T> y(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    y[i] = static_cast<T>(batch[i].reward) +
           static_cast<T>(gamma) * (batch[i].done ? T(0) : ro.v_next[i]);
  return y;
}

template <class T>
T q_loss(const CriticBundle<T>& critic, std::span<const Transition> batch,
         std::span<const T> targets, double gamma, Grad<T>* grad, CriticReadout<T>* readout) {
  if (!targets.empty() && targets.size() != batch.size())
    throw RangeError("td targets must match the batch size");
  Pass<T> pass;
  const Packing p = forward_next_states(critic, batch, pass);
  CriticReadout<T> local;
  CriticReadout<T>& ro = readout != nullptr ? *readout : local;
  read_out(critic, batch, pass, p, ro);
  const T n = static_cast<T>(batch.size());
  T loss = 0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const T y = !targets.empty() ? targets[i]
                                 : static_cast<T>(batch[i].reward) +
                                       static_cast<T>(gamma) * (batch[i].done ? T(0) : ro.v_next[i]);
    const std::size_t row = state_row(pass.trunk, p, batch, i);
    for (auto head : {Head<T>::Q1, Head<T>::Q2}) {
      const T diff = critic.q(pass, row, head, batch[i].action) - y;
      loss += diff * diff / (T(2) * n);
      if (grad != nullptr) critic.backward_q(pass, row, head, batch[i].action, diff / n, *grad);
    }
  }
  if (grad != nullptr) critic.finish_backward(pass, *grad);
  return loss;
}

template <class T>
T policy_loss(const PolicyNet<T>& policy, std::span<const Transition> batch,
              std::span<const T> weights, Grad<T>* grad) {
  if (weights.size() != batch.size()) throw RangeError("weights must match the batch size");
  const Packing p = pack_next_states(batch);
  std::vector<typename PolicyNet<T>::Target> targets;
  const T n = static_cast<T>(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    targets.push_back({batch[i].state.size() - 1, batch[i].action, weights[i] / n, p.carrier[i]});
  return policy.nll(std::span<const TokenSequence>(p.carriers), targets, grad);
}

double awr_weight(double advantage, double beta, double clip) {
  return std::min(std::exp(beta * advantage), clip);
}

template float value_loss(const CriticBundle<float>&, std::span<const Transition>, double,
                          Grad<float>*, CriticReadout<float>*);
template double value_loss(const CriticBundle<double>&, std::span<const Transition>, double,
                           Grad<double>*, CriticReadout<double>*);
template std::vector<float> td_targets(const CriticBundle<float>&, std::span<const Transition>,
                                       double);
template std::vector<double> td_targets(const CriticBundle<double>&, std::span<const Transition>,
                                        double);
template float q_loss(const CriticBundle<float>&, std::span<const Transition>,
                      std::span<const float>, double, Grad<float>*, CriticReadout<float>*);
template double q_loss(const CriticBundle<double>&, std::span<const Transition>,
                       std::span<const double>, double, Grad<double>*, CriticReadout<double>*);
template float policy_loss(const PolicyNet<float>&, std::span<const Transition>,
                           std::span<const float>, Grad<float>*);
template double policy_loss(const PolicyNet<double>&, std::span<const Transition>,
                            std::span<const double>, Grad<double>*);

// ---------------------------------------------------------------------------

IqlLearner::IqlLearner(PolicyNet<float>& policy, CriticBundle<float>& critics,
                       const RLConfig& config)
    : policy_(policy),
      critics_(critics),
      config_(config),
      policy_opt_(policy.params(), {config.lr_model, 0.9, 0.999, 1e-8, config.weight_decay}),
      critic_opt_(critics.params(), {config.lr_critic, 0.9, 0.999, 1e-8, config.weight_decay}),
      value_slots_(critics.value_slots()),
      q_slots_(critics.q_slots()),
      policy_grad_(policy.params().size()),
      critic_grad_(critics.params().size()) {
  config_.validate();
}

UpdateStats IqlLearner::update(std::span<const Transition> batch,
                               std::span<const std::size_t> pool_indices) {
  if (batch.empty()) throw TrainingError("iql update needs a non-empty batch");
  UpdateStats st;
  st.update = updates_++;
  auto check = [&](double v, const char* what) {
    if (std::isfinite(v)) return;
    std::ostringstream msg;
    msg << what << " is non-finite at update " << st.update << "; batch pool indices:";
    for (auto i : pool_indices) msg << ' ' << i;
    throw TrainingError(msg.str());
  };

  // 1. V step
  std::fill(critic_grad_.begin(), critic_grad_.end(), 0.0f);
  st.v_loss = value_loss(critics_, batch, config_.tau, &critic_grad_);
  check(st.v_loss, "v_loss");
  critic_opt_.step(critics_.params(), critic_grad_, value_slots_);

  // 2. Q step; V(s') and the advantage inputs come from this same forward.
  std::fill(critic_grad_.begin(), critic_grad_.end(), 0.0f);
  CriticReadout<float> ro;
  st.q_loss = q_loss(critics_, batch, std::span<const float>{}, config_.gamma, &critic_grad_, &ro);
  check(st.q_loss, "q_loss");
  critic_opt_.step(critics_.params(), critic_grad_, q_slots_);

  // 3. Policy step with constant AWR weights
  std::vector<float> weights(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const double adv = static_cast<double>(ro.min_target_q[i]) - ro.v_state[i];
    weights[i] = static_cast<float>(awr_weight(adv, config_.awr_beta, config_.weight_clip));
    st.mean_advantage += adv / static_cast<double>(batch.size());
    st.mean_weight += weights[i] / static_cast<double>(batch.size());
  }
  std::fill(policy_grad_.begin(), policy_grad_.end(), 0.0f);
  st.pi_loss = policy_loss(policy_, batch, std::span<const float>(weights), &policy_grad_);
  check(st.pi_loss, "pi_loss");
  policy_opt_.step(policy_.params(), policy_grad_);

  // 4. Polyak
  critics_.polyak(config_.polyak);

  std::size_t terminals = 0;
  for (const auto& tr : batch)
    if (tr.done) st.mean_batch_reward += tr.reward, ++terminals;
  if (terminals > 0) {
    st.mean_batch_reward /= static_cast<double>(terminals);
  } else {
    for (const auto& tr : batch) st.mean_batch_reward += tr.episode_reward;
    st.mean_batch_reward /= static_cast<double>(batch.size());
  }
  return st;
}

// ---------------------------------------------------------------------------

TransitionSet self_generate_batch(const PolicyNet<float>& policy, std::span<const Prompt> prompts,
                                  const RewardFn& reward, const Vocabulary& vocab,
                                  const RLConfig& config, std::uint64_t seed) {
  std::vector<TokenSequence> framed;
  for (const auto& p : prompts) framed.push_back(frame_prompt(vocab, p.keyword, p.tweet));
  const std::size_t ctx = policy.config().context_len;
  for (const auto& f : framed)
    if (f.size() + 1 > ctx) throw LengthError("prompt does not fit the policy context");
  const auto replies = sample_replies(policy, framed, 1, config.temperature,
                                      config.max_reply_len, seed);
  TransitionSet set;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    TokenSequence reply = replies[i][0];
    // EOS must still fit after the reply
    if (framed[i].size() + reply.size() + 1 > ctx) {
      reply.resize(ctx - framed[i].size() - 1);
      ++set.truncated;
    }
    const double rw = reward(prompts[i], reply);
    if (!(rw >= 0.0 && rw <= 1.0))
      throw RangeError("reward " + std::to_string(rw) + " outside [0, 1]");
    set.episodes.push_back({set.transitions.size(), reply.size() + 1});
    append_reply(framed[i], reply, rw, set.transitions);
    ++set.replies;
  }
  return set;
}

nlohmann::json RLResult::summary() const {
  auto decile_mean = [&](bool last) {
    const std::size_t n = reward_curve.size();
    const std::size_t k = std::max<std::size_t>(1, n / 10);
    if (n == 0) return 0.0;
    double s = 0;
    for (std::size_t i = 0; i < k; ++i) s += reward_curve[last ? n - k + i : i];
    return s / static_cast<double>(k);
  };
  return {{"updates", reward_curve.size()},
          {"corpus_transitions", corpus_transitions},
          {"self_generated_transitions", self_generated_transitions},
          {"first_decile_reward", decile_mean(false)},
          {"last_decile_reward", decile_mean(true)},
          {"policy_looked_untrained", policy_looked_untrained}};
}

namespace {

/// Mean per-step NLL close to ln V means the policy is still uniform-ish.
bool looks_untrained(const PolicyNet<float>& policy, std::span<const Transition> sample) {
  if (sample.empty()) return false;
  std::vector<float> ones(sample.size(), 1.0f);
  const double nll = policy_loss<float>(policy, sample, std::span<const float>(ones), nullptr);
  const double uniform = std::log(static_cast<double>(policy.config().vocab_size));
  return std::abs(nll - uniform) <= 0.05 * uniform;
}

}  // namespace

RLResult train_rl(PolicyNet<float>& policy, CriticBundle<float>& critics,
                  const TransitionSet& corpus, std::span<const Prompt> prompts,
                  const RewardFn& reward, const Vocabulary& vocab, const RLConfig& config,
                  const RLSinks& sinks) {
  config.validate();
  const bool use_corpus = config.sample_source != SampleSource::SelfGenerated;
  const bool use_self = config.sample_source != SampleSource::Corpus;
  if (use_corpus && corpus.episodes.empty())
    throw TrainingError("transition pool is empty: no usable corpus replies");
  if (use_self && prompts.empty())
    throw TrainingError("transition pool is empty: no prompts to self-generate from");

  RLResult result;
  result.corpus_transitions = use_corpus ? corpus.transitions.size() : 0;
  {
    const std::size_t n = std::min<std::size_t>(64, corpus.transitions.size());
    result.policy_looked_untrained = looks_untrained(
        policy, std::span<const Transition>(corpus.transitions.data(), n));
    if (result.policy_looked_untrained)
      log::warn("policy looks untrained (NLL near ln V); RL is meant to start from a BC policy");
  }

  std::ofstream curve_out, stats_out;
  if (!sinks.curve_csv.empty()) {
    curve_out.open(sinks.curve_csv);
    if (!curve_out) throw IoError("cannot write " + sinks.curve_csv);
    curve_out << "update,reward\n";
  }
  if (!sinks.stats_jsonl.empty()) {
    stats_out.open(sinks.stats_jsonl);
    if (!stats_out) throw IoError("cannot write " + sinks.stats_jsonl);
  }

  IqlLearner learner(policy, critics, config);
  Rng rng(derive_seed(config.seed, 0x1a1));
  TransitionSet self_pool;
  std::vector<Transition> batch;
  std::vector<std::size_t> indices;
  result.reward_curve.reserve(config.updates);
  for (std::size_t u = 0; u < config.updates; ++u) {
    if (use_self && u % config.self_gen_interval == 0) {
      std::vector<Prompt> chosen;
      for (std::size_t i = 0; i < config.self_gen_prompts; ++i)
        chosen.push_back(prompts[rng.index(prompts.size())]);
      self_pool = self_generate_batch(policy, chosen, reward, vocab, config,
                                      derive_seed(config.seed, 0x5e1f0000 + u));
      result.self_generated_transitions += self_pool.transitions.size();
    }
    batch.clear();
    indices.clear();
    for (std::size_t b = 0; b < config.batch; ++b) {
      bool from_self = !use_corpus;
      if (use_corpus && use_self) from_self = rng.uniform() < 0.5;
      const auto& pool = from_self ? self_pool : corpus;
      const auto& ep = pool.episodes[rng.index(pool.episodes.size())];
      for (std::size_t t = ep.first; t < ep.first + ep.count; ++t) {
        batch.push_back(pool.transitions[t]);
        // self-generated indices are offset past the corpus in diagnostics
        indices.push_back(from_self ? corpus.transitions.size() + t : t);
      }
    }
    const UpdateStats st = learner.update(batch, indices);
    result.reward_curve.push_back(st.mean_batch_reward);
    result.stats.push_back(st);
    if (curve_out.is_open()) curve_out << u << ',' << st.mean_batch_reward << '\n';
    if (stats_out.is_open()) stats_out << st.to_json().dump() << '\n';
    if ((u + 1) % 500 == 0)
      log::info("rl update " + std::to_string(u + 1) + ": batch reward " +
                std::to_string(st.mean_batch_reward) + " v_loss " + std::to_string(st.v_loss) +
                " q_loss " + std::to_string(st.q_loss));
  }
  return result;
}

RLResult train_rl(PolicyNet<float>& policy, CriticBundle<float>& critics, const CorpusSplit& split,
                  const RewardFn& reward, const Vocabulary& vocab, const RLConfig& config,
                  const RLSinks& sinks) {
  config.validate();
  const TransitionSet corpus = build_transitions(split.train, reward, vocab, config.max_reply_len,
                                                 policy.config().context_len);
  if (corpus.skipped_empty > 0)
    log::info(std::to_string(corpus.skipped_empty) + " empty replies skipped");
  if (corpus.truncated > 0)
    log::info(std::to_string(corpus.truncated) + " replies truncated to max_reply_len");
  const auto prompts = prompts_of(split.train);
  return train_rl(policy, critics, corpus, prompts, reward, vocab, config, sinks);
}

}  // namespace enlg
