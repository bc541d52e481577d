#include "enlg/policy_training.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "enlg/errors.hpp"
#include "enlg/log.hpp"
#include "enlg/optim.hpp"
#include "enlg/reward_model.hpp"

namespace enlg {

std::vector<Prompt> prompts_of(std::span<const ReplyRecord> records) {
  std::vector<Prompt> out;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& r : records)
    if (seen.emplace(r.keyword, r.main_tweet).second) out.push_back({r.keyword, r.main_tweet});
  return out;
}

void BCConfig::validate() const {
  if (epochs == 0) throw ConfigError("bc epochs must be positive");
  if (batch == 0) throw ConfigError("bc batch must be positive");
  if (!(lr > 0)) throw ConfigError("bc lr must be positive");
  if (weight_decay < 0) throw ConfigError("bc weight_decay must be non-negative");
  if (max_reply_len == 0) throw ConfigError("max_reply_len must be positive");
}

nlohmann::json BCConfig::to_json() const {
  return {{"epochs", epochs}, {"batch", batch}, {"lr", lr}, {"weight_decay", weight_decay},
          {"seed", seed},     {"max_reply_len", max_reply_len}};
}

BCConfig BCConfig::from_json(const nlohmann::json& j) {
  BCConfig c;
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.seed = j.value("seed", c.seed);
  c.max_reply_len = j.value("max_reply_len", c.max_reply_len);
  return c;
}

nlohmann::json BCStats::to_json() const {
  return {{"train_loss", train_loss},
          {"validation_loss", validation_loss},
          {"skipped_empty", skipped_empty},
          {"truncated", truncated}};
}

BCData make_bc_data(std::span<const ReplyRecord> records, const Vocabulary& vocab,
                    std::size_t max_reply_len, std::size_t context_len) {
  BCData data;
  for (const auto& r : records) {
    TokenSequence reply = encode(r.reply, vocab);
    if (reply.empty()) {
      ++data.skipped_empty;
      continue;
    }
    TokenSequence prompt = frame_prompt(vocab, r.keyword, r.main_tweet);
    if (prompt.size() + 2 > context_len) {
      ++data.skipped_long;
      continue;
    }
    const std::size_t limit = std::min(max_reply_len, context_len - prompt.size() - 1);
    BCExample ex;
    ex.truncated = reply.size() > limit;
    if (ex.truncated) {
      reply.resize(limit);
      ++data.truncated;
    }
    ex.prompt_len = prompt.size();
    ex.tokens = std::move(prompt);
    ex.tokens.insert(ex.tokens.end(), reply.begin(), reply.end());
    ex.tokens.push_back(special::kEos);
    data.examples.push_back(std::move(ex));
  }
  return data;
}

std::vector<PolicyNet<float>::Target> reply_targets(const BCExample& ex, std::size_t sequence,
                                                    float weight) {
  std::vector<PolicyNet<float>::Target> out;
  for (std::size_t p = ex.prompt_len; p < ex.tokens.size(); ++p)
    out.push_back({p - 1, ex.tokens[p], weight, sequence});
  return out;
}

namespace {

constexpr std::size_t kEvalChunk = 64;

std::size_t target_count(const BCExample& ex) { return ex.tokens.size() - ex.prompt_len; }

}  // namespace

double bc_loss(const PolicyNet<float>& policy, std::span<const BCExample> examples) {
  double total = 0;
  std::size_t tokens = 0;
  for (std::size_t begin = 0; begin < examples.size(); begin += kEvalChunk) {
    const std::size_t end = std::min(examples.size(), begin + kEvalChunk);
    std::vector<TokenSequence> batch;
    std::vector<PolicyNet<float>::Target> targets;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(examples[i].tokens);
      const auto t = reply_targets(examples[i], i - begin, 1.0f);
      targets.insert(targets.end(), t.begin(), t.end());
      tokens += t.size();
    }
    total += policy.nll(std::span<const TokenSequence>(batch), targets, nullptr);
  }
  return tokens == 0 ? 0.0 : total / static_cast<double>(tokens);
}

BCStats train_bc(PolicyNet<float>& policy, const CorpusSplit& split, const Vocabulary& vocab,
                 const BCConfig& config) {
  config.validate();
  const std::size_t ctx = policy.config().context_len;
  const BCData train = make_bc_data(split.train, vocab, config.max_reply_len, ctx);
  const BCData validation = make_bc_data(split.validation, vocab, config.max_reply_len, ctx);
  if (train.examples.empty())
    throw TrainingError("no train record has a non-empty reply after tokenization");
  if (train.skipped_long > 0)
    log::warn(std::to_string(train.skipped_long) + " records skipped: prompt exceeds context");

  BCStats stats;
  stats.skipped_empty = train.skipped_empty;
  stats.truncated = train.truncated;
  auto record = [&] {
    stats.train_loss.push_back(bc_loss(policy, train.examples));
    if (!validation.examples.empty())
      stats.validation_loss.push_back(bc_loss(policy, validation.examples));
  };
  record();

  AdamW<float> opt(policy.params(), {config.lr, 0.9, 0.999, 1e-8, config.weight_decay});
  Rng rng(derive_seed(config.seed, 0xbc));
  std::vector<std::size_t> order(train.examples.size());
  std::iota(order.begin(), order.end(), 0);
  Grad<float> grad(policy.params().size());
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch) {
      const std::size_t end = std::min(order.size(), begin + config.batch);
      std::size_t n_tokens = 0;
      for (std::size_t i = begin; i < end; ++i) n_tokens += target_count(train.examples[order[i]]);
      const float w = 1.0f / static_cast<float>(n_tokens);
      std::vector<TokenSequence> batch;
      std::vector<PolicyNet<float>::Target> targets;
      for (std::size_t i = begin; i < end; ++i) {
        const auto& ex = train.examples[order[i]];
        batch.push_back(ex.tokens);
        const auto t = reply_targets(ex, i - begin, w);
        targets.insert(targets.end(), t.begin(), t.end());
      }
      std::fill(grad.begin(), grad.end(), 0.0f);
      const float loss = policy.nll(std::span<const TokenSequence>(batch), targets, &grad);
      if (!std::isfinite(loss)) throw TrainingError("bc loss became non-finite");
      opt.step(policy.params(), grad);
    }
    record();
    log::info("bc epoch " + std::to_string(epoch) + ": train " +
              std::to_string(stats.train_loss.back()));
  }
  return stats;
}

// ---------------------------------------------------------------------------

void mask_structural(std::span<float> logits) {
  constexpr float ninf = -std::numeric_limits<float>::infinity();
  for (TokenId id : {special::kPad, special::kBos, special::kSep, special::kUnk})
    if (static_cast<std::size_t>(id) < logits.size()) logits[static_cast<std::size_t>(id)] = ninf;
}

TokenId sample_token(std::span<const float> logits, double temperature, Rng& rng) {
  if (!(temperature > 0)) throw ParameterError("temperature must be positive");
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = i;
  if (temperature < kGreedyTemperature) return static_cast<TokenId>(best);
  const double mx = logits[best];
  std::vector<double> p(logits.size());
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((static_cast<double>(logits[i]) - mx) / temperature);
    sum += p[i];
  }
  const double u = rng.uniform() * sum;
  double acc = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    acc += p[i];
    if (u < acc) return static_cast<TokenId>(i);
  }
  return static_cast<TokenId>(best);  // only reachable through rounding at u ~ sum
}

std::vector<std::vector<TokenSequence>> sample_replies(const PolicyNet<float>& policy,
                                                       std::span<const TokenSequence> prompts,
                                                       std::size_t n_per_prompt,
                                                       double temperature,
                                                       std::size_t max_reply_len,
                                                       std::uint64_t seed) {
  if (!(temperature > 0)) throw ParameterError("temperature must be positive");
  const std::size_t V = policy.config().vocab_size;
  const std::size_t ctx = policy.config().context_len;
  struct Stream {
    std::size_t prompt, sample;
    TokenSequence seq;
    std::size_t prompt_len;
    Rng rng;
    bool done;
  };
  std::vector<Stream> streams;
  for (std::size_t i = 0; i < prompts.size(); ++i) {
    if (prompts[i].size() >= ctx) throw LengthError("prompt does not fit the policy context");
    for (std::size_t j = 0; j < n_per_prompt; ++j)
      streams.push_back({i, j, prompts[i], prompts[i].size(),
                         Rng(derive_seed(derive_seed(seed, i), j)), false});
  }
  constexpr std::size_t kChunk = 64;
  for (std::size_t step = 0; step < max_reply_len; ++step) {
    std::vector<std::size_t> active;
    for (std::size_t s = 0; s < streams.size(); ++s)
      if (!streams[s].done) {
        if (streams[s].seq.size() >= ctx) streams[s].done = true;
        else active.push_back(s);
      }
    if (active.empty()) break;
    for (std::size_t begin = 0; begin < active.size(); begin += kChunk) {
      const std::size_t end = std::min(active.size(), begin + kChunk);
      std::vector<TokenSequence> batch;
      for (std::size_t a = begin; a < end; ++a) batch.push_back(streams[active[a]].seq);
      auto logits = policy.last_logits(std::span<const TokenSequence>(batch));
      for (std::size_t a = begin; a < end; ++a) {
        auto& st = streams[active[a]];
        std::span<float> row(logits.data() + (a - begin) * V, V);
        mask_structural(row);
        const TokenId tok = sample_token(row, temperature, st.rng);
        if (tok == special::kEos) st.done = true;
        else st.seq.push_back(tok);
      }
    }
  }
  std::vector<std::vector<TokenSequence>> out(prompts.size());
  for (auto& st : streams)
    out[st.prompt].emplace_back(st.seq.begin() + static_cast<std::ptrdiff_t>(st.prompt_len),
                                st.seq.end());
  return out;
}

std::vector<std::string> generate(const PolicyNet<float>& policy, const Vocabulary& vocab,
                                  const GenerationRequest& request, std::uint64_t request_index) {
  if (request.n_samples == 0) throw ParameterError("n_samples must be at least 1");
  if (!(request.temperature > 0)) throw ParameterError("temperature must be positive");
  const TokenSequence prompt = frame_prompt(vocab, request.keyword, request.tweet);
  const auto replies =
      sample_replies(policy, std::span<const TokenSequence>(&prompt, 1), request.n_samples,
                     request.temperature, request.max_reply_len,
                     derive_seed(request.seed, request_index));
  std::vector<std::string> out;
  for (const auto& r : replies[0]) out.push_back(decode(r, vocab));
  return out;
}

std::vector<ScoredReply> rank_scored(std::vector<ScoredReply> scored) {
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredReply& a, const ScoredReply& b) { return a.score > b.score; });
  return scored;
}

std::vector<ScoredReply> rank_replies(std::span<const std::string> replies,
                                      const ScorerNet<float>& scorer, const Vocabulary& vocab,
                                      std::string_view keyword, std::string_view tweet) {
  std::vector<ScoredReply> scored;
  for (const auto& r : replies) scored.push_back({r, score_text(scorer, vocab, keyword, tweet, r)});
  return rank_scored(std::move(scored));
}

}  // namespace enlg
