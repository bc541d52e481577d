#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "enlg/params.hpp"
#include "enlg/rng.hpp"
#include "enlg/tokenizer.hpp"
#include "enlg/transformer.hpp"

namespace enlg {

struct ModelConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t context_len = 128;
  double dropout = 0.0;
  std::uint64_t seed = 0;

  /// Throws ConfigError.
  void validate() const;
  TrunkConfig trunk(bool causal) const;
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
  bool operator==(const ModelConfig&) const = default;
};

enum class ModelKind : std::uint32_t { Policy = 1, Scorer = 2, Critic = 3 };
std::string_view kind_name(ModelKind kind);

/// Autoregressive reply policy: causal trunk plus an untied vocabulary projection.
template <class T>
class PolicyNet {
 public:
  static constexpr ModelKind kKind = ModelKind::Policy;

  /// Predict `token` from the prefix ending at `position` of batch entry `sequence`.
  struct Target {
    std::size_t position;
    TokenId token;
    T weight;
    std::size_t sequence = 0;
  };

  explicit PolicyNet(const ModelConfig& cfg);
  void init(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  /// Logits for every position, row-major (L x vocab).
  std::vector<T> logits(std::span<const TokenId> tokens) const;
  /// Logits at the last position only.
  std::vector<T> last_logits(std::span<const TokenId> tokens) const;
  /// Last-position logits for each sequence of a batch (B x vocab).
  std::vector<T> last_logits(std::span<const TokenSequence> batch) const;

  /// Weighted negative log-likelihood sum over targets. Accumulates parameter
  /// gradients into `grad` when given.
  T nll(std::span<const TokenId> tokens, std::span<const Target> targets, Grad<T>* grad,
        Rng* dropout_rng = nullptr) const;
  T nll(std::span<const TokenSequence> batch, std::span<const Target> targets, Grad<T>* grad,
        Rng* dropout_rng = nullptr) const;

  template <class U>
  PolicyNet<U> cast() const {
    PolicyNet<U> out(cfg_);
    out.params() = store_.template cast<U>();
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  Trunk<T> trunk_;
  std::size_t head_ = 0;
};

/// Like-score model: bidirectional trunk, mean pooling, one sigmoid output.
template <class T>
class ScorerNet {
 public:
  static constexpr ModelKind kKind = ModelKind::Scorer;

  explicit ScorerNet(const ModelConfig& cfg);
  void init(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  T logit(std::span<const TokenId> tokens) const;
  std::vector<T> logits(std::span<const TokenSequence> batch) const;
  /// Probability in (0, 1).
  T score(std::span<const TokenId> tokens) const;
  std::vector<T> scores(std::span<const TokenSequence> batch) const;
  /// weight * binary cross-entropy against `label`; accumulates gradients when given.
  T bce(std::span<const TokenId> tokens, T label, T weight, Grad<T>* grad,
        Rng* dropout_rng = nullptr) const;
  /// Summed weighted BCE over a batch.
  T bce(std::span<const TokenSequence> batch, std::span<const T> labels, std::span<const T> weights,
        Grad<T>* grad, Rng* dropout_rng = nullptr) const;

  template <class U>
  ScorerNet<U> cast() const {
    ScorerNet<U> out(cfg_);
    out.params() = store_.template cast<U>();
    return out;
  }

 private:
  ModelConfig cfg_;
  ParamStore<T> store_;
  Trunk<T> trunk_;
  std::size_t w_ = 0, b_ = 0;
};

/// V, twin Q and target-Q heads over one causal trunk. Target heads live in a
/// separate store so they never receive gradients.
template <class T>
class CriticBundle {
 public:
  static constexpr ModelKind kKind = ModelKind::Critic;

  enum class Head { Q1, Q2 };

  struct Values {
    T v = 0;
    std::vector<T> q1, q2, target_q1, target_q2;  // vocab-length
  };

  /// One forward pass kept for head evaluation and backward. Head accessors
  /// take a row of the packed batch (pass.trunk.row(seq, pos)); for a single
  /// sequence the row is the position.
  struct Pass {
    TrunkCache<T> trunk;
    std::vector<T> d_hidden;  // rows x d
    bool any_grad = false;
  };

  explicit CriticBundle(const ModelConfig& cfg);
  void init(std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }
  ParamStore<T>& targets() { return targets_; }
  const ParamStore<T>& targets() const { return targets_; }

  /// Values at every position of the sequence.
  std::vector<Values> values(std::span<const TokenId> tokens) const;

  void forward(std::span<const TokenId> tokens, Pass& pass, Rng* dropout_rng = nullptr) const;
  void forward(std::span<const TokenSequence> batch, Pass& pass, Rng* dropout_rng = nullptr) const;
  T value(const Pass& pass, std::size_t row) const;
  T q(const Pass& pass, std::size_t row, Head head, TokenId action) const;
  T target_q(const Pass& pass, std::size_t row, Head head, TokenId action) const;
  void backward_value(Pass& pass, std::size_t row, T d_value, Grad<T>& grad) const;
  void backward_q(Pass& pass, std::size_t row, Head head, TokenId action, T d_q,
                  Grad<T>& grad) const;
  /// Pushes the accumulated hidden-state gradient through the trunk.
  void finish_backward(Pass& pass, Grad<T>& grad) const;

  /// target <- rho * target + (1 - rho) * online, for both Q heads.
  void polyak(double rho);

  std::vector<std::size_t> value_slots() const;  // trunk + V head
  std::vector<std::size_t> q_slots() const;      // trunk + Q heads

  template <class U>
  CriticBundle<U> cast() const {
    CriticBundle<U> out(cfg_);
    out.params() = store_.template cast<U>();
    out.targets() = targets_.template cast<U>();
    return out;
  }

 private:
  const MlpHead<T>& online(Head h) const { return h == Head::Q1 ? q1_ : q2_; }
  const MlpHead<T>& target(Head h) const { return h == Head::Q1 ? tq1_ : tq2_; }
  std::span<const T> hidden_at(const Pass& pass, std::size_t row) const;

  ModelConfig cfg_;
  ParamStore<T> store_;
  ParamStore<T> targets_;
  Trunk<T> trunk_;
  MlpHead<T> v_, q1_, q2_;
  MlpHead<T> tq1_, tq2_;  // registered in targets_
};

template <class T>
struct ModelSet {
  PolicyNet<T> policy;
  ScorerNet<T> scorer;
  CriticBundle<T> critics;
};

/// Deterministic initialization of all three model families from one seed.
template <class T>
ModelSet<T> init_models(const ModelConfig& cfg, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Checkpoints (layout documented in docs/checkpoint_format.md)

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const PolicyNet<float>& model, const std::string& path);
void save_checkpoint(const ScorerNet<float>& model, const std::string& path);
void save_checkpoint(const CriticBundle<float>& model, const std::string& path);

PolicyNet<float> load_policy(const std::string& path);
ScorerNet<float> load_scorer(const std::string& path);
CriticBundle<float> load_critic(const std::string& path);

/// Reads only the header; throws FormatError / VersionError.
ModelKind checkpoint_kind(const std::string& path);

}  // namespace enlg
