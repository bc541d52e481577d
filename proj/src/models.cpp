#include "enlg/models.hpp"

#include <algorithm>
#include <cmath>

#include "enlg/errors.hpp"
#include "enlg/kernels.hpp"

namespace enlg {

namespace kn = kernels;

void ModelConfig::validate() const {
  if (vocab_size <= special::kCount) throw ConfigError("vocab_size must exceed the 5 specials");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (n_layers == 0) throw ConfigError("n_layers must be positive");
  if (context_len < 8) throw ConfigError("context_len must be at least 8");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
}

TrunkConfig ModelConfig::trunk(bool causal) const {
  return {vocab_size, d_model, n_heads, n_layers, context_len, dropout, causal};
}

nlohmann::json ModelConfig::to_json() const {
  return {{"vocab_size", vocab_size}, {"d_model", d_model},       {"n_heads", n_heads},
          {"n_layers", n_layers},     {"context_len", context_len}, {"dropout", dropout},
          {"seed", seed}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.d_model = j.value("d_model", c.d_model);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_layers = j.value("n_layers", c.n_layers);
  c.context_len = j.value("context_len", c.context_len);
  c.dropout = j.value("dropout", c.dropout);
  c.seed = j.value("seed", c.seed);
  return c;
}

std::string_view kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::Policy: return "policy";
    case ModelKind::Scorer: return "scorer";
    case ModelKind::Critic: return "critic";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

template <class T>
PolicyNet<T>::PolicyNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  trunk_ = Trunk<T>(cfg_.trunk(true), store_, "trunk.");
  head_ = store_.add("lm_head", {cfg_.vocab_size, cfg_.d_model});
}

template <class T>
void PolicyNet<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  trunk_.init(store_, rng);
  for (T& w : store_.view(head_)) w = static_cast<T>(rng.normal() * 0.02);
}

template <class T>
std::vector<T> PolicyNet<T>::logits(std::span<const TokenId> tokens) const {
  TrunkCache<T> cache;
  const auto& h = trunk_.forward(store_, tokens, cache);
  std::vector<T> out(tokens.size() * cfg_.vocab_size);
  kn::matmul_nt(h.data(), store_.data(head_), out.data(), tokens.size(), cfg_.vocab_size,
                cfg_.d_model);
  return out;
}

template <class T>
std::vector<T> PolicyNet<T>::last_logits(std::span<const TokenId> tokens) const {
  const TokenSequence one(tokens.begin(), tokens.end());
  return last_logits(std::span<const TokenSequence>(&one, 1));
}

template <class T>
std::vector<T> PolicyNet<T>::last_logits(std::span<const TokenSequence> batch) const {
  const std::size_t d = cfg_.d_model;
  TrunkCache<T> cache;
  const auto& h = trunk_.forward(store_, batch, cache);
  std::vector<T> last(batch.size() * d);
  for (std::size_t b = 0; b < batch.size(); ++b)
    std::copy_n(h.data() + (cache.offsets[b + 1] - 1) * d, d, last.data() + b * d);
  std::vector<T> out(batch.size() * cfg_.vocab_size);
  kn::matmul_nt(last.data(), store_.data(head_), out.data(), batch.size(), cfg_.vocab_size, d);
  return out;
}

template <class T>
T PolicyNet<T>::nll(std::span<const TokenId> tokens, std::span<const Target> targets,
                    Grad<T>* grad, Rng* dropout_rng) const {
  const TokenSequence one(tokens.begin(), tokens.end());
  return nll(std::span<const TokenSequence>(&one, 1), targets, grad, dropout_rng);
}

template <class T>
T PolicyNet<T>::nll(std::span<const TokenSequence> batch, std::span<const Target> targets,
                    Grad<T>* grad, Rng* dropout_rng) const {
  const std::size_t V = cfg_.vocab_size;
  const std::size_t d = cfg_.d_model;
  const std::size_t n = targets.size();
  TrunkCache<T> cache;
  const auto& h = trunk_.forward(store_, batch, cache, dropout_rng);

  // Gather the hidden rows that carry targets, then project them together.
  std::vector<std::size_t> rows(n);
  std::vector<T> gathered(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& tgt = targets[i];
    if (tgt.sequence >= batch.size() || tgt.position >= batch[tgt.sequence].size())
      throw RangeError("target position outside sequence");
    if (tgt.token < 0 || static_cast<std::size_t>(tgt.token) >= V)
      throw RangeError("target token outside vocabulary");
    rows[i] = cache.row(tgt.sequence, tgt.position);
    std::copy_n(h.data() + rows[i] * d, d, gathered.data() + i * d);
  }
  std::vector<T> logits(n * V);
  kn::matmul_nt(gathered.data(), store_.data(head_), logits.data(), n, V, d);

  T loss = 0;
  for (std::size_t i = 0; i < n; ++i) {
    std::span<T> row(logits.data() + i * V, V);
    log_softmax(row);
    const auto tok = static_cast<std::size_t>(targets[i].token);
    const T w = targets[i].weight;
    loss -= w * row[tok];
    if (grad == nullptr) continue;
    // d/dlogits of -w log softmax = w (p - onehot)
    for (T& v : row) v = w * std::exp(v);
    row[tok] -= w;
  }
  if (grad == nullptr) return loss;

  std::vector<T> d_gathered(n * d, T(0));
  kn::matmul_nn_acc(logits.data(), store_.data(head_), d_gathered.data(), n, V, d);
  kn::matmul_tn_acc(logits.data(), gathered.data(), grad->data() + store_.slot(head_).offset, n, V,
                    d);
  std::vector<T> d_hidden(cache.rows() * d, T(0));
  for (std::size_t i = 0; i < n; ++i)
    kn::axpy(T(1), d_gathered.data() + i * d, d_hidden.data() + rows[i] * d, d);
  trunk_.backward(store_, cache, d_hidden, *grad);
  return loss;
}

// ---------------------------------------------------------------------------

template <class T>
ScorerNet<T>::ScorerNet(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  trunk_ = Trunk<T>(cfg_.trunk(false), store_, "trunk.");
  w_ = store_.add("score.w", {cfg_.d_model});
  b_ = store_.add("score.b", {1});
}

template <class T>
void ScorerNet<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  trunk_.init(store_, rng);
  // Zero output head: every score starts at exactly 0.5.
  std::fill(store_.view(w_).begin(), store_.view(w_).end(), T(0));
  store_.data(b_)[0] = T(0);
}

namespace {

template <class T>
std::vector<T> mean_pool(const T* h, std::size_t L, std::size_t d) {
  std::vector<T> pooled(d, T(0));
  for (std::size_t t = 0; t < L; ++t) kn::axpy(T(1), h + t * d, pooled.data(), d);
  const T inv = T(1) / static_cast<T>(L);
  for (T& v : pooled) v *= inv;
  return pooled;
}

template <class T>
T softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <class T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

}  // namespace

template <class T>
std::vector<T> ScorerNet<T>::logits(std::span<const TokenSequence> batch) const {
  const std::size_t d = cfg_.d_model;
  TrunkCache<T> cache;
  const auto& h = trunk_.forward(store_, batch, cache);
  std::vector<T> out(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto pooled = mean_pool(h.data() + cache.offsets[b] * d, cache.length(b), d);
    out[b] = kn::dot(pooled.data(), store_.data(w_), d) + store_.data(b_)[0];
  }
  return out;
}

template <class T>
T ScorerNet<T>::logit(std::span<const TokenId> tokens) const {
  const TokenSequence one(tokens.begin(), tokens.end());
  return logits(std::span<const TokenSequence>(&one, 1))[0];
}

template <class T>
T ScorerNet<T>::score(std::span<const TokenId> tokens) const {
  return sigmoid(logit(tokens));
}

template <class T>
std::vector<T> ScorerNet<T>::scores(std::span<const TokenSequence> batch) const {
  auto out = logits(batch);
  for (T& z : out) z = sigmoid(z);
  return out;
}

template <class T>
T ScorerNet<T>::bce(std::span<const TokenId> tokens, T label, T weight, Grad<T>* grad,
                    Rng* dropout_rng) const {
  const TokenSequence one(tokens.begin(), tokens.end());
  return bce(std::span<const TokenSequence>(&one, 1), std::span<const T>(&label, 1),
             std::span<const T>(&weight, 1), grad, dropout_rng);
}

template <class T>
T ScorerNet<T>::bce(std::span<const TokenSequence> batch, std::span<const T> labels,
                    std::span<const T> weights, Grad<T>* grad, Rng* dropout_rng) const {
  if (labels.size() != batch.size() || weights.size() != batch.size())
    throw RangeError("labels and weights must match the batch size");
  const std::size_t d = cfg_.d_model;
  TrunkCache<T> cache;
  const auto& h = trunk_.forward(store_, batch, cache, dropout_rng);
  std::vector<T> d_hidden;
  if (grad != nullptr) d_hidden.assign(cache.rows() * d, T(0));
  const T* w = store_.data(w_);
  T loss = 0;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const std::size_t L = cache.length(b);
    const auto pooled = mean_pool(h.data() + cache.offsets[b] * d, L, d);
    const T z = kn::dot(pooled.data(), w, d) + store_.data(b_)[0];
    const T y = labels[b];
    // -[y log s(z) + (1-y) log(1 - s(z))] = y softplus(-z) + (1-y) softplus(z)
    loss += weights[b] * (y * softplus(-z) + (T(1) - y) * softplus(z));
    if (grad == nullptr) continue;
    const T dz = weights[b] * (sigmoid(z) - y);
    kn::axpy(dz, pooled.data(), grad->data() + store_.slot(w_).offset, d);
    grad->data()[store_.slot(b_).offset] += dz;
    const T scale = dz / static_cast<T>(L);
    for (std::size_t r = cache.offsets[b]; r < cache.offsets[b + 1]; ++r)
      kn::axpy(scale, w, d_hidden.data() + r * d, d);
  }
  if (grad != nullptr) trunk_.backward(store_, cache, d_hidden, *grad);
  return loss;
}

// ---------------------------------------------------------------------------

template <class T>
CriticBundle<T>::CriticBundle(const ModelConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  trunk_ = Trunk<T>(cfg_.trunk(true), store_, "trunk.");
  v_ = MlpHead<T>(cfg_.d_model, 1, store_, "v.");
  q1_ = MlpHead<T>(cfg_.d_model, cfg_.vocab_size, store_, "q1.");
  q2_ = MlpHead<T>(cfg_.d_model, cfg_.vocab_size, store_, "q2.");
  tq1_ = MlpHead<T>(cfg_.d_model, cfg_.vocab_size, targets_, "q1.");
  tq2_ = MlpHead<T>(cfg_.d_model, cfg_.vocab_size, targets_, "q2.");
}

template <class T>
void CriticBundle<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  trunk_.init(store_, rng);
  v_.init(store_, rng, true);
  q1_.init(store_, rng, true);
  q2_.init(store_, rng, true);
  // Target heads start as exact copies; they occupy the tail of store_ in the
  // same order as targets_.
  const std::size_t q_begin = store_.slot(store_.find("q1.w1")).offset;
  std::copy(store_.values().begin() + static_cast<std::ptrdiff_t>(q_begin), store_.values().end(),
            targets_.values().begin());
}

template <class T>
void CriticBundle<T>::forward(std::span<const TokenId> tokens, Pass& pass,
                              Rng* dropout_rng) const {
  const TokenSequence one(tokens.begin(), tokens.end());
  forward(std::span<const TokenSequence>(&one, 1), pass, dropout_rng);
}

template <class T>
void CriticBundle<T>::forward(std::span<const TokenSequence> batch, Pass& pass,
                              Rng* dropout_rng) const {
  trunk_.forward(store_, batch, pass.trunk, dropout_rng);
  pass.d_hidden.assign(pass.trunk.rows() * cfg_.d_model, T(0));
  pass.any_grad = false;
}

template <class T>
std::span<const T> CriticBundle<T>::hidden_at(const Pass& pass, std::size_t row) const {
  if (row >= pass.trunk.rows()) throw RangeError("critic row outside batch");
  return {pass.trunk.out.data() + row * cfg_.d_model, cfg_.d_model};
}

template <class T>
T CriticBundle<T>::value(const Pass& pass, std::size_t row) const {
  typename MlpHead<T>::Cache c;
  v_.hidden(store_, hidden_at(pass, row), c);
  return v_.output(store_, c, 0);
}

template <class T>
T CriticBundle<T>::q(const Pass& pass, std::size_t row, Head head, TokenId action) const {
  typename MlpHead<T>::Cache c;
  online(head).hidden(store_, hidden_at(pass, row), c);
  return online(head).output(store_, c, static_cast<std::size_t>(action));
}

template <class T>
T CriticBundle<T>::target_q(const Pass& pass, std::size_t row, Head head,
                            TokenId action) const {
  typename MlpHead<T>::Cache c;
  target(head).hidden(targets_, hidden_at(pass, row), c);
  return target(head).output(targets_, c, static_cast<std::size_t>(action));
}

template <class T>
void CriticBundle<T>::backward_value(Pass& pass, std::size_t row, T d_value,
                                     Grad<T>& grad) const {
  typename MlpHead<T>::Cache c;
  v_.hidden(store_, hidden_at(pass, row), c);
  v_.backward_one(store_, c, 0, d_value, grad,
                  std::span<T>(pass.d_hidden.data() + row * cfg_.d_model, cfg_.d_model));
  pass.any_grad = true;
}

template <class T>
void CriticBundle<T>::backward_q(Pass& pass, std::size_t row, Head head, TokenId action,
                                 T d_q, Grad<T>& grad) const {
  typename MlpHead<T>::Cache c;
  online(head).hidden(store_, hidden_at(pass, row), c);
  online(head).backward_one(
      store_, c, static_cast<std::size_t>(action), d_q, grad,
      std::span<T>(pass.d_hidden.data() + row * cfg_.d_model, cfg_.d_model));
  pass.any_grad = true;
}

template <class T>
void CriticBundle<T>::finish_backward(Pass& pass, Grad<T>& grad) const {
  if (pass.any_grad) trunk_.backward(store_, pass.trunk, pass.d_hidden, grad);
}

template <class T>
std::vector<typename CriticBundle<T>::Values> CriticBundle<T>::values(
    std::span<const TokenId> tokens) const {
  Pass pass;
  forward(tokens, pass);
  std::vector<Values> out(tokens.size());
  const std::size_t V = cfg_.vocab_size;
  for (std::size_t p = 0; p < tokens.size(); ++p) {
    auto& o = out[p];
    const auto h = hidden_at(pass, p);
    typename MlpHead<T>::Cache c;
    v_.hidden(store_, h, c);
    o.v = v_.output(store_, c, 0);
    auto fill = [&](const MlpHead<T>& head, const ParamStore<T>& store, std::vector<T>& dst) {
      head.hidden(store, h, c);
      dst.resize(V);
      head.output_all(store, c, dst);
    };
    fill(q1_, store_, o.q1);
    fill(q2_, store_, o.q2);
    fill(tq1_, targets_, o.target_q1);
    fill(tq2_, targets_, o.target_q2);
  }
  return out;
}

template <class T>
void CriticBundle<T>::polyak(double rho) {
  const std::size_t q_begin = store_.slot(store_.find("q1.w1")).offset;
  const T r = static_cast<T>(rho);
  const T one_minus = static_cast<T>(1.0 - rho);
  auto& tv = targets_.values();
  const auto& ov = store_.values();
  for (std::size_t i = 0; i < tv.size(); ++i) tv[i] = r * tv[i] + one_minus * ov[q_begin + i];
}

template <class T>
std::vector<std::size_t> CriticBundle<T>::value_slots() const {
  auto s = trunk_.slots();
  for (auto x : v_.slots()) s.push_back(x);
  return s;
}

template <class T>
std::vector<std::size_t> CriticBundle<T>::q_slots() const {
  auto s = trunk_.slots();
  for (auto x : q1_.slots()) s.push_back(x);
  for (auto x : q2_.slots()) s.push_back(x);
  return s;
}

template <class T>
ModelSet<T> init_models(const ModelConfig& cfg, std::uint64_t seed) {
  ModelSet<T> set{PolicyNet<T>(cfg), ScorerNet<T>(cfg), CriticBundle<T>(cfg)};
  set.policy.init(derive_seed(seed, 1));
  set.scorer.init(derive_seed(seed, 2));
  set.critics.init(derive_seed(seed, 3));
  return set;
}

template class PolicyNet<float>;
template class PolicyNet<double>;
template class ScorerNet<float>;
template class ScorerNet<double>;
template class CriticBundle<float>;
template class CriticBundle<double>;
template ModelSet<float> init_models<float>(const ModelConfig&, std::uint64_t);
template ModelSet<double> init_models<double>(const ModelConfig&, std::uint64_t);

}  // namespace enlg
