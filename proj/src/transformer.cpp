#include "enlg/transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "enlg/errors.hpp"
#include "enlg/kernels.hpp"

namespace enlg {

namespace kn = kernels;

template <class T>
T gelu(T x) {
  constexpr T c = T(0.7978845608028654);  // sqrt(2/pi)
  return T(0.5) * x * (T(1) + std::tanh(c * (x + T(0.044715) * x * x * x)));
}

template <class T>
T gelu_grad(T x) {
  constexpr T c = T(0.7978845608028654);
  const T inner = c * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(inner);
  const T sech2 = T(1) - th * th;
  return T(0.5) * (T(1) + th) + T(0.5) * x * sech2 * c * (T(1) + T(3) * T(0.044715) * x * x);
}

template <class T>
void log_softmax(std::span<T> x) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : x) mx = std::max(mx, v);
  T sum = 0;
  for (T v : x) sum += std::exp(v - mx);
  const T lse = mx + std::log(sum);
  for (T& v : x) v -= lse;
}

namespace {

constexpr double kLnEps = 1e-5;

template <class T>
void layernorm_forward(const T* x, const T* g, const T* b, T* out, T* mean, T* rstd,
                       std::size_t rows, std::size_t d) {
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    T m = 0;
    for (std::size_t i = 0; i < d; ++i) m += xr[i];
    m /= static_cast<T>(d);
    T var = 0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - m) * (xr[i] - m);
    var /= static_cast<T>(d);
    const T rs = T(1) / std::sqrt(var + T(kLnEps));
    T* o = out + r * d;
    for (std::size_t i = 0; i < d; ++i) o[i] = (xr[i] - m) * rs * g[i] + b[i];
    mean[r] = m;
    rstd[r] = rs;
  }
}

template <class T>
void layernorm_backward(const T* x, const T* g, const T* mean, const T* rstd, const T* d_out,
                        T* d_x, T* d_g, T* d_b, std::size_t rows, std::size_t d) {
  std::vector<T> dxhat(d);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x + r * d;
    const T* dor = d_out + r * d;
    T mean_dxhat = 0, mean_dxhat_xhat = 0;
    for (std::size_t i = 0; i < d; ++i) {
      const T xhat = (xr[i] - mean[r]) * rstd[r];
      dxhat[i] = dor[i] * g[i];
      d_g[i] += dor[i] * xhat;
      d_b[i] += dor[i];
      mean_dxhat += dxhat[i];
      mean_dxhat_xhat += dxhat[i] * xhat;
    }
    mean_dxhat /= static_cast<T>(d);
    mean_dxhat_xhat /= static_cast<T>(d);
    T* dxr = d_x + r * d;
    for (std::size_t i = 0; i < d; ++i) {
      const T xhat = (xr[i] - mean[r]) * rstd[r];
      dxr[i] += rstd[r] * (dxhat[i] - mean_dxhat - xhat * mean_dxhat_xhat);
    }
  }
}

template <class T>
void add_bias(T* y, const T* b, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) y[r * n + i] += b[i];
}

template <class T>
void bias_grad(const T* dy, T* db, std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t i = 0; i < n; ++i) db[i] += dy[r * n + i];
}

template <class T>
void fill_normal(std::span<T> v, Rng& rng, double scale) {
  for (T& x : v) x = static_cast<T>(rng.normal() * scale);
}

template <class T>
std::vector<T> dropout_mask(std::size_t n, double p, Rng& rng) {
  std::vector<T> mask(n);
  const T keep = static_cast<T>(1.0 / (1.0 - p));
  for (T& m : mask) m = rng.uniform() < p ? T(0) : keep;
  return mask;
}

}  // namespace

// ---------------------------------------------------------------------------

template <class T>
Trunk<T>::Trunk(const TrunkConfig& cfg, ParamStore<T>& store, const std::string& prefix)
    : cfg_(cfg) {
  const std::size_t d = cfg.d_model;
  wte_ = store.add(prefix + "wte", {cfg.vocab_size, d});
  wpe_ = store.add(prefix + "wpe", {cfg.context_len, d});
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    const std::string p = prefix + "h" + std::to_string(l) + ".";
    LayerSlots s{};
    s.ln1_g = store.add(p + "ln1.g", {d});
    s.ln1_b = store.add(p + "ln1.b", {d});
    s.w_qkv = store.add(p + "attn.w_qkv", {3 * d, d});
    s.b_qkv = store.add(p + "attn.b_qkv", {3 * d});
    s.w_o = store.add(p + "attn.w_o", {d, d});
    s.b_o = store.add(p + "attn.b_o", {d});
    s.ln2_g = store.add(p + "ln2.g", {d});
    s.ln2_b = store.add(p + "ln2.b", {d});
    s.w_fc = store.add(p + "mlp.w_fc", {4 * d, d});
    s.b_fc = store.add(p + "mlp.b_fc", {4 * d});
    s.w_proj = store.add(p + "mlp.w_proj", {d, 4 * d});
    s.b_proj = store.add(p + "mlp.b_proj", {d});
    layers_.push_back(s);
  }
  lnf_g_ = store.add(prefix + "lnf.g", {d});
  lnf_b_ = store.add(prefix + "lnf.b", {d});
}

template <class T>
void Trunk<T>::init(ParamStore<T>& store, Rng& rng) const {
  fill_normal(store.view(wte_), rng, 0.02);
  fill_normal(store.view(wpe_), rng, 0.02);
  for (const auto& s : layers_) {
    for (auto slot : {s.w_qkv, s.w_o, s.w_fc, s.w_proj}) fill_normal(store.view(slot), rng, 0.02);
    for (auto slot : {s.b_qkv, s.b_o, s.b_fc, s.b_proj, s.ln1_b, s.ln2_b})
      std::fill(store.view(slot).begin(), store.view(slot).end(), T(0));
    for (auto slot : {s.ln1_g, s.ln2_g})
      std::fill(store.view(slot).begin(), store.view(slot).end(), T(1));
  }
  std::fill(store.view(lnf_g_).begin(), store.view(lnf_g_).end(), T(1));
  std::fill(store.view(lnf_b_).begin(), store.view(lnf_b_).end(), T(0));
}

template <class T>
std::vector<std::size_t> Trunk<T>::slots() const {
  std::vector<std::size_t> out{wte_, wpe_};
  for (const auto& s : layers_)
    out.insert(out.end(), {s.ln1_g, s.ln1_b, s.w_qkv, s.b_qkv, s.w_o, s.b_o, s.ln2_g, s.ln2_b,
                           s.w_fc, s.b_fc, s.w_proj, s.b_proj});
  out.insert(out.end(), {lnf_g_, lnf_b_});
  return out;
}

template <class T>
const std::vector<T>& Trunk<T>::forward(const ParamStore<T>& store, std::span<const TokenId> tokens,
                                        TrunkCache<T>& cache, Rng* dropout_rng) const {
  const TokenSequence one(tokens.begin(), tokens.end());
  return forward(store, std::span<const TokenSequence>(&one, 1), cache, dropout_rng);
}

template <class T>
const std::vector<T>& Trunk<T>::forward(const ParamStore<T>& store,
                                        std::span<const TokenSequence> batch,
                                        TrunkCache<T>& cache, Rng* dropout_rng) const {
  const std::size_t d = cfg_.d_model;
  const std::size_t H = cfg_.n_heads;
  const std::size_t hd = d / H;

  cache.tokens.clear();
  cache.offsets.assign(1, 0);
  cache.att_offsets.assign(1, 0);
  for (const auto& seq : batch) {
    if (seq.empty()) throw LengthError("empty token sequence");
    if (seq.size() > cfg_.context_len)
      throw LengthError("sequence of " + std::to_string(seq.size()) +
                        " tokens exceeds context_len " + std::to_string(cfg_.context_len));
    for (TokenId t : seq)
      if (t < 0 || static_cast<std::size_t>(t) >= cfg_.vocab_size)
        throw RangeError("token id " + std::to_string(t) + " outside model vocabulary");
    cache.tokens.insert(cache.tokens.end(), seq.begin(), seq.end());
    cache.offsets.push_back(cache.tokens.size());
    cache.att_offsets.push_back(cache.att_offsets.back() + H * seq.size() * seq.size());
  }
  const std::size_t R = cache.tokens.size();
  const std::size_t n_seq = batch.size();
  if (R == 0) throw LengthError("empty batch");

  const bool use_dropout = dropout_rng != nullptr && cfg_.dropout > 0.0;
  cache.layers.resize(cfg_.n_layers);

  std::vector<T> x(R * d);
  const T* wte = store.data(wte_);
  const T* wpe = store.data(wpe_);
  for (std::size_t s = 0; s < n_seq; ++s)
    for (std::size_t r = cache.offsets[s]; r < cache.offsets[s + 1]; ++r) {
      const std::size_t pos = r - cache.offsets[s];
      const T* te = wte + static_cast<std::size_t>(cache.tokens[r]) * d;
      for (std::size_t i = 0; i < d; ++i) x[r * d + i] = te[i] + wpe[pos * d + i];
    }

  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<T> tmp(R * d);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const auto& s = layers_[l];
    auto& c = cache.layers[l];
    c.input = x;

    c.ln1.resize(R * d);
    c.ln1_mean.resize(R);
    c.ln1_rstd.resize(R);
    layernorm_forward(x.data(), store.data(s.ln1_g), store.data(s.ln1_b), c.ln1.data(),
                      c.ln1_mean.data(), c.ln1_rstd.data(), R, d);

    c.qkv.resize(R * 3 * d);
    kn::matmul_nt(c.ln1.data(), store.data(s.w_qkv), c.qkv.data(), R, 3 * d, d);
    add_bias(c.qkv.data(), store.data(s.b_qkv), R, 3 * d);

    c.att.assign(cache.att_offsets.back(), T(0));
    c.attn_y.assign(R * d, T(0));
    for (std::size_t sq = 0; sq < n_seq; ++sq) {
      const std::size_t base = cache.offsets[sq];
      const std::size_t L = cache.length(sq);
      const T* qkv = c.qkv.data() + base * 3 * d;
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t t = 0; t < L; ++t) {
          const T* q = qkv + t * 3 * d + h * hd;
          T* row = c.att.data() + cache.att_offsets[sq] + (h * L + t) * L;
          const std::size_t span_end = cfg_.causal ? t + 1 : L;
          T mx = -std::numeric_limits<T>::infinity();
          for (std::size_t u = 0; u < span_end; ++u) {
            row[u] = kn::dot(q, qkv + u * 3 * d + d + h * hd, hd) * scale;
            mx = std::max(mx, row[u]);
          }
          T sum = 0;
          for (std::size_t u = 0; u < span_end; ++u) {
            row[u] = std::exp(row[u] - mx);
            sum += row[u];
          }
          const T inv = T(1) / sum;
          T* y = c.attn_y.data() + (base + t) * d + h * hd;
          for (std::size_t u = 0; u < span_end; ++u) {
            row[u] *= inv;
            kn::axpy(row[u], qkv + u * 3 * d + 2 * d + h * hd, y, hd);
          }
        }
      }
    }

    kn::matmul_nt(c.attn_y.data(), store.data(s.w_o), tmp.data(), R, d, d);
    add_bias(tmp.data(), store.data(s.b_o), R, d);
    if (use_dropout) {
      c.attn_mask = dropout_mask<T>(R * d, cfg_.dropout, *dropout_rng);
      for (std::size_t i = 0; i < R * d; ++i) tmp[i] *= c.attn_mask[i];
    } else {
      c.attn_mask.clear();
    }
    c.resid_mid.resize(R * d);
    for (std::size_t i = 0; i < R * d; ++i) c.resid_mid[i] = x[i] + tmp[i];

    c.ln2.resize(R * d);
    c.ln2_mean.resize(R);
    c.ln2_rstd.resize(R);
    layernorm_forward(c.resid_mid.data(), store.data(s.ln2_g), store.data(s.ln2_b), c.ln2.data(),
                      c.ln2_mean.data(), c.ln2_rstd.data(), R, d);

    c.fc.resize(R * 4 * d);
    kn::matmul_nt(c.ln2.data(), store.data(s.w_fc), c.fc.data(), R, 4 * d, d);
    add_bias(c.fc.data(), store.data(s.b_fc), R, 4 * d);
    c.act.resize(R * 4 * d);
    c.fc_tanh.resize(R * 4 * d);
    kn::gelu_forward(c.fc.data(), c.act.data(), c.fc_tanh.data(), R * 4 * d);

    kn::matmul_nt(c.act.data(), store.data(s.w_proj), tmp.data(), R, d, 4 * d);
    add_bias(tmp.data(), store.data(s.b_proj), R, d);
    if (use_dropout) {
      c.mlp_mask = dropout_mask<T>(R * d, cfg_.dropout, *dropout_rng);
      for (std::size_t i = 0; i < R * d; ++i) tmp[i] *= c.mlp_mask[i];
    } else {
      c.mlp_mask.clear();
    }
    for (std::size_t i = 0; i < R * d; ++i) x[i] = c.resid_mid[i] + tmp[i];
  }

  cache.final_input = std::move(x);
  cache.out.resize(R * d);
  cache.out_mean.resize(R);
  cache.out_rstd.resize(R);
  layernorm_forward(cache.final_input.data(), store.data(lnf_g_), store.data(lnf_b_),
                    cache.out.data(), cache.out_mean.data(), cache.out_rstd.data(), R, d);
  return cache.out;
}

template <class T>
void Trunk<T>::backward(const ParamStore<T>& store, const TrunkCache<T>& cache,
                        std::span<const T> d_out, Grad<T>& grad) const {
  const std::size_t R = cache.rows();
  const std::size_t d = cfg_.d_model;
  const std::size_t H = cfg_.n_heads;
  const std::size_t hd = d / H;
  auto g = [&](std::size_t slot) { return grad.data() + store.slot(slot).offset; };

  // dx: gradient w.r.t. the residual stream entering the current block.
  std::vector<T> dx(R * d, T(0));
  layernorm_backward(cache.final_input.data(), store.data(lnf_g_), cache.out_mean.data(),
                     cache.out_rstd.data(), d_out.data(), dx.data(), g(lnf_g_), g(lnf_b_), R, d);

  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  std::vector<T> d_branch(R * d), d_act(R * 4 * d), d_ln(R * d), d_y(R * d), d_qkv(R * 3 * d);
  std::vector<T> d_att(cfg_.context_len);
  for (std::size_t li = cfg_.n_layers; li-- > 0;) {
    const auto& s = layers_[li];
    const auto& c = cache.layers[li];

    // MLP branch: x_out = resid_mid + drop(proj(gelu(fc(ln2(resid_mid)))))
    for (std::size_t i = 0; i < R * d; ++i)
      d_branch[i] = c.mlp_mask.empty() ? dx[i] : dx[i] * c.mlp_mask[i];
    std::fill(d_act.begin(), d_act.end(), T(0));
    kn::matmul_nn_acc(d_branch.data(), store.data(s.w_proj), d_act.data(), R, d, 4 * d);
    kn::matmul_tn_acc(d_branch.data(), c.act.data(), g(s.w_proj), R, d, 4 * d);
    bias_grad(d_branch.data(), g(s.b_proj), R, d);
    kn::gelu_backward(c.fc.data(), c.fc_tanh.data(), d_act.data(), R * 4 * d);
    std::fill(d_ln.begin(), d_ln.end(), T(0));
    kn::matmul_nn_acc(d_act.data(), store.data(s.w_fc), d_ln.data(), R, 4 * d, d);
    kn::matmul_tn_acc(d_act.data(), c.ln2.data(), g(s.w_fc), R, 4 * d, d);
    bias_grad(d_act.data(), g(s.b_fc), R, 4 * d);
    // dx now becomes d(resid_mid)
    layernorm_backward(c.resid_mid.data(), store.data(s.ln2_g), c.ln2_mean.data(),
                       c.ln2_rstd.data(), d_ln.data(), dx.data(), g(s.ln2_g), g(s.ln2_b), R, d);

    // Attention branch: resid_mid = input + drop(o(attn(ln1(input))))
    for (std::size_t i = 0; i < R * d; ++i)
      d_branch[i] = c.attn_mask.empty() ? dx[i] : dx[i] * c.attn_mask[i];
    std::fill(d_y.begin(), d_y.end(), T(0));
    kn::matmul_nn_acc(d_branch.data(), store.data(s.w_o), d_y.data(), R, d, d);
    kn::matmul_tn_acc(d_branch.data(), c.attn_y.data(), g(s.w_o), R, d, d);
    bias_grad(d_branch.data(), g(s.b_o), R, d);

    std::fill(d_qkv.begin(), d_qkv.end(), T(0));
    for (std::size_t sq = 0; sq < cache.sequences(); ++sq) {
      const std::size_t base = cache.offsets[sq];
      const std::size_t L = cache.length(sq);
      const T* qkv = c.qkv.data() + base * 3 * d;
      T* dqkv = d_qkv.data() + base * 3 * d;
      for (std::size_t h = 0; h < H; ++h) {
        for (std::size_t t = 0; t < L; ++t) {
          const T* row = c.att.data() + cache.att_offsets[sq] + (h * L + t) * L;
          const T* dy = d_y.data() + (base + t) * d + h * hd;
          const std::size_t span_end = cfg_.causal ? t + 1 : L;
          T weighted = 0;
          for (std::size_t u = 0; u < span_end; ++u) {
            d_att[u] = kn::dot(dy, qkv + u * 3 * d + 2 * d + h * hd, hd);
            weighted += row[u] * d_att[u];
            kn::axpy(row[u], dy, dqkv + u * 3 * d + 2 * d + h * hd, hd);
          }
          const T* q = qkv + t * 3 * d + h * hd;
          T* dq = dqkv + t * 3 * d + h * hd;
          for (std::size_t u = 0; u < span_end; ++u) {
            const T ds = row[u] * (d_att[u] - weighted) * scale;
            kn::axpy(ds, qkv + u * 3 * d + d + h * hd, dq, hd);
            kn::axpy(ds, q, dqkv + u * 3 * d + d + h * hd, hd);
          }
        }
      }
    }
    std::fill(d_ln.begin(), d_ln.end(), T(0));
    kn::matmul_nn_acc(d_qkv.data(), store.data(s.w_qkv), d_ln.data(), R, 3 * d, d);
    kn::matmul_tn_acc(d_qkv.data(), c.ln1.data(), g(s.w_qkv), R, 3 * d, d);
    bias_grad(d_qkv.data(), g(s.b_qkv), R, 3 * d);
    // dx becomes d(input)
    layernorm_backward(c.input.data(), store.data(s.ln1_g), c.ln1_mean.data(), c.ln1_rstd.data(),
                       d_ln.data(), dx.data(), g(s.ln1_g), g(s.ln1_b), R, d);
  }

  T* gwte = g(wte_);
  T* gwpe = g(wpe_);
  for (std::size_t sq = 0; sq < cache.sequences(); ++sq)
    for (std::size_t r = cache.offsets[sq]; r < cache.offsets[sq + 1]; ++r) {
      const std::size_t pos = r - cache.offsets[sq];
      kn::axpy(T(1), dx.data() + r * d, gwte + static_cast<std::size_t>(cache.tokens[r]) * d, d);
      kn::axpy(T(1), dx.data() + r * d, gwpe + pos * d, d);
    }
}

// ---------------------------------------------------------------------------

template <class T>
MlpHead<T>::MlpHead(std::size_t d_in, std::size_t d_out, ParamStore<T>& store,
                    const std::string& prefix)
    : d_in_(d_in), d_out_(d_out) {
  w1_ = store.add(prefix + "w1", {d_in, d_in});
  b1_ = store.add(prefix + "b1", {d_in});
  w2_ = store.add(prefix + "w2", {d_out, d_in});
  b2_ = store.add(prefix + "b2", {d_out});
}

template <class T>
void MlpHead<T>::init(ParamStore<T>& store, Rng& rng, bool zero_output) const {
  fill_normal(store.view(w1_), rng, 0.02);
  std::fill(store.view(b1_).begin(), store.view(b1_).end(), T(0));
  if (zero_output)
    std::fill(store.view(w2_).begin(), store.view(w2_).end(), T(0));
  else
    fill_normal(store.view(w2_), rng, 0.02);
  std::fill(store.view(b2_).begin(), store.view(b2_).end(), T(0));
}

template <class T>
void MlpHead<T>::hidden(const ParamStore<T>& store, std::span<const T> h, Cache& cache) const {
  cache.h.assign(h.begin(), h.end());
  cache.z.resize(d_in_);
  kn::matmul_nt(h.data(), store.data(w1_), cache.z.data(), 1, d_in_, d_in_);
  const T* b1 = store.data(b1_);
  cache.g.resize(d_in_);
  for (std::size_t i = 0; i < d_in_; ++i) {
    cache.z[i] += b1[i];
    cache.g[i] = gelu(cache.z[i]);
  }
}

template <class T>
T MlpHead<T>::output(const ParamStore<T>& store, const Cache& cache, std::size_t index) const {
  return kn::dot(store.data(w2_) + index * d_in_, cache.g.data(), d_in_) + store.data(b2_)[index];
}

template <class T>
void MlpHead<T>::output_all(const ParamStore<T>& store, const Cache& cache,
                            std::span<T> out) const {
  kn::matmul_nt(cache.g.data(), store.data(w2_), out.data(), 1, d_out_, d_in_);
  const T* b2 = store.data(b2_);
  for (std::size_t i = 0; i < d_out_; ++i) out[i] += b2[i];
}

template <class T>
void MlpHead<T>::backward_one(const ParamStore<T>& store, const Cache& cache, std::size_t index,
                              T d_out, Grad<T>& grad, std::span<T> d_h) const {
  auto g = [&](std::size_t slot) { return grad.data() + store.slot(slot).offset; };
  kn::axpy(d_out, cache.g.data(), g(w2_) + index * d_in_, d_in_);
  g(b2_)[index] += d_out;
  std::vector<T> dz(d_in_);
  const T* w2 = store.data(w2_) + index * d_in_;
  for (std::size_t i = 0; i < d_in_; ++i) dz[i] = d_out * w2[i] * gelu_grad(cache.z[i]);
  kn::matmul_tn_acc(dz.data(), cache.h.data(), g(w1_), 1, d_in_, d_in_);
  T* gb1 = g(b1_);
  for (std::size_t i = 0; i < d_in_; ++i) gb1[i] += dz[i];
  kn::matmul_nn_acc(dz.data(), store.data(w1_), d_h.data(), 1, d_in_, d_in_);
}

template class Trunk<float>;
template class Trunk<double>;
template class MlpHead<float>;
template class MlpHead<double>;
template float gelu(float);
template double gelu(double);
template float gelu_grad(float);
template double gelu_grad(double);
template void log_softmax(std::span<float>);
template void log_softmax(std::span<double>);

}  // namespace enlg
