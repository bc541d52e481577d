#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "enlg/params.hpp"
#include "enlg/rng.hpp"
#include "enlg/tokenizer.hpp"

namespace enlg {

struct TrunkConfig {
  std::size_t vocab_size = 0;
  std::size_t d_model = 128;
  std::size_t n_heads = 4;
  std::size_t n_layers = 2;
  std::size_t context_len = 128;
  double dropout = 0.0;
  bool causal = true;
};

/// Activations kept by Trunk::forward for the backward pass.
template <class T>
struct TrunkCache {
  struct Layer {
    std::vector<T> input;                 // L x d
    std::vector<T> ln1, ln1_mean, ln1_rstd;
    std::vector<T> qkv;                   // L x 3d
    std::vector<T> att;                   // H x L x L, softmax probabilities
    std::vector<T> attn_y;                // L x d, heads concatenated
    std::vector<T> attn_mask;             // dropout mask on the attention output (empty if off)
    std::vector<T> resid_mid;             // L x d
    std::vector<T> ln2, ln2_mean, ln2_rstd;
    std::vector<T> fc;                    // L x 4d, pre-activation
    std::vector<T> fc_tanh;               // tanh term of GELU, reused by backward
    std::vector<T> act;                   // L x 4d
    std::vector<T> mlp_mask;
  };
  TokenSequence tokens;                   // all sequences concatenated
  std::vector<std::size_t> offsets;       // sequence starts, plus the total row count
  std::vector<std::size_t> att_offsets;   // start of each sequence's H x L x L block
  std::vector<Layer> layers;
  std::vector<T> final_input;             // L x d
  std::vector<T> out, out_mean, out_rstd;  // final layer norm
  std::size_t rows() const { return tokens.size(); }
  std::size_t sequences() const { return offsets.empty() ? 0 : offsets.size() - 1; }
  std::size_t row(std::size_t seq, std::size_t pos) const { return offsets[seq] + pos; }
  std::size_t length(std::size_t seq) const { return offsets[seq + 1] - offsets[seq]; }
};

/// Pre-LayerNorm transformer encoder over token ids with learned absolute
/// positions. Causal or bidirectional depending on the config. Holds slot
/// indices only; parameters live in the caller's ParamStore.
template <class T>
class Trunk {
 public:
  Trunk() = default;
  Trunk(const TrunkConfig& cfg, ParamStore<T>& store, const std::string& prefix);

  const TrunkConfig& config() const { return cfg_; }

  /// Scaled-normal (0.02) weights, unit LayerNorm gains, zero biases.
  void init(ParamStore<T>& store, Rng& rng) const;

  /// Runs a packed batch: sequences are concatenated row-wise and attend only
  /// within themselves. Throws LengthError if a sequence is empty or exceeds
  /// the context, RangeError for bad ids. Returns the final-LayerNorm output
  /// (rows x d), also kept in cache.out. `dropout_rng` enables dropout when the
  /// config rate is positive.
  const std::vector<T>& forward(const ParamStore<T>& store, std::span<const TokenSequence> batch,
                                TrunkCache<T>& cache, Rng* dropout_rng = nullptr) const;
  const std::vector<T>& forward(const ParamStore<T>& store, std::span<const TokenId> tokens,
                                TrunkCache<T>& cache, Rng* dropout_rng = nullptr) const;

  /// Accumulates parameter gradients from d(loss)/d(output) (rows x d).
  void backward(const ParamStore<T>& store, const TrunkCache<T>& cache,
                std::span<const T> d_out, Grad<T>& grad) const;

  /// Slot indices covered by this trunk (for optimizer masks).
  std::vector<std::size_t> slots() const;

 private:
  struct LayerSlots {
    std::size_t ln1_g, ln1_b, w_qkv, b_qkv, w_o, b_o, ln2_g, ln2_b, w_fc, b_fc, w_proj, b_proj;
  };
  TrunkConfig cfg_;
  std::size_t wte_ = 0, wpe_ = 0, lnf_g_ = 0, lnf_b_ = 0;
  std::vector<LayerSlots> layers_;
};

/// Two-layer head: out = W2 gelu(W1 h + b1) + b2. W2/b2 may be zero-initialized
/// so the head starts at exactly zero output.
template <class T>
class MlpHead {
 public:
  struct Cache {
    std::vector<T> h, z, g;
  };

  MlpHead() = default;
  MlpHead(std::size_t d_in, std::size_t d_out, ParamStore<T>& store, const std::string& prefix);

  void init(ParamStore<T>& store, Rng& rng, bool zero_output) const;
  void hidden(const ParamStore<T>& store, std::span<const T> h, Cache& cache) const;
  T output(const ParamStore<T>& store, const Cache& cache, std::size_t index) const;
  void output_all(const ParamStore<T>& store, const Cache& cache, std::span<T> out) const;
  /// Backward for a gradient on a single output component.
  void backward_one(const ParamStore<T>& store, const Cache& cache, std::size_t index, T d_out,
                    Grad<T>& grad, std::span<T> d_h) const;
  std::vector<std::size_t> slots() const { return {w1_, b1_, w2_, b2_}; }
  std::size_t d_out() const { return d_out_; }

 private:
  std::size_t d_in_ = 0, d_out_ = 0;
  std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

// Shared numerics.
template <class T>
T gelu(T x);
template <class T>
T gelu_grad(T x);

/// Numerically stable log-softmax in place.
template <class T>
void log_softmax(std::span<T> x);

}  // namespace enlg
