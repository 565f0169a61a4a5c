#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pathweaver/numcore/ops.hpp"

namespace pathweaver::num {

// Ordered, named collection of trainable leaves. Order is registration order
// and is what checkpoints and the optimizer iterate over.
class ParameterStore {
 public:
  struct Entry {
    std::string name;
    Var var;
  };

  Var add(const std::string& name, Tensor init);
  const Var& get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  std::vector<Entry>& entries() noexcept { return entries_; }
  std::size_t scalar_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
};

// Glorot/Xavier uniform: U(-a, a), a = sqrt(6 / (fan_in + fan_out)).
Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng);

// Fixed sinusoidal position table [max_len x dim].
Tensor sinusoidal_positions(std::size_t max_len, std::size_t dim);

struct Linear {
  Var weight;  // [in x out]
  Var bias;    // [1 x out]

  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng);
  Var operator()(const Var& x) const { return linear(x, weight, bias); }
};

struct LayerNorm {
  Var gain;
  Var bias;

  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim);
  Var operator()(const Var& x) const { return layer_norm(x, gain, bias); }
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                     Rng& rng);
  Var operator()(const Var& queries, const Var& keys_values, bool causal,
                 const std::vector<std::uint8_t>* key_mask = nullptr,
                 std::vector<Tensor>* probe = nullptr) const;
};

struct FeedForward {
  Linear up, down;

  FeedForward() = default;
  FeedForward(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t inner, Rng& rng);
  Var operator()(const Var& x) const { return down(gelu(up(x))); }
};

// Pre-norm encoder block: x + SelfAttn(LN(x)), then x + FFN(LN(x)).
struct EncoderLayer {
  LayerNorm norm_attn, norm_ffn;
  MultiHeadAttention self_attn;
  FeedForward ffn;

  EncoderLayer() = default;
  EncoderLayer(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
               std::size_t inner, Rng& rng);
  Var operator()(const Var& x, const std::vector<std::uint8_t>* mask, Real dropout_p, Rng* rng) const;
};

// Pre-norm decoder block: causal self-attention, cross-attention over memory,
// feed-forward.
struct DecoderLayer {
  LayerNorm norm_self, norm_cross, norm_ffn;
  MultiHeadAttention self_attn, cross_attn;
  FeedForward ffn;

  DecoderLayer() = default;
  DecoderLayer(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
               std::size_t inner, Rng& rng);
  Var operator()(const Var& x, const Var& memory, const std::vector<std::uint8_t>* memory_mask,
                 Real dropout_p, Rng* rng) const;
};

struct TransformerEncoder {
  std::vector<EncoderLayer> layers;
  LayerNorm final_norm;

  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore& store, const std::string& name, std::size_t n_layers, std::size_t dim,
                     std::size_t heads, std::size_t inner, Rng& rng);
  Var operator()(const Var& x, const std::vector<std::uint8_t>* mask = nullptr, Real dropout_p = 0,
                 Rng* rng = nullptr) const;
};

struct TransformerDecoder {
  std::vector<DecoderLayer> layers;
  LayerNorm final_norm;

  TransformerDecoder() = default;
  TransformerDecoder(ParameterStore& store, const std::string& name, std::size_t n_layers, std::size_t dim,
                     std::size_t heads, std::size_t inner, Rng& rng);
  Var operator()(const Var& x, const Var& memory, const std::vector<std::uint8_t>* memory_mask = nullptr,
                 Real dropout_p = 0, Rng* rng = nullptr) const;
};

}  // namespace pathweaver::num
