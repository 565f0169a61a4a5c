#include "pathweaver/numcore/nn.hpp"

#include <cmath>

#include "pathweaver/error.hpp"

namespace pathweaver::num {

Var ParameterStore::add(const std::string& name, Tensor init) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Var v = leaf(std::move(init));
  entries_.push_back({name, v});
  return v;
}

const Var& ParameterStore::get(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e.var;
  }
  throw ContractError("unknown parameter '" + name + "'");
}

bool ParameterStore::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParameterStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.var.value().size();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& e : entries_) e.var.zero_grad();
}

Tensor xavier_uniform(std::size_t rows, std::size_t cols, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Tensor t(rows, cols);
  for (auto& x : t.values()) x = static_cast<Real>(rng.uniform(-a, a));
  return t;
}

Tensor sinusoidal_positions(std::size_t max_len, std::size_t dim) {
  Tensor t(max_len, dim);
  for (std::size_t pos = 0; pos < max_len; ++pos) {
    for (std::size_t i = 0; i < dim; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / static_cast<double>(dim));
      const double angle = static_cast<double>(pos) * freq;
      t(pos, i) = static_cast<Real>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return t;
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng)
    : weight(store.add(name + ".weight", xavier_uniform(in, out, rng))),
      bias(store.add(name + ".bias", Tensor::zeros(1, out))) {}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t dim)
    : gain(store.add(name + ".gain", Tensor::filled(1, dim, Real(1)))),
      bias(store.add(name + ".bias", Tensor::zeros(1, dim))) {}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& name, std::size_t dim,
                                       std::size_t n_heads, Rng& rng)
    : query(store, name + ".query", dim, dim, rng),
      key(store, name + ".key", dim, dim, rng),
      value(store, name + ".value", dim, dim, rng),
      output(store, name + ".output", dim, dim, rng),
      heads(n_heads) {
  if (n_heads == 0 || dim % n_heads != 0) throw ContractError("hidden dim must be divisible by head count");
}

Var MultiHeadAttention::operator()(const Var& queries, const Var& keys_values, bool causal,
                                   const std::vector<std::uint8_t>* key_mask, std::vector<Tensor>* probe) const {
  AttentionOptions opts;
  opts.heads = heads;
  opts.causal = causal;
  opts.key_mask = key_mask;
  opts.probe = probe;
  return output(attention(query(queries), key(keys_values), value(keys_values), opts));
}

FeedForward::FeedForward(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t inner,
                         Rng& rng)
    : up(store, name + ".up", dim, inner, rng), down(store, name + ".down", inner, dim, rng) {}

EncoderLayer::EncoderLayer(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                           std::size_t inner, Rng& rng)
    : norm_attn(store, name + ".norm_attn", dim),
      norm_ffn(store, name + ".norm_ffn", dim),
      self_attn(store, name + ".self_attn", dim, heads, rng),
      ffn(store, name + ".ffn", dim, inner, rng) {}

Var EncoderLayer::operator()(const Var& x, const std::vector<std::uint8_t>* mask, Real dropout_p, Rng* rng) const {
  Var h = norm_attn(x);
  Var a = self_attn(h, h, false, mask);
  if (rng) a = dropout(a, dropout_p, *rng);
  Var y = add(x, a);
  Var f = ffn(norm_ffn(y));
  if (rng) f = dropout(f, dropout_p, *rng);
  return add(y, f);
}

DecoderLayer::DecoderLayer(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t heads,
                           std::size_t inner, Rng& rng)
    : norm_self(store, name + ".norm_self", dim),
      norm_cross(store, name + ".norm_cross", dim),
      norm_ffn(store, name + ".norm_ffn", dim),
      self_attn(store, name + ".self_attn", dim, heads, rng),
      cross_attn(store, name + ".cross_attn", dim, heads, rng),
      ffn(store, name + ".ffn", dim, inner, rng) {}

Var DecoderLayer::operator()(const Var& x, const Var& memory, const std::vector<std::uint8_t>* memory_mask,
                             Real dropout_p, Rng* rng) const {
  Var h = norm_self(x);
  Var a = self_attn(h, h, true);
  if (rng) a = dropout(a, dropout_p, *rng);
  Var y = add(x, a);
  Var c = cross_attn(norm_cross(y), memory, false, memory_mask);
  if (rng) c = dropout(c, dropout_p, *rng);
  y = add(y, c);
  Var f = ffn(norm_ffn(y));
  if (rng) f = dropout(f, dropout_p, *rng);
  return add(y, f);
}

TransformerEncoder::TransformerEncoder(ParameterStore& store, const std::string& name, std::size_t n_layers,
                                       std::size_t dim, std::size_t heads, std::size_t inner, Rng& rng) {
  for (std::size_t i = 0; i < n_layers; ++i) {
    layers.emplace_back(store, name + ".layer" + std::to_string(i), dim, heads, inner, rng);
  }
  final_norm = LayerNorm(store, name + ".final_norm", dim);
}

Var TransformerEncoder::operator()(const Var& x, const std::vector<std::uint8_t>* mask, Real dropout_p,
                                   Rng* rng) const {
  Var h = x;
  for (const auto& layer : layers) h = layer(h, mask, dropout_p, rng);
  return final_norm(h);
}

TransformerDecoder::TransformerDecoder(ParameterStore& store, const std::string& name, std::size_t n_layers,
                                       std::size_t dim, std::size_t heads, std::size_t inner, Rng& rng) {
  for (std::size_t i = 0; i < n_layers; ++i) {
    layers.emplace_back(store, name + ".layer" + std::to_string(i), dim, heads, inner, rng);
  }
  final_norm = LayerNorm(store, name + ".final_norm", dim);
}

Var TransformerDecoder::operator()(const Var& x, const Var& memory, const std::vector<std::uint8_t>* memory_mask,
                                   Real dropout_p, Rng* rng) const {
  Var h = x;
  for (const auto& layer : layers) h = layer(h, memory, memory_mask, dropout_p, rng);
  return final_norm(h);
}

}  // namespace pathweaver::num
