#include "pathweaver/model/planner.hpp"

#include <algorithm>
#include <cctype>

#include "pathweaver/error.hpp"
#include "pathweaver/numcore/kernels.hpp"

namespace pathweaver::planner {

using corpus::Vocabulary;
using num::Tensor;

const char* to_string(Variant v) {
  switch (v) {
    case Variant::kFF:
      return "FF";
    case Variant::kOF:
      return "OF";
    case Variant::kOB:
      return "OB";
    case Variant::kBF:
      return "BF";
    case Variant::kNoFF:
      return "NO_FF";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  std::string k;
  for (char c : s) k += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (k == "FF") return Variant::kFF;
  if (k == "OF") return Variant::kOF;
  if (k == "OB") return Variant::kOB;
  if (k == "BF") return Variant::kBF;
  if (k == "NO_FF" || k == "NOFF") return Variant::kNoFF;
  throw ConfigError("unknown planner variant '" + s + "'");
}

void PlannerConfig::validate() const {
  if (n_decoder_layers < 1) throw ConfigError("planner: n_decoder_layers must be >= 1");
  if (max_pairs < 1) throw ConfigError("planner: max_pairs must be >= 1");
  if (hidden_dim == 0 || n_heads == 0 || hidden_dim % n_heads != 0) {
    throw ConfigError("planner: hidden_dim must be a positive multiple of n_heads");
  }
  if (ffn_dim == 0) throw ConfigError("planner: ffn_dim must be positive");
}

void to_json(nlohmann::json& j, const PlannerConfig& c) {
  j = nlohmann::json{{"hidden_dim", c.hidden_dim},
                     {"n_decoder_layers", c.n_decoder_layers},
                     {"n_heads", c.n_heads},
                     {"variant", to_string(c.variant)},
                     {"max_pairs", c.max_pairs},
                     {"tie_output_embeddings", c.tie_output_embeddings},
                     {"ffn_dim", c.ffn_dim}};
}

void from_json(const nlohmann::json& j, PlannerConfig& c) {
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.n_decoder_layers = j.value("n_decoder_layers", c.n_decoder_layers);
  c.n_heads = j.value("n_heads", c.n_heads);
  if (j.contains("variant")) c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.max_pairs = j.value("max_pairs", c.max_pairs);
  c.tie_output_embeddings = j.value("tie_output_embeddings", c.tie_output_embeddings);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
}

FusionParams::FusionParams(num::ParameterStore& store, const std::string& name, std::size_t hidden, num::Rng& rng)
    : mlp_in(store, name + ".mlp_in", 2 * hidden, 2 * hidden, rng),
      mlp_out(store, name + ".mlp_out", 2 * hidden, hidden, rng),
      gate(store, name + ".gate", hidden, hidden, rng) {}

OutputHead::OutputHead(num::ParameterStore& store, const std::string& name, std::size_t hidden, std::size_t vocab,
                       bool tied, num::Rng& rng) {
  if (tied) {
    bias = store.add(name + ".bias", Tensor::zeros(1, vocab));
  } else {
    projection = num::Linear(store, name, hidden, vocab, rng);
  }
}

namespace {

std::size_t position_capacity(const encoder::EncoderConfig& e, const PlannerConfig& p) {
  return std::max({3 * e.max_knowledge_items, e.max_seq_len, 4 * p.max_pairs + 2, std::size_t{8}});
}

}  // namespace

PlannerModel::PlannerModel(encoder::EncoderConfig enc_cfg, PlannerConfig plan_cfg, corpus::Vocabulary vocab,
                           std::uint64_t seed)
    : enc_cfg_(enc_cfg), plan_cfg_(plan_cfg), vocab_(std::move(vocab)), seed_(seed) {
  enc_cfg_.validate();
  plan_cfg_.validate();
  if (enc_cfg_.hidden_dim != plan_cfg_.hidden_dim) throw ConfigError("encoder and planner hidden_dim differ");
  num::Rng rng(seed);
  const std::size_t h = plan_cfg_.hidden_dim;
  embeddings = encoder::Embeddings(store_, vocab_.size(), enc_cfg_, position_capacity(enc_cfg_, plan_cfg_), rng);
  encoders = encoder::EncoderParams(store_, enc_cfg_, rng);
  forward_decoder = num::TransformerDecoder(store_, "decoder.forward", plan_cfg_.n_decoder_layers, h,
                                            plan_cfg_.n_heads, plan_cfg_.ffn_dim, rng);
  backward_decoder = num::TransformerDecoder(store_, "decoder.backward", plan_cfg_.n_decoder_layers, h,
                                             plan_cfg_.n_heads, plan_cfg_.ffn_dim, rng);
  fusion = FusionParams(store_, "fusion", h, rng);
  const bool tied = plan_cfg_.tie_output_embeddings;
  forward_head = OutputHead(store_, "head.forward", h, vocab_.size(), tied, rng);
  backward_head = OutputHead(store_, "head.backward", h, vocab_.size(), tied, rng);
  fusion_head = OutputHead(store_, "head.fusion", h, vocab_.size(), tied, rng);
}

Memory PlannerModel::encode(const encoder::PlanningInput& in, num::Rng* dropout_rng) const {
  return encoder::encode_context(in, encoders, embeddings, vocab_, enc_cfg_, dropout_rng);
}

std::vector<TokenId> shift_right(const std::vector<TokenId>& labels) {
  std::vector<TokenId> in;
  in.reserve(labels.size());
  in.push_back(Vocabulary::kBos);
  if (!labels.empty()) in.insert(in.end(), labels.begin(), labels.end() - 1);
  return in;
}

Var decode_states(const num::TransformerDecoder& decoder, const Memory& memory,
                  const std::vector<TokenId>& input_tokens, const encoder::Embeddings& emb, double dropout,
                  num::Rng* rng) {
  if (input_tokens.empty() || input_tokens.front() != Vocabulary::kBos) {
    throw ContractError("decoder input must begin with BOS");
  }
  Var x = encoder::embed_tokens(input_tokens, emb);
  return decoder(x, memory.states, &memory.mask, static_cast<num::Real>(dropout), rng);
}

Alignment block_reversal(const std::vector<TokenId>& source_labels, std::size_t target_len,
                         const Vocabulary& vocab) {
  Alignment a;
  std::vector<std::int64_t> order;
  bool parsed = true;
  try {
    (void)corpus::tokens_to_path(source_labels, vocab);
  } catch (const ParseError&) {
    parsed = false;
  }
  const std::size_t n = source_labels.size();
  if (parsed) {
    const std::size_t blocks = (n - 1) / 4;
    for (std::size_t b = blocks; b-- > 0;) {
      for (std::size_t r = 0; r < 4; ++r) order.push_back(static_cast<std::int64_t>(4 * b + r));
    }
    order.push_back(static_cast<std::int64_t>(n - 1));
  } else {
    a.fallback = true;
    for (std::size_t i = n; i-- > 0;) order.push_back(static_cast<std::int64_t>(i));
  }
  order.resize(target_len, -1);
  a.index = std::move(order);
  return a;
}

Var align_backward(const Var& backward_states, const std::vector<TokenId>& backward_labels, std::size_t forward_len,
                   const Vocabulary& vocab, bool* fallback) {
  if (backward_states.rows() != backward_labels.size()) {
    throw DimensionError("align_backward: states and labels differ in length");
  }
  auto a = block_reversal(backward_labels, forward_len, vocab);
  if (fallback) *fallback = a.fallback;
  return num::gather_rows(backward_states, a.index);
}

Var fuse_forward_focused(const Var& f_forward, const Var& f_backward, const FusionParams& fusion,
                         FusionTrace* trace) {
  if (!f_forward.value().same_shape(f_backward.value())) {
    throw ContractError("fusion: forward and backward representations differ in shape");
  }
  Var weight = num::sigmoid(fusion.gate(f_forward));
  // Written as b + w*(f - b): equal inputs come back bit-exact and the
  // result stays inside [min(f, b), max(f, b)] under rounding.
  Var convex = num::add(f_backward, num::mul(weight, num::sub(f_forward, f_backward)));
  Var mlp = fusion.mlp_out(num::relu(fusion.mlp_in(num::concat_cols(f_forward, f_backward))));
  Var g = num::sigmoid(mlp);
  Var out = num::add(convex, num::mul(g, num::sub(mlp, convex)));
  if (trace) *trace = {weight, convex, mlp};
  return out;
}

Var fuse_variant(Variant variant, const Var& f_forward, const Var& f_backward, const FusionParams& fusion) {
  if (!f_forward.value().same_shape(f_backward.value())) {
    throw ContractError("fusion: forward and backward representations differ in shape");
  }
  switch (variant) {
    case Variant::kFF:
      return fuse_forward_focused(f_forward, f_backward, fusion);
    case Variant::kOF:
      return f_forward;
    case Variant::kOB:
      return f_backward;
    case Variant::kBF:
      return fuse_forward_focused(f_backward, f_forward, fusion);
    case Variant::kNoFF:
      return fusion.mlp_out(num::relu(fusion.mlp_in(num::concat_cols(f_forward, f_backward))));
  }
  throw ContractError("unknown variant");
}

Var project_logits(const Var& states, const OutputHead& head, const encoder::Embeddings& emb, bool tied) {
  if (!tied) return head.projection(states);
  if (states.cols() != emb.tokens.cols()) throw DimensionError("project_logits: hidden size mismatch");
  // logits = states * E^T + b, computed as (E * states^T)^T via matmul_nt.
  const std::size_t n = states.rows(), h = states.cols(), v = emb.tokens.rows();
  Tensor out(n, v);
  for (std::size_t i = 0; i < n; ++i) std::copy(head.bias.value().data(), head.bias.value().data() + v, out.row(i));
  num::kernels::matmul_nt(states.value().data(), emb.tokens.value().data(), out.data(), n, h, v, true);
  return num::detail::make_result(std::move(out), {states, emb.tokens, head.bias}, [n, h, v](num::Node& self) {
    num::Node& ps = *self.parents[0];
    num::Node& pe = *self.parents[1];
    num::Node& pb = *self.parents[2];
    if (ps.requires_grad) num::kernels::matmul_nn(self.grad.data(), pe.value.data(), ps.grad_buffer().data(), n, v, h, true);
    if (pe.requires_grad) num::kernels::matmul_tn(self.grad.data(), ps.value.data(), pe.grad_buffer().data(), v, n, h, true);
    if (pb.requires_grad) {
      num::Real* gb = pb.grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) {
        const num::Real* g = self.grad.row(i);
        for (std::size_t j = 0; j < v; ++j) gb[j] += g[j];
      }
    }
  });
}

TeacherForced teacher_forced(const PlannerModel& model, const Memory& memory, const corpus::DialoguePath& gold,
                             num::Rng* dropout_rng) {
  const auto& vocab = model.vocab();
  const auto& cfg = model.config();
  const bool tied = cfg.tie_output_embeddings;
  const double p = dropout_rng ? model.encoder_config().dropout : 0.0;
  TeacherForced tf;
  tf.forward_labels = corpus::path_to_tokens(gold, vocab);
  tf.backward_labels = corpus::path_to_tokens(corpus::reversed(gold), vocab);
  tf.forward_states = decode_states(model.forward_decoder, memory, shift_right(tf.forward_labels), model.embeddings,
                                    p, dropout_rng);
  tf.backward_states = decode_states(model.backward_decoder, memory, shift_right(tf.backward_labels),
                                     model.embeddings, p, dropout_rng);
  tf.backward_aligned = align_backward(tf.backward_states, tf.backward_labels, tf.forward_labels.size(), vocab);
  if (cfg.variant == Variant::kBF) {
    Var forward_in_backward_order =
        align_backward(tf.forward_states, tf.forward_labels, tf.backward_labels.size(), vocab);
    tf.fused = fuse_variant(Variant::kBF, forward_in_backward_order, tf.backward_states, model.fusion);
    tf.fused_labels = tf.backward_labels;
  } else {
    tf.fused = fuse_variant(cfg.variant, tf.forward_states, tf.backward_aligned, model.fusion);
    tf.fused_labels = tf.forward_labels;
  }
  tf.forward_logits = project_logits(tf.forward_states, model.forward_head, model.embeddings, tied);
  tf.backward_logits = project_logits(tf.backward_states, model.backward_head, model.embeddings, tied);
  tf.fused_logits = project_logits(tf.fused, model.fusion_head, model.embeddings, tied);
  return tf;
}

}  // namespace pathweaver::planner
