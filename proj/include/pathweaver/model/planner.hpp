#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/path_grammar.hpp"
#include "pathweaver/model/encoder.hpp"

namespace pathweaver::planner {

using corpus::TokenId;
using encoder::Memory;
using num::Var;

// FF: forward-focused fusion. OF/OB: forward or backward path only.
// BF: backward-focused fusion. NO_FF: plain MLP merge without gating.
enum class Variant { kFF, kOF, kOB, kBF, kNoFF };

const char* to_string(Variant v);
// Accepts "ff", "of", "ob", "bf", "no-ff" (case-insensitive, '_' or '-').
Variant variant_from_string(const std::string& s);

struct PlannerConfig {
  std::size_t hidden_dim = 64;
  std::size_t n_decoder_layers = 2;
  std::size_t n_heads = 4;
  Variant variant = Variant::kFF;
  std::size_t max_pairs = corpus::kDefaultMaxPairs;
  bool tie_output_embeddings = true;
  std::size_t ffn_dim = 128;

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const PlannerConfig& c);
void from_json(const nlohmann::json& j, PlannerConfig& c);

struct FusionParams {
  num::Linear mlp_in;   // 2h -> 2h
  num::Linear mlp_out;  // 2h -> h
  num::Linear gate;     // h -> h

  FusionParams() = default;
  FusionParams(num::ParameterStore& store, const std::string& name, std::size_t hidden, num::Rng& rng);
};

// Vocabulary projection. Tied heads own only a bias and reuse the transposed
// token embedding matrix.
struct OutputHead {
  num::Linear projection;  // untied only
  Var bias;                // tied only

  OutputHead() = default;
  OutputHead(num::ParameterStore& store, const std::string& name, std::size_t hidden, std::size_t vocab,
             bool tied, num::Rng& rng);
};

// All learnable state of the planner. Forward and backward decoders have the
// same architecture and independent weights.
class PlannerModel {
 public:
  PlannerModel(encoder::EncoderConfig enc_cfg, PlannerConfig plan_cfg, corpus::Vocabulary vocab,
               std::uint64_t seed);

  PlannerModel(const PlannerModel&) = delete;
  PlannerModel& operator=(const PlannerModel&) = delete;

  const encoder::EncoderConfig& encoder_config() const { return enc_cfg_; }
  const PlannerConfig& config() const { return plan_cfg_; }
  PlannerConfig& mutable_config() { return plan_cfg_; }
  const corpus::Vocabulary& vocab() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }

  num::ParameterStore& params() { return store_; }
  const num::ParameterStore& params() const { return store_; }

  encoder::Embeddings embeddings;
  encoder::EncoderParams encoders;
  num::TransformerDecoder forward_decoder;
  num::TransformerDecoder backward_decoder;
  FusionParams fusion;
  OutputHead forward_head, backward_head, fusion_head;

  Memory encode(const encoder::PlanningInput& in, num::Rng* dropout_rng = nullptr) const;

 private:
  encoder::EncoderConfig enc_cfg_;
  PlannerConfig plan_cfg_;
  corpus::Vocabulary vocab_;
  std::uint64_t seed_;
  num::ParameterStore store_;
};

// Teacher-forced decoder input: BOS followed by all but the last label token.
std::vector<TokenId> shift_right(const std::vector<TokenId>& labels);

// Per-position hidden states of `decoder` over `input_tokens` (must start
// with BOS), attending causally to itself and fully to the memory.
Var decode_states(const num::TransformerDecoder& decoder, const Memory& memory,
                  const std::vector<TokenId>& input_tokens, const encoder::Embeddings& emb,
                  double dropout = 0, num::Rng* rng = nullptr);

struct Alignment {
  std::vector<std::int64_t> index;  // output row -> source row, -1 = zero pad
  bool fallback = false;            // source did not parse; whole-sequence reversal used
};

// Reorders backward-order positions into forward order by reversing
// ([A] a [T] t) blocks, keeping the EOS position last, then pads with zero
// rows or truncates to `target_len`. The map is its own inverse on
// equal-length well-formed sequences, so it also aligns forward to backward.
Alignment block_reversal(const std::vector<TokenId>& source_labels, std::size_t target_len,
                         const corpus::Vocabulary& vocab);
Var align_backward(const Var& backward_states, const std::vector<TokenId>& backward_labels, std::size_t forward_len,
                   const corpus::Vocabulary& vocab, bool* fallback = nullptr);

// Intermediate quantities of one fusion, for inspection.
struct FusionTrace {
  Var weight;   // sigmoid(gate(primary))
  Var convex;   // primary*w + secondary*(1-w)
  Var mlp;      // MLP([primary; secondary])
};

// O = sigmoid(F'') * F'' + (1 - sigmoid(F'')) * F', with
// F'' = MLP([F_f; F_b]), F' = F_f * W + F_b * (1 - W), W = sigmoid(gate(F_f)).
// All products elementwise. Throws ContractError on a shape mismatch.
Var fuse_forward_focused(const Var& f_forward, const Var& f_backward, const FusionParams& fusion,
                         FusionTrace* trace = nullptr);
Var fuse_variant(Variant variant, const Var& f_forward, const Var& f_backward, const FusionParams& fusion);

Var project_logits(const Var& states, const OutputHead& head, const encoder::Embeddings& emb, bool tied);

// Everything a teacher-forced pass produces.
struct TeacherForced {
  std::vector<TokenId> forward_labels;
  std::vector<TokenId> backward_labels;
  Var forward_states;          // F_f
  Var backward_states;         // F_b, backward order
  Var backward_aligned;        // F_b in forward order
  Var fused;                   // fusion output, forward order (backward order for BF)
  std::vector<TokenId> fused_labels;
  Var forward_logits, backward_logits, fused_logits;
};

TeacherForced teacher_forced(const PlannerModel& model, const Memory& memory, const corpus::DialoguePath& gold,
                             num::Rng* dropout_rng = nullptr);

}  // namespace pathweaver::planner
