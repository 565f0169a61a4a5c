#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/conversation.hpp"
#include "pathweaver/corpus/vocabulary.hpp"
#include "pathweaver/numcore/nn.hpp"

namespace pathweaver::encoder {

using corpus::TokenId;
using num::Var;

struct EncoderConfig {
  std::size_t hidden_dim = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t max_hops = 3;
  std::size_t max_knowledge_items = 32;
  std::size_t max_seq_len = 64;
  double dropout = 0.0;
  std::size_t ffn_dim = 128;

  void validate() const;  // throws ConfigError
};

void to_json(nlohmann::json& j, const EncoderConfig& c);
void from_json(const nlohmann::json& j, EncoderConfig& c);

enum class Segment : std::uint8_t { kKnowledge = 0, kProfile = 1, kHistory = 2, kTarget = 3 };
inline constexpr std::size_t kSegmentCount = 4;

// Shared memory both decoders attend to.
struct Memory {
  Var states;                      // [L_mem x hidden]
  std::vector<Segment> segments;   // one per position
  std::vector<std::uint8_t> mask;  // 1 = visible
  std::size_t size() const { return segments.size(); }
};

// Embedding tables shared by every encoder and both decoders.
struct Embeddings {
  Var tokens;            // [|V| x hidden]
  Var hops;              // [(max_hops + 1) x hidden]; last row = no hop ordering
  Var triple_slots;      // [3 x hidden]: nearer entity, relation, farther entity
  Var focus;             // [2 x hidden]: row 1 marks triples touching the current topic
  Var segments;          // [kSegmentCount x hidden]
  num::Tensor positions; // fixed sinusoidal table

  Embeddings() = default;
  Embeddings(num::ParameterStore& store, std::size_t vocab_size, const EncoderConfig& cfg, std::size_t max_len,
             num::Rng& rng);
};

// Knowledge-target mutual attention: one pre-norm cross-attention block per
// direction with a residual connection.
struct KtAttention {
  num::LayerNorm norm_knowledge, norm_target;
  num::MultiHeadAttention knowledge_from_target, target_from_knowledge;

  KtAttention() = default;
  KtAttention(num::ParameterStore& store, const std::string& name, const EncoderConfig& cfg, num::Rng& rng);
};

struct EncoderParams {
  num::TransformerEncoder knowledge, profile, history, target;
  KtAttention kt;

  EncoderParams() = default;
  EncoderParams(num::ParameterStore& store, const EncoderConfig& cfg, num::Rng& rng);
};

// Triples ordered by BFS hop distance from the target topic, each serialized
// as (nearer entity, relation, farther entity).
struct KnowledgeSequence {
  std::vector<TokenId> tokens;
  std::vector<std::size_t> hops;         // per token
  std::vector<std::uint8_t> slots;       // per token, 0..2
  std::vector<std::uint8_t> focus;       // per token, 1 if its triple contains the current topic
  std::vector<corpus::KnowledgeTriple> triples;
  std::vector<std::size_t> triple_hops;  // per kept triple
  bool hop_ordered = true;               // false when the target is absent from K
  bool degenerate = false;               // nothing kept: single PAD position
};

// hop(triple) = min over its endpoints of the BFS distance to the target
// topic. Kept: hop < max_hops, further limited to hop < dist(current) when
// `current_topic` is reachable. At most max_knowledge_items triples.
KnowledgeSequence serialize_knowledge(const std::vector<corpus::KnowledgeTriple>& knowledge,
                                      const std::string& target_topic,
                                      const std::optional<std::string>& current_topic,
                                      const corpus::Vocabulary& vocab, const EncoderConfig& cfg);

// Last topic token in the history that is also a knowledge entity.
std::optional<std::string> last_mentioned_topic(const std::vector<corpus::Turn>& history,
                                                const std::vector<corpus::KnowledgeTriple>& knowledge,
                                                const corpus::Vocabulary& vocab);

// Concatenated turn tokens, dropping the oldest turns first to fit
// max_seq_len. Empty history yields [BOS].
std::vector<TokenId> history_tokens(const std::vector<corpus::Turn>& history, const corpus::Vocabulary& vocab,
                                    std::size_t max_seq_len);
std::vector<TokenId> profile_tokens(const std::vector<std::pair<std::string, std::string>>& profile,
                                    const corpus::Vocabulary& vocab, std::size_t max_seq_len);
// [A] action [T] topic
std::vector<TokenId> target_tokens(const corpus::PathPair& target, const corpus::Vocabulary& vocab);

// sqrt(hidden)-scaled token embeddings plus positions: [len x hidden].
Var embed_tokens(const std::vector<TokenId>& tokens, const Embeddings& emb);

Var encode_knowledge(const KnowledgeSequence& ks, const num::TransformerEncoder& encoder, const Embeddings& emb,
                     double dropout = 0, num::Rng* rng = nullptr);
Var encode_sequence(const std::vector<TokenId>& tokens, const num::TransformerEncoder& encoder,
                    const Embeddings& emb, double dropout = 0, num::Rng* rng = nullptr);

struct KtResult {
  Var knowledge;
  Var target;
};
KtResult kt_mutual_attention(const Var& knowledge_states, const Var& target_states, const KtAttention& kt,
                             const std::vector<std::uint8_t>* knowledge_mask = nullptr,
                             std::vector<num::Tensor>* knowledge_probe = nullptr,
                             std::vector<num::Tensor>* target_probe = nullptr);

// Concatenates [K'; P; C; target'] and adds segment embeddings. Throws
// ContractError on a hidden-size mismatch.
Memory assemble_memory(const Var& knowledge, const std::vector<std::uint8_t>& knowledge_mask, const Var& profile,
                       const Var& history, const Var& target, const Embeddings& emb);

// Everything the planner conditions on for one decision point.
struct PlanningInput {
  const std::vector<corpus::KnowledgeTriple>* knowledge = nullptr;
  const std::vector<std::pair<std::string, std::string>>* profile = nullptr;
  const std::vector<corpus::Turn>* history = nullptr;
  corpus::PathPair target;
};

PlanningInput input_of(const corpus::PlanningExample& ex);

// Full encoder pipeline.
Memory encode_context(const PlanningInput& in, const EncoderParams& params, const Embeddings& emb,
                      const corpus::Vocabulary& vocab, const EncoderConfig& cfg, num::Rng* dropout_rng = nullptr);

}  // namespace pathweaver::encoder
