#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/model/planner.hpp"

namespace pathweaver::decoding {

using corpus::TokenId;

enum class Slot { kExpectA, kExpectAction, kExpectT, kExpectTopic, kMayEnd, kDone };

// Tracks ([A] action [T] topic)+ EOS. After max_pairs pairs only EOS is
// admissible.
class GrammarState {
 public:
  explicit GrammarState(std::size_t max_pairs) : max_pairs_(max_pairs) {}

  Slot slot() const noexcept { return slot_; }
  std::size_t pairs_emitted() const noexcept { return pairs_; }
  bool done() const noexcept { return slot_ == Slot::kDone; }

  bool admits(TokenId id, const corpus::Vocabulary& vocab) const;
  // The unique admissible token, if the slot leaves no choice.
  std::optional<TokenId> forced() const;
  // Throws ContractError for an inadmissible token.
  void advance(TokenId id, const corpus::Vocabulary& vocab);
  // Sets inadmissible entries of one logits row to -inf.
  void mask(num::Real* logits, const corpus::Vocabulary& vocab) const;

 private:
  Slot slot_ = Slot::kExpectA;
  std::size_t pairs_ = 0;
  std::size_t max_pairs_;
};

struct DecodeResult {
  std::vector<TokenId> tokens;  // emitted labels, EOS included when reached
  num::Var states;              // [tokens.size() x hidden]
  std::size_t steps = 0;        // content decisions: actions, topics, final EOS
  std::size_t model_calls = 0;
  bool ended_with_eos = false;
};

// Greedy argmax decoding. Constrained: grammar-masked, forced tokens are
// emitted without a model call, at most 2*max_pairs+1 steps. Unconstrained:
// stops at EOS or after 4*max_pairs+1 tokens.
DecodeResult greedy_decode(const num::TransformerDecoder& decoder, const planner::OutputHead& head,
                           const planner::PlannerModel& model, const encoder::Memory& memory, bool constrained,
                           std::size_t max_pairs);

// Grammar-masked argmax over the rows of `logits`, one position at a time.
// Stops at EOS; a trailing incomplete pair is dropped.
struct PositionwiseResult {
  corpus::DialoguePath path;
  bool truncated = false;  // positions ran out before EOS
};
PositionwiseResult positionwise_argmax(const num::Tensor& logits, const corpus::Vocabulary& vocab,
                                       std::size_t max_pairs);

struct PlanOptions {
  bool constrained = true;
  bool target_forcing = false;
  std::optional<std::size_t> max_pairs;  // defaults to the model's
};

struct PlanResult {
  corpus::DialoguePath final_path;
  corpus::DialoguePath forward_path;
  corpus::DialoguePath backward_path;  // forward order
  nlohmann::json diagnostics;
  num::Tensor fusion_logits;  // per position, fused order
};

nlohmann::json to_json(const PlanResult& r);

// Forward decode, backward decode, alignment, fusion, positionwise argmax.
// Throws DataError when the target pair is not in the vocabulary.
PlanResult plan(const planner::PlannerModel& model, const encoder::PlanningInput& input, const PlanOptions& options);

// Pair at min(turn_index, len - 1). Throws ContractError on an empty plan.
corpus::PathPair next_subtarget(const PlanResult& plan, std::size_t turn_index);

}  // namespace pathweaver::decoding
