#include "pathweaver/decoding/decoding.hpp"

#include <algorithm>
#include <limits>

#include "pathweaver/error.hpp"

namespace pathweaver::decoding {

using corpus::TokenKind;
using corpus::Vocabulary;

bool GrammarState::admits(TokenId id, const Vocabulary& vocab) const {
  switch (slot_) {
    case Slot::kExpectA:
      return id == Vocabulary::kActionMarker;
    case Slot::kExpectAction:
      return vocab.kind(id) == TokenKind::kAction;
    case Slot::kExpectT:
      return id == Vocabulary::kTopicMarker;
    case Slot::kExpectTopic:
      return vocab.kind(id) == TokenKind::kTopic;
    case Slot::kMayEnd:
      return id == Vocabulary::kEos || (id == Vocabulary::kActionMarker && pairs_ < max_pairs_);
    case Slot::kDone:
      return false;
  }
  return false;
}

std::optional<TokenId> GrammarState::forced() const {
  switch (slot_) {
    case Slot::kExpectA:
      return Vocabulary::kActionMarker;
    case Slot::kExpectT:
      return Vocabulary::kTopicMarker;
    case Slot::kMayEnd:
      if (pairs_ >= max_pairs_) return Vocabulary::kEos;
      return std::nullopt;
    default:
      return std::nullopt;
  }
}

void GrammarState::advance(TokenId id, const Vocabulary& vocab) {
  if (!admits(id, vocab)) throw ContractError("grammar: token not admissible in the current slot");
  switch (slot_) {
    case Slot::kExpectA:
      slot_ = Slot::kExpectAction;
      break;
    case Slot::kExpectAction:
      slot_ = Slot::kExpectT;
      break;
    case Slot::kExpectT:
      slot_ = Slot::kExpectTopic;
      break;
    case Slot::kExpectTopic:
      ++pairs_;
      slot_ = Slot::kMayEnd;
      break;
    case Slot::kMayEnd:
      slot_ = id == Vocabulary::kEos ? Slot::kDone : Slot::kExpectAction;
      break;
    case Slot::kDone:
      break;
  }
}

void GrammarState::mask(num::Real* logits, const Vocabulary& vocab) const {
  const num::Real neg = -std::numeric_limits<num::Real>::infinity();
  for (std::size_t j = 0; j < vocab.size(); ++j) {
    if (!admits(static_cast<TokenId>(j), vocab)) logits[j] = neg;
  }
}

namespace {

TokenId argmax_row(const num::Real* row, std::size_t n) {
  return static_cast<TokenId>(std::max_element(row, row + n) - row);
}

}  // namespace

DecodeResult greedy_decode(const num::TransformerDecoder& decoder, const planner::OutputHead& head,
                           const planner::PlannerModel& model, const encoder::Memory& memory, bool constrained,
                           std::size_t max_pairs) {
  num::NoGradGuard no_grad;
  const auto& vocab = model.vocab();
  const bool tied = model.config().tie_output_embeddings;
  DecodeResult r;
  GrammarState grammar(max_pairs);
  std::vector<TokenId> input{Vocabulary::kBos};
  const std::size_t token_cap = 4 * max_pairs + 1;

  while (true) {
    TokenId next;
    auto forced = constrained ? grammar.forced() : std::nullopt;
    if (forced) {
      next = *forced;
    } else {
      num::Var states = planner::decode_states(decoder, memory, input, model.embeddings);
      num::Var last = num::slice_rows(states, states.rows() - 1, states.rows());
      num::Tensor logits = planner::project_logits(last, head, model.embeddings, tied).value();
      ++r.model_calls;
      if (constrained) grammar.mask(logits.data(), vocab);
      next = argmax_row(logits.data(), logits.cols());
    }
    if (constrained) {
      const Slot before = grammar.slot();
      grammar.advance(next, vocab);
      if (before == Slot::kExpectAction || before == Slot::kExpectTopic || next == Vocabulary::kEos) ++r.steps;
    } else {
      ++r.steps;
    }
    r.tokens.push_back(next);
    input.push_back(next);
    if (next == Vocabulary::kEos) {
      r.ended_with_eos = true;
      break;
    }
    if (!constrained && r.tokens.size() >= token_cap) break;
  }
  r.states = planner::decode_states(decoder, memory, planner::shift_right(r.tokens), model.embeddings);
  return r;
}

PositionwiseResult positionwise_argmax(const num::Tensor& logits, const Vocabulary& vocab, std::size_t max_pairs) {
  PositionwiseResult r;
  GrammarState grammar(max_pairs);
  std::vector<num::Real> row(logits.cols());
  std::string action;
  for (std::size_t i = 0; i < logits.rows() && !grammar.done(); ++i) {
    std::copy(logits.row(i), logits.row(i) + logits.cols(), row.begin());
    grammar.mask(row.data(), vocab);
    const TokenId id = argmax_row(row.data(), row.size());
    const Slot before = grammar.slot();
    grammar.advance(id, vocab);
    if (before == Slot::kExpectAction) action = vocab.surface(id);
    if (before == Slot::kExpectTopic) r.path.push_back({action, vocab.surface(id)});
  }
  r.truncated = !grammar.done();
  return r;
}

namespace {

corpus::DialoguePath parse_or_empty(const std::vector<TokenId>& tokens, const Vocabulary& vocab, bool* ok) {
  try {
    auto p = corpus::tokens_to_path(tokens, vocab);
    *ok = true;
    return p;
  } catch (const ParseError&) {
    *ok = false;
    return {};
  }
}

nlohmann::json path_json(const corpus::DialoguePath& p) {
  auto out = nlohmann::json::array();
  for (const auto& pair : p) out.push_back({pair.action, pair.topic});
  return out;
}

}  // namespace

PlanResult plan(const planner::PlannerModel& model, const encoder::PlanningInput& input, const PlanOptions& options) {
  using planner::Variant;
  num::NoGradGuard no_grad;
  const auto& vocab = model.vocab();
  (void)vocab.action_id(input.target.action);
  (void)vocab.topic_id(input.target.topic);
  const std::size_t max_pairs = options.max_pairs.value_or(model.config().max_pairs);
  const Variant variant = model.config().variant;
  const bool tied = model.config().tie_output_embeddings;

  encoder::Memory memory = model.encode(input);
  DecodeResult fwd =
      greedy_decode(model.forward_decoder, model.forward_head, model, memory, options.constrained, max_pairs);
  DecodeResult bwd =
      greedy_decode(model.backward_decoder, model.backward_head, model, memory, options.constrained, max_pairs);

  PlanResult r;
  bool fwd_ok = false, bwd_ok = false;
  r.forward_path = parse_or_empty(fwd.tokens, vocab, &fwd_ok);
  r.backward_path = corpus::reversed(parse_or_empty(bwd.tokens, vocab, &bwd_ok));

  bool align_fallback = false;
  bool final_truncated = false;
  if (variant == Variant::kOF) {
    r.final_path = r.forward_path;
  } else if (variant == Variant::kOB) {
    r.final_path = r.backward_path;
  } else if (variant == Variant::kBF) {
    num::Var f_in_backward_order =
        planner::align_backward(fwd.states, fwd.tokens, bwd.tokens.size(), vocab, &align_fallback);
    num::Var fused = planner::fuse_variant(variant, f_in_backward_order, bwd.states, model.fusion);
    r.fusion_logits = planner::project_logits(fused, model.fusion_head, model.embeddings, tied).value();
    auto pw = positionwise_argmax(r.fusion_logits, vocab, max_pairs);
    final_truncated = pw.truncated;
    r.final_path = corpus::reversed(pw.path);
  } else {
    num::Var aligned = planner::align_backward(bwd.states, bwd.tokens, fwd.tokens.size(), vocab, &align_fallback);
    num::Var fused = planner::fuse_variant(variant, fwd.states, aligned, model.fusion);
    r.fusion_logits = planner::project_logits(fused, model.fusion_head, model.embeddings, tied).value();
    auto pw = positionwise_argmax(r.fusion_logits, vocab, max_pairs);
    final_truncated = pw.truncated;
    r.final_path = std::move(pw.path);
  }

  bool empty_fallback = false;
  if (r.final_path.empty()) {
    // Only reachable without grammar masking in the underlying decoders.
    r.final_path = {input.target};
    empty_fallback = true;
  }
  if (options.target_forcing) r.final_path.back() = input.target;

  r.diagnostics = {{"variant", planner::to_string(variant)},
                   {"constrained", options.constrained},
                   {"target_forcing", options.target_forcing},
                   {"forward_len", fwd.tokens.size()},
                   {"backward_len", bwd.tokens.size()},
                   {"length_mismatch", fwd.tokens.size() != bwd.tokens.size()},
                   {"forward_parsed", fwd_ok},
                   {"backward_parsed", bwd_ok},
                   {"alignment_fallback", align_fallback},
                   {"final_truncated", final_truncated},
                   {"empty_final_fallback", empty_fallback},
                   {"forward_steps", fwd.steps},
                   {"backward_steps", bwd.steps},
                   {"model_calls", fwd.model_calls + bwd.model_calls}};
  return r;
}

nlohmann::json to_json(const PlanResult& r) {
  return {{"final_path", path_json(r.final_path)},
          {"forward_path", path_json(r.forward_path)},
          {"backward_path", path_json(r.backward_path)},
          {"diagnostics", r.diagnostics}};
}

corpus::PathPair next_subtarget(const PlanResult& plan, std::size_t turn_index) {
  if (plan.final_path.empty()) throw ContractError("next_subtarget: empty plan");
  return plan.final_path[std::min(turn_index, plan.final_path.size() - 1)];
}

}  // namespace pathweaver::decoding
