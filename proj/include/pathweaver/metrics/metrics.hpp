#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/conversation.hpp"

namespace pathweaver::metrics {

using Tokens = std::vector<std::string>;

// Lowercased whitespace tokens.
Tokens tokenize(std::string_view text);

struct PlanEval {
  double action_acc = 0;
  double action_bi_acc = 0;
  double topic_acc = 0;
  double topic_bi_acc = 0;
  std::size_t n_examples = 0;
};

struct PlanGold {
  corpus::PathPair next;
  std::optional<corpus::PathPair> next_next;
};

// Acc: prediction equals the gold next label. Bi.Acc: equals the gold next
// or the one after it. Action and topic are scored separately. Throws
// ContractError on a length mismatch.
PlanEval plan_accuracy(const std::vector<corpus::PathPair>& predictions, const std::vector<PlanGold>& golds);

// Multiset token F1. Empty vs empty is 1, one side empty is 0.
double word_f1(const Tokens& hyp, const Tokens& ref);

inline constexpr double kBleuEpsilon = 0.1;

// Sentence BLEU-n: geometric mean of clipped 1..n-gram precisions with a
// brevity penalty. A zero match count becomes kBleuEpsilon; an order with no
// n-grams on either side counts as precision 1.
double bleu(const Tokens& hyp, const Tokens& ref, std::size_t n);

// Unique n-grams over total n-grams across all responses; 0 without n-grams.
double distinct_n(const std::vector<Tokens>& hyps, std::size_t n);

// Triples whose subject or object is `topic`.
std::vector<corpus::KnowledgeTriple> active_triples(const std::vector<corpus::KnowledgeTriple>& knowledge,
                                                    const std::string& topic);

// word_f1 against the object tokens of the active triples. nullopt when no
// triple is active; such turns are left out of the average.
std::optional<double> knowledge_f1(const Tokens& hyp, const std::vector<corpus::KnowledgeTriple>& active);

struct SystemTurn {
  std::string text;
  corpus::PathPair subtarget;
};

// 1 iff a system turn at or after the first turn whose subtarget is the
// target mentions every token of the target topic.
int target_success(const std::vector<SystemTurn>& transcript, const corpus::PathPair& target);

struct GenEval {
  double f1 = 0, bleu1 = 0, bleu2 = 0, dist1 = 0, dist2 = 0, know_f1 = 0, succ = 0;
  std::size_t n_responses = 0;
  std::size_t n_dialogues = 0;
  std::size_t n_know_excluded = 0;  // turns without active knowledge
};

struct GenTurn {
  std::string hypothesis;
  std::string reference;
  std::vector<corpus::KnowledgeTriple> active;
};

struct GenDialogue {
  std::vector<GenTurn> turns;
  std::vector<SystemTurn> transcript;
  corpus::PathPair target;
};

GenEval generation_eval(const std::vector<GenDialogue>& dialogues);

nlohmann::json to_json(const PlanEval& e);
nlohmann::json to_json(const GenEval& e);

// Aligned plain-text tables, values as percentages with two decimals.
std::string plan_table(const std::vector<std::pair<std::string, PlanEval>>& rows);
std::string gen_table(const std::vector<std::pair<std::string, GenEval>>& rows);
std::string format_percent(double fraction);
// First row is the header; first column left-aligned, the rest right-aligned.
std::string text_table(const std::vector<std::vector<std::string>>& cells);

}  // namespace pathweaver::metrics
