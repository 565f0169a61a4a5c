#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/conversation.hpp"

namespace pathweaver::corpus {

struct SynthConfig {
  std::uint64_t seed = 7;
  std::size_t n_conversations = 500;
  std::size_t n_topics = 48;
  std::size_t n_relations = 6;
  std::size_t n_actions = 5;
  std::size_t max_pairs = 3;
  std::size_t graph_degree = 2;
  std::size_t history_turns = 1;

  // Throws ConfigError.
  void validate() const;
};

void to_json(nlohmann::json& j, const SynthConfig& c);
void from_json(const nlohmann::json& j, SynthConfig& c);

// Deterministic in cfg. Each conversation draws a random connected topic
// graph, a target node, and a start node whose shortest path to the target is
// unique and at most max_pairs long; the gold path is that shortest path
// (start excluded). Intermediate actions follow the traversed edge's relation;
// the final pair carries the target action.
std::vector<Conversation> generate_synthetic(const SynthConfig& cfg);

// Name pools used by the generator (exposed for tests).
std::string synthetic_topic_name(std::size_t index);
std::string synthetic_relation_name(std::size_t index);
std::string synthetic_action_name(std::size_t index);

}  // namespace pathweaver::corpus
