#pragma once

#include <compare>
#include <cstdint>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace pathweaver::corpus {

inline constexpr std::size_t kDefaultMaxPairs = 14;

struct KnowledgeTriple {
  std::string subject;
  std::string relation;
  std::string object;
  friend auto operator<=>(const KnowledgeTriple&, const KnowledgeTriple&) = default;
};

enum class Speaker { kUser, kSystem };

struct Turn {
  Speaker speaker = Speaker::kUser;
  std::string text;
  friend bool operator==(const Turn&, const Turn&) = default;
};

// One subtarget: a dialogue act and the entity it is about.
struct PathPair {
  std::string action;
  std::string topic;
  friend auto operator<=>(const PathPair&, const PathPair&) = default;
};

using DialoguePath = std::vector<PathPair>;

struct Conversation {
  std::string id;
  std::vector<KnowledgeTriple> knowledge;
  std::vector<std::pair<std::string, std::string>> profile;
  std::vector<Turn> history;
  DialoguePath path;
  PathPair target;
  std::vector<std::string> responses;
  friend bool operator==(const Conversation&, const Conversation&) = default;
};

// Throws SchemaError (with `line`, 0 if unknown) naming the offending field.
void validate(const Conversation& conv, std::size_t max_pairs = kDefaultMaxPairs, std::size_t line = 0);

// One JSON object per line; see README for the schema.
std::string to_jsonl_line(const Conversation& conv);
Conversation from_jsonl_line(const std::string& line, std::size_t line_number = 0,
                             std::size_t max_pairs = kDefaultMaxPairs);

std::vector<Conversation> load_jsonl(const std::filesystem::path& path, std::size_t max_pairs = kDefaultMaxPairs);
void write_jsonl(const std::filesystem::path& path, const std::vector<Conversation>& convs);
std::string serialize_jsonl(const std::vector<Conversation>& convs);

// A planning example: the dialogue as it stood before system turn `turn`,
// with the still-unrealized part of the gold path as the label.
struct PlanningExample {
  const Conversation* conversation = nullptr;
  std::size_t turn = 0;
  std::vector<Turn> history;
  DialoguePath remaining;
};

// One example per system turn. History at turn t is the conversation history
// followed by the first t gold responses.
std::vector<PlanningExample> slice_turns(const Conversation& conv);
std::vector<PlanningExample> slice_turns(const std::vector<Conversation>& convs);

struct CorpusSplit {
  std::vector<Conversation> train;
  std::vector<Conversation> dev;
  std::vector<Conversation> test;
};

// Deterministic shuffle-then-cut split.
CorpusSplit split_corpus(const std::vector<Conversation>& convs, double dev_fraction, double test_fraction,
                         std::uint64_t seed);

}  // namespace pathweaver::corpus
