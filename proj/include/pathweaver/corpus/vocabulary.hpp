#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pathweaver/corpus/conversation.hpp"

namespace pathweaver::corpus {

enum class TokenKind : std::uint8_t { kSpecial, kAction, kTopic, kWord };

const char* to_string(TokenKind kind);

using TokenId = std::int64_t;

// Typed token table. Actions, topics and relations are single atomic tokens
// whose display string joins words with '_'; utterance words are lowercased.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kActionMarker = 4;  // [A]
  static constexpr TokenId kTopicMarker = 5;   // [T]

  Vocabulary();

  // Adds `surface` as a token of `kind` and returns its id; returns the
  // existing id when already present with the same kind. Throws DataError on
  // a kind conflict.
  TokenId add(std::string_view surface, TokenKind kind);

  std::size_t size() const noexcept { return tokens_.size(); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  const std::string& surface(TokenId id) const { return surfaces_.at(static_cast<std::size_t>(id)); }
  TokenKind kind(TokenId id) const { return kinds_.at(static_cast<std::size_t>(id)); }

  std::optional<TokenId> find(std::string_view surface, TokenKind kind) const;
  // Throws DataError when missing.
  TokenId action_id(std::string_view action) const;
  TokenId topic_id(std::string_view topic) const;
  TokenId relation_id(std::string_view relation) const;
  bool has_topic(std::string_view topic) const { return find(topic, TokenKind::kTopic).has_value(); }

  // Lowercased whitespace split with greedy longest match of known topic
  // phrases; unknown words map to kUnk.
  std::vector<TokenId> encode_text(std::string_view text) const;
  // Length in words of the longest topic phrase starting at words[i]
  // (0 if none); the topic id is stored in *id when non-null.
  std::size_t match_topic(const std::vector<std::string>& words, std::size_t i, TokenId* id) const;

  std::vector<TokenId> ids_of_kind(TokenKind kind) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.tokens_ == b.tokens_ && a.kinds_ == b.kinds_ && a.surfaces_ == b.surfaces_;
  }

 private:
  static std::string key(std::string_view surface, TokenKind kind);

  std::vector<std::string> tokens_;
  std::vector<std::string> surfaces_;
  std::vector<TokenKind> kinds_;
  std::unordered_map<std::string, TokenId> by_key_;
  std::unordered_map<std::string, TokenId> by_token_;
  // first lowercased word -> (lowercased word sequence, topic id), longest first
  std::unordered_map<std::string, std::vector<std::pair<std::vector<std::string>, TokenId>>> phrases_;
};

std::string join_underscore(std::string_view s);
std::vector<std::string> split_lower(std::string_view text);

// Specials, every action, every topic (path topics, targets, knowledge
// entities), every relation, and the words of utterances and profiles.
// Throws DataError on an empty corpus.
Vocabulary build_vocabulary(const std::vector<Conversation>& convs);

}  // namespace pathweaver::corpus
