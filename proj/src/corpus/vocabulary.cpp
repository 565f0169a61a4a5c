#include "pathweaver/corpus/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "pathweaver/error.hpp"

namespace pathweaver::corpus {

const char* to_string(TokenKind kind) {
  switch (kind) {
    case TokenKind::kSpecial:
      return "special";
    case TokenKind::kAction:
      return "action";
    case TokenKind::kTopic:
      return "topic";
    case TokenKind::kWord:
      return "word";
  }
  return "?";
}

namespace {

TokenKind kind_from_string(const std::string& s) {
  if (s == "special") return TokenKind::kSpecial;
  if (s == "action") return TokenKind::kAction;
  if (s == "topic") return TokenKind::kTopic;
  if (s == "word") return TokenKind::kWord;
  throw IntegrityError("unknown token kind '" + s + "'");
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

}  // namespace

std::string join_underscore(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += '_';
    pending_space = false;
    out += c;
  }
  return out;
}

std::vector<std::string> split_lower(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

Vocabulary::Vocabulary() {
  add("<pad>", TokenKind::kSpecial);
  add("<bos>", TokenKind::kSpecial);
  add("<eos>", TokenKind::kSpecial);
  add("<unk>", TokenKind::kSpecial);
  add("[A]", TokenKind::kSpecial);
  add("[T]", TokenKind::kSpecial);
}

std::string Vocabulary::key(std::string_view surface, TokenKind kind) {
  return std::string(to_string(kind)) + '\x1f' + std::string(surface);
}

TokenId Vocabulary::add(std::string_view surface, TokenKind kind) {
  const std::string k = key(surface, kind);
  if (auto it = by_key_.find(k); it != by_key_.end()) return it->second;
  const std::string tok = kind == TokenKind::kWord ? join_underscore(lower(surface)) : join_underscore(surface);
  if (tok.empty()) throw DataError("empty token");
  if (auto it = by_token_.find(tok); it != by_token_.end()) {
    throw DataError("token '" + tok + "' would be both " + to_string(kinds_[it->second]) + " and " + to_string(kind));
  }
  const auto id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(tok);
  surfaces_.emplace_back(surface);
  kinds_.push_back(kind);
  by_key_.emplace(k, id);
  by_token_.emplace(tok, id);
  if (kind == TokenKind::kTopic) {
    auto words = split_lower(surface);
    if (!words.empty()) {
      auto& bucket = phrases_[words[0]];
      bucket.emplace_back(std::move(words), id);
      std::stable_sort(bucket.begin(), bucket.end(),
                       [](const auto& a, const auto& b) { return a.first.size() > b.first.size(); });
    }
  }
  return id;
}

std::optional<TokenId> Vocabulary::find(std::string_view surface, TokenKind kind) const {
  auto it = by_key_.find(key(surface, kind));
  if (it == by_key_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::action_id(std::string_view action) const {
  if (auto id = find(action, TokenKind::kAction)) return *id;
  throw DataError("action '" + std::string(action) + "' is not in the vocabulary");
}

TokenId Vocabulary::topic_id(std::string_view topic) const {
  if (auto id = find(topic, TokenKind::kTopic)) return *id;
  throw DataError("topic '" + std::string(topic) + "' is not in the vocabulary");
}

TokenId Vocabulary::relation_id(std::string_view relation) const {
  if (auto id = find(relation, TokenKind::kWord)) return *id;
  return kUnk;
}

std::size_t Vocabulary::match_topic(const std::vector<std::string>& words, std::size_t i, TokenId* id) const {
  auto it = phrases_.find(words[i]);
  if (it == phrases_.end()) return 0;
  for (const auto& [phrase, topic] : it->second) {
    if (i + phrase.size() <= words.size() && std::equal(phrase.begin(), phrase.end(), words.begin() + i)) {
      if (id) *id = topic;
      return phrase.size();
    }
  }
  return 0;
}

std::vector<TokenId> Vocabulary::encode_text(std::string_view text) const {
  const auto words = split_lower(text);
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < words.size();) {
    TokenId topic = kUnk;
    if (std::size_t n = match_topic(words, i, &topic)) {
      out.push_back(topic);
      i += n;
      continue;
    }
    auto w = find(words[i], TokenKind::kWord);
    out.push_back(w ? *w : kUnk);
    ++i;
  }
  return out;
}

std::vector<TokenId> Vocabulary::ids_of_kind(TokenKind kind) const {
  std::vector<TokenId> out;
  for (std::size_t i = 0; i < kinds_.size(); ++i) {
    if (kinds_[i] == kind) out.push_back(static_cast<TokenId>(i));
  }
  return out;
}

nlohmann::json Vocabulary::to_json() const {
  nlohmann::json arr = nlohmann::json::array();
  for (std::size_t i = 0; i < tokens_.size(); ++i) arr.push_back({surfaces_[i], to_string(kinds_[i])});
  return arr;
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() < 6) throw IntegrityError("vocabulary must be an array of [surface, kind] pairs");
  Vocabulary v;
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& e = j[i];
    if (!e.is_array() || e.size() != 2) throw IntegrityError("vocabulary entry " + std::to_string(i) + " malformed");
    const auto surface = e[0].get<std::string>();
    const auto kind = kind_from_string(e[1].get<std::string>());
    if (i < 6) {
      if (v.surfaces_[i] != surface || kind != TokenKind::kSpecial) throw IntegrityError("vocabulary specials differ");
      continue;
    }
    if (v.add(surface, kind) != static_cast<TokenId>(i)) throw IntegrityError("duplicate vocabulary entry " + surface);
  }
  return v;
}

Vocabulary build_vocabulary(const std::vector<Conversation>& convs) {
  if (convs.empty()) throw DataError("cannot build a vocabulary from an empty corpus");
  Vocabulary v;
  // Sorted sets keep ids independent of corpus order.
  std::set<std::string> actions, topics, relations;
  for (const auto& c : convs) {
    for (const auto& p : c.path) {
      actions.insert(p.action);
      topics.insert(p.topic);
    }
    actions.insert(c.target.action);
    topics.insert(c.target.topic);
    for (const auto& t : c.knowledge) {
      topics.insert(t.subject);
      topics.insert(t.object);
      relations.insert(t.relation);
    }
  }
  for (const auto& a : actions) v.add(a, TokenKind::kAction);
  for (const auto& t : topics) v.add(t, TokenKind::kTopic);
  for (const auto& r : relations) v.add(r, TokenKind::kWord);

  // Words are collected after topics so topic phrases inside utterances stay
  // atomic.
  std::set<std::string> words;
  auto collect = [&](std::string_view text) {
    const auto split = split_lower(text);
    for (std::size_t i = 0; i < split.size();) {
      if (std::size_t n = v.match_topic(split, i, nullptr)) {
        i += n;
      } else {
        words.insert(split[i++]);
      }
    }
  };
  for (const auto& c : convs) {
    for (const auto& t : c.history) collect(t.text);
    for (const auto& r : c.responses) collect(r);
    for (const auto& [k, val] : c.profile) {
      collect(k);
      collect(val);
    }
  }
  for (const auto& w : words) {
    if (!v.find(w, TokenKind::kWord)) {
      // A word that is already an atomic action/topic/relation token keeps that token.
      bool clash = false;
      for (auto kind : {TokenKind::kAction, TokenKind::kTopic, TokenKind::kSpecial}) {
        if (v.find(w, kind)) clash = true;
      }
      if (!clash) {
        try {
          v.add(w, TokenKind::kWord);
        } catch (const DataError&) {
          // Same display string as an atomic token of another kind; encode
          // maps it to UNK.
        }
      }
    }
  }
  return v;
}

}  // namespace pathweaver::corpus
