#include "pathweaver/corpus/path_grammar.hpp"

#include "pathweaver/error.hpp"

namespace pathweaver::corpus {

std::vector<TokenId> path_to_tokens(const DialoguePath& path, const Vocabulary& vocab) {
  if (path.empty()) throw ContractError("cannot encode an empty dialogue path");
  std::vector<TokenId> out;
  out.reserve(path.size() * 4 + 1);
  for (const auto& p : path) {
    out.push_back(Vocabulary::kActionMarker);
    out.push_back(vocab.action_id(p.action));
    out.push_back(Vocabulary::kTopicMarker);
    out.push_back(vocab.topic_id(p.topic));
  }
  out.push_back(Vocabulary::kEos);
  return out;
}

DialoguePath tokens_to_path(const std::vector<TokenId>& tokens, const Vocabulary& vocab) {
  auto kind_at = [&](std::size_t i) {
    if (tokens[i] < 0 || static_cast<std::size_t>(tokens[i]) >= vocab.size()) {
      throw ParseError(i, "token id out of vocabulary range");
    }
    return vocab.kind(tokens[i]);
  };
  DialoguePath path;
  std::size_t i = 0;
  while (true) {
    if (i >= tokens.size()) throw ParseError(i, "sequence ended without EOS");
    if (tokens[i] == Vocabulary::kEos) {
      if (path.empty()) throw ParseError(i, "EOS before the first pair");
      if (i + 1 != tokens.size()) throw ParseError(i + 1, "tokens after EOS");
      return path;
    }
    if (tokens[i] != Vocabulary::kActionMarker) throw ParseError(i, "expected [A] or EOS");
    if (i + 3 >= tokens.size()) throw ParseError(tokens.size(), "truncated pair");
    if (kind_at(i + 1) != TokenKind::kAction) throw ParseError(i + 1, "expected an action token");
    if (tokens[i + 2] != Vocabulary::kTopicMarker) throw ParseError(i + 2, "expected [T]");
    if (kind_at(i + 3) != TokenKind::kTopic) throw ParseError(i + 3, "expected a topic token");
    path.push_back({vocab.surface(tokens[i + 1]), vocab.surface(tokens[i + 3])});
    i += 4;
  }
}

DialoguePath reversed(const DialoguePath& path) { return DialoguePath(path.rbegin(), path.rend()); }

}  // namespace pathweaver::corpus
