#pragma once

#include <vector>

#include "pathweaver/corpus/conversation.hpp"
#include "pathweaver/corpus/vocabulary.hpp"

namespace pathweaver::corpus {

// [A] a1 [T] t1 ... [A] aT [T] tT EOS. Throws ContractError on an empty path
// and DataError when a pair is not in the vocabulary.
std::vector<TokenId> path_to_tokens(const DialoguePath& path, const Vocabulary& vocab);

// Inverse of path_to_tokens. Throws ParseError naming the first offending
// position.
DialoguePath tokens_to_path(const std::vector<TokenId>& tokens, const Vocabulary& vocab);

// Pair order reversed; the backward decoder's label is
// path_to_tokens(reversed(path)).
DialoguePath reversed(const DialoguePath& path);

}  // namespace pathweaver::corpus
