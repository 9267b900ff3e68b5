// SPDX-License-Identifier: Apache-2.0

#include "fedforget/types.hpp"

#include "fedforget/errors.hpp"

#include <algorithm>
#include <string>

namespace fedforget {

Vocab Vocab::of_size(std::size_t size) {
    if (size < kMinSize) {
        throw ArgumentError("vocabulary size " + std::to_string(size) + " is below the minimum of " +
                            std::to_string(kMinSize));
    }
    return Vocab{size};
}

TokenSeq strip_eos(const TokenSeq& seq) {
    if (!seq.empty() && seq.back() == Vocab::kEos) {
        return TokenSeq(seq.begin(), seq.end() - 1);
    }
    return seq;
}

namespace {
void check_tokens(const TokenSeq& seq, const Vocab& vocab, const char* what) {
    for (auto t : seq) {
        if (!vocab.contains(t)) {
            throw ArgumentError(std::string(what) + " contains token " + std::to_string(t) +
                                " outside the vocabulary");
        }
    }
}
}  // namespace

void validate_pair(const QaPair& pair, const Vocab& vocab) {
    if (pair.answer.empty()) throw ArgumentError("answer must be non-empty");
    check_tokens(pair.question, vocab, "question");
    check_tokens(pair.answer, vocab, "answer");
    check_tokens(pair.paraphrased_question, vocab, "paraphrased question");
    for (const auto& wrong : pair.wrong_answers) {
        if (wrong.empty()) throw ArgumentError("wrong answers must be non-empty");
        if (wrong == pair.answer) throw ArgumentError("wrong answer duplicates the correct answer");
        check_tokens(wrong, vocab, "wrong answer");
    }
}

}  // namespace fedforget
