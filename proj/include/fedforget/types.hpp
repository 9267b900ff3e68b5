// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fedforget {

using TokenId = std::uint32_t;
using TokenSeq = std::vector<TokenId>;

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVector = Eigen::RowVectorXd;

/// Flattened adapter parameters: row-major A followed by row-major B.
using FlatParams = Eigen::VectorXd;

struct Vocab {
    static constexpr TokenId kBos = 0;
    static constexpr TokenId kEos = 1;
    static constexpr TokenId kPad = 2;
    static constexpr std::size_t kMinSize = 8;

    std::size_t size = kMinSize;

    /// Throws ArgumentError when size < kMinSize.
    static Vocab of_size(std::size_t size);
    bool contains(TokenId id) const { return id < size; }
    bool operator==(const Vocab&) const = default;
};

struct QaPair {
    TokenSeq question;
    TokenSeq answer;
    TokenSeq paraphrased_question;
    std::vector<TokenSeq> wrong_answers;

    bool operator==(const QaPair&) const = default;
};

/// Drops a single trailing EOS, if present. Generated answers never carry one.
TokenSeq strip_eos(const TokenSeq& seq);

/// Checks the QaPair invariants against a vocabulary; throws ArgumentError.
void validate_pair(const QaPair& pair, const Vocab& vocab);

}  // namespace fedforget
