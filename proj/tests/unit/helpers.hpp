// SPDX-License-Identifier: Apache-2.0
//
// Random small instances and finite-difference oracles shared by the suites.

#pragma once

#include "fedforget/model.hpp"
#include "fedforget/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace fedforget::testing {

inline TokenSeq random_seq(Rng& rng, std::size_t vocab, std::size_t min_len, std::size_t max_len) {
    TokenSeq seq(min_len + rng.below(max_len - min_len + 1));
    for (auto& t : seq) t = static_cast<TokenId>(rng.below(vocab));
    return seq;
}

inline QaPair random_pair(Rng& rng, std::size_t vocab, std::size_t max_answer = 3) {
    QaPair p;
    p.question = random_seq(rng, vocab, 1, 3);
    p.answer = random_seq(rng, vocab, 1, max_answer);
    p.paraphrased_question = random_seq(rng, vocab, 1, 2);
    while (p.wrong_answers.size() < 3) {
        auto w = random_seq(rng, vocab, 1, max_answer);
        if (w != p.answer && std::find(p.wrong_answers.begin(), p.wrong_answers.end(), w) == p.wrong_answers.end()) {
            p.wrong_answers.push_back(std::move(w));
        }
    }
    return p;
}

inline std::vector<QaPair> random_batch(Rng& rng, std::size_t vocab, std::size_t n) {
    std::vector<QaPair> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_pair(rng, vocab));
    return out;
}

inline Matrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols, double scale) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
    }
    return m;
}

inline BaseWeights random_base(Rng& rng, std::size_t vocab, double scale = 1.0) {
    const auto v = static_cast<Eigen::Index>(vocab);
    return BaseWeights(random_matrix(rng, v, v, scale));
}

inline AdapterParams random_adapter(Rng& rng, std::size_t vocab, std::size_t rank, double scale = 0.5) {
    AdapterParams p;
    p.a = random_matrix(rng, static_cast<Eigen::Index>(vocab), static_cast<Eigen::Index>(rank), scale);
    p.b = random_matrix(rng, static_cast<Eigen::Index>(rank), static_cast<Eigen::Index>(vocab), scale);
    p.alpha = rng.uniform(0.5, 4.0);
    p.scaled = true;
    return p;
}

inline BaseWeights zero_base(std::size_t vocab) {
    const auto v = static_cast<Eigen::Index>(vocab);
    return BaseWeights(Matrix::Zero(v, v));
}

/// Central differences of f over every coordinate of x.
inline FlatParams central_difference(const std::function<double(const FlatParams&)>& f, const FlatParams& x,
                                     double h = 1e-5) {
    FlatParams g(x.size());
    FlatParams probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + h;
        const double up = f(probe);
        probe(i) = x(i) - h;
        const double down = f(probe);
        probe(i) = x(i);
        g(i) = (up - down) / (2.0 * h);
    }
    return g;
}

/// max_i |a_i - b_i| / max_i max(|a_i|, |b_i|).
inline double max_relative_error(const FlatParams& analytic, const FlatParams& numeric) {
    const double scale = std::max(analytic.cwiseAbs().maxCoeff(), numeric.cwiseAbs().maxCoeff());
    if (scale == 0.0) return 0.0;
    return (analytic - numeric).cwiseAbs().maxCoeff() / scale;
}

}  // namespace fedforget::testing
