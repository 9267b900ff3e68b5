// SPDX-License-Identifier: Apache-2.0
//
// Reference language model: a frozen bigram logit table W (row = previous
// token, column = next token) plus a trainable low-rank adapter A·B.
// The effective logits are W + s·A·B with s = alpha / rank.

#pragma once

#include "fedforget/types.hpp"

#include <span>

namespace fedforget {

/// Frozen pretrained logit table. Immutable once constructed.
class BaseWeights {
public:
    BaseWeights() = default;
    explicit BaseWeights(Matrix logits);

    const Matrix& logits() const { return logits_; }
    std::size_t vocab_size() const { return static_cast<std::size_t>(logits_.rows()); }

private:
    Matrix logits_;
};

struct AdapterGeometry {
    std::size_t vocab_size = 0;
    std::size_t rank = 1;
    double alpha = 1.0;
    /// When false the adapter contributes A·B unscaled.
    bool scaled = true;

    double scale() const { return scaled ? alpha / static_cast<double>(rank) : 1.0; }
    std::size_t param_count() const { return 2 * vocab_size * rank; }

    void validate() const;
    bool operator==(const AdapterGeometry&) const = default;
};

struct AdapterParams {
    Matrix a;  // V x r
    Matrix b;  // r x V
    double alpha = 1.0;
    bool scaled = true;

    std::size_t rank() const { return static_cast<std::size_t>(a.cols()); }
    AdapterGeometry geometry() const;
    double scale() const { return geometry().scale(); }

    static AdapterParams zeros(const AdapterGeometry& geom);
    static AdapterParams from_flat(const AdapterGeometry& geom, const FlatParams& flat);
    FlatParams flatten() const;
};

/// Gradient with respect to the adapter factors, laid out like AdapterParams.
struct AdapterGrad {
    Matrix a;
    Matrix b;

    FlatParams flatten() const;
};

/// Borrowed view of the pieces needed to score sequences.
struct ModelView {
    const BaseWeights& base;
    const AdapterParams& adapter;
};

/// W + s·A·B. Throws DimensionError on inconsistent shapes.
Matrix lora_materialize(const BaseWeights& base, const AdapterParams& adapter);

/// Logit row for the given previous token without materializing the full matrix.
RowVector effective_row(const ModelView& model, TokenId prev);

/// Total NLL of the answer tokens of one pair, teacher-forced on the question.
double pair_nll(const ModelView& model, const QaPair& pair);

/// Batch mean of per-pair answer NLL.
double nll_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch);

/// Gradient of nll_loss with respect to (A, B).
AdapterGrad nll_gradient(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch);

/// Gradient of sum_i weights[i] * pair_nll(batch[i]). Every loss in the
/// project is a reweighting of per-pair NLLs, so this is the single backprop
/// routine. Optionally reports the per-pair NLLs evaluated on the way.
AdapterGrad weighted_nll_gradient(const ModelView& model, std::span<const QaPair> batch,
                                  std::span<const double> weights,
                                  std::vector<double>* per_pair_nll = nullptr);

/// Sum over target tokens of log p(target_j | preceding token), where the
/// token before target_0 is the last token of context.
double sequence_log_prob(const BaseWeights& base, const AdapterParams& adapter, const TokenSeq& context,
                         const TokenSeq& target);
double sequence_log_prob(const ModelView& model, const TokenSeq& context, const TokenSeq& target);

/// Greedy decoding; stops at EOS (not emitted) or after max_len tokens.
/// Ties resolve to the lowest token id.
TokenSeq generate_greedy(const BaseWeights& base, const AdapterParams& adapter, const TokenSeq& prompt,
                         std::size_t max_len);
TokenSeq generate_greedy(const ModelView& model, const TokenSeq& prompt, std::size_t max_len);

/// Numerically stable log-softmax of one logit row.
RowVector log_softmax(const RowVector& logits);

}  // namespace fedforget
