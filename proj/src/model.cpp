// SPDX-License-Identifier: Apache-2.0

#include "fedforget/model.hpp"

#include "fedforget/errors.hpp"

#include <cmath>
#include <map>
#include <string>

namespace fedforget {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void check_compatible(const BaseWeights& base, const AdapterParams& adapter) {
    const auto v = static_cast<Eigen::Index>(base.vocab_size());
    if (base.logits().cols() != v) {
        throw DimensionError("base logit table must be square, got " + shape_str(base.logits()));
    }
    if (adapter.a.rows() != v || adapter.b.cols() != v || adapter.a.cols() != adapter.b.rows() ||
        adapter.a.cols() < 1) {
        throw DimensionError("adapter shapes A=" + shape_str(adapter.a) + " B=" + shape_str(adapter.b) +
                             " do not fit a vocabulary of " + std::to_string(v));
    }
}

TokenId last_or_bos(const TokenSeq& context) { return context.empty() ? Vocab::kBos : context.back(); }

void check_token(const ModelView& model, TokenId t) {
    if (t >= model.base.vocab_size()) {
        throw ArgumentError("token " + std::to_string(t) + " outside vocabulary of " +
                            std::to_string(model.base.vocab_size()));
    }
}

}  // namespace

BaseWeights::BaseWeights(Matrix logits) : logits_(std::move(logits)) {
    if (logits_.rows() != logits_.cols() || logits_.rows() < static_cast<Eigen::Index>(Vocab::kMinSize)) {
        throw DimensionError("base logit table must be square with V >= 8, got " + shape_str(logits_));
    }
    if (!logits_.allFinite()) throw ArgumentError("base logit table has non-finite entries");
}

void AdapterGeometry::validate() const {
    if (vocab_size < Vocab::kMinSize) throw ArgumentError("adapter vocabulary below minimum size");
    if (rank < 1 || rank > vocab_size) {
        throw ArgumentError("adapter rank " + std::to_string(rank) + " must lie in [1, " +
                            std::to_string(vocab_size) + "]");
    }
    if (!std::isfinite(alpha)) throw ArgumentError("adapter alpha must be finite");
}

AdapterGeometry AdapterParams::geometry() const {
    return AdapterGeometry{static_cast<std::size_t>(a.rows()), rank(), alpha, scaled};
}

AdapterParams AdapterParams::zeros(const AdapterGeometry& geom) {
    geom.validate();
    const auto v = static_cast<Eigen::Index>(geom.vocab_size);
    const auto r = static_cast<Eigen::Index>(geom.rank);
    return AdapterParams{Matrix::Zero(v, r), Matrix::Zero(r, v), geom.alpha, geom.scaled};
}

AdapterParams AdapterParams::from_flat(const AdapterGeometry& geom, const FlatParams& flat) {
    geom.validate();
    if (static_cast<std::size_t>(flat.size()) != geom.param_count()) {
        throw DimensionError("flat adapter has " + std::to_string(flat.size()) + " values, geometry needs " +
                             std::to_string(geom.param_count()));
    }
    const auto v = static_cast<Eigen::Index>(geom.vocab_size);
    const auto r = static_cast<Eigen::Index>(geom.rank);
    AdapterParams out{Matrix(v, r), Matrix(r, v), geom.alpha, geom.scaled};
    out.a = Eigen::Map<const Matrix>(flat.data(), v, r);
    out.b = Eigen::Map<const Matrix>(flat.data() + v * r, r, v);
    return out;
}

FlatParams AdapterParams::flatten() const {
    FlatParams flat(a.size() + b.size());
    Eigen::Map<Matrix>(flat.data(), a.rows(), a.cols()) = a;
    Eigen::Map<Matrix>(flat.data() + a.size(), b.rows(), b.cols()) = b;
    return flat;
}

FlatParams AdapterGrad::flatten() const {
    FlatParams flat(a.size() + b.size());
    Eigen::Map<Matrix>(flat.data(), a.rows(), a.cols()) = a;
    Eigen::Map<Matrix>(flat.data() + a.size(), b.rows(), b.cols()) = b;
    return flat;
}

Matrix lora_materialize(const BaseWeights& base, const AdapterParams& adapter) {
    check_compatible(base, adapter);
    return base.logits() + adapter.scale() * (adapter.a * adapter.b);
}

RowVector effective_row(const ModelView& model, TokenId prev) {
    check_token(model, prev);
    const auto p = static_cast<Eigen::Index>(prev);
    return model.base.logits().row(p) + model.adapter.scale() * (model.adapter.a.row(p) * model.adapter.b);
}

RowVector log_softmax(const RowVector& logits) {
    const double peak = logits.maxCoeff();
    const double lse = peak + std::log((logits.array() - peak).exp().sum());
    return logits.array() - lse;
}

double pair_nll(const ModelView& model, const QaPair& pair) {
    if (pair.answer.empty()) throw ArgumentError("answer must be non-empty");
    return -sequence_log_prob(model, pair.question, pair.answer);
}

double nll_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch) {
    if (batch.empty()) throw ArgumentError("nll_loss needs a non-empty batch");
    check_compatible(base, adapter);
    const ModelView model{base, adapter};
    double total = 0.0;
    for (const auto& pair : batch) total += pair_nll(model, pair);
    return total / static_cast<double>(batch.size());
}

AdapterGrad weighted_nll_gradient(const ModelView& model, std::span<const QaPair> batch,
                                  std::span<const double> weights, std::vector<double>* per_pair_nll) {
    if (batch.empty()) throw ArgumentError("gradient needs a non-empty batch");
    if (weights.size() != batch.size()) throw DimensionError("one weight per pair required");
    check_compatible(model.base, model.adapter);

    const auto& adapter = model.adapter;
    const double s = adapter.scale();
    const auto v = adapter.a.rows();

    // dL/dlogits is non-zero only on rows that serve as a previous token;
    // accumulate those rows sparsely, ordered by token id.
    std::map<TokenId, RowVector> row_grads;
    if (per_pair_nll != nullptr) per_pair_nll->assign(batch.size(), 0.0);

    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& pair = batch[i];
        if (pair.answer.empty()) throw ArgumentError("answer must be non-empty");
        TokenId prev = last_or_bos(pair.question);
        double nll = 0.0;
        for (TokenId next : pair.answer) {
            check_token(model, next);
            const RowVector logp = log_softmax(effective_row(model, prev));
            nll -= logp(next);
            if (weights[i] != 0.0) {
                RowVector g = logp.array().exp();
                g(next) -= 1.0;
                auto [it, fresh] = row_grads.try_emplace(prev, RowVector::Zero(v));
                it->second += weights[i] * g;
            }
            prev = next;
        }
        if (per_pair_nll != nullptr) (*per_pair_nll)[i] = nll;
    }

    AdapterGrad grad{Matrix::Zero(v, adapter.a.cols()), Matrix::Zero(adapter.b.rows(), v)};
    for (const auto& [prev, g] : row_grads) {
        const auto p = static_cast<Eigen::Index>(prev);
        grad.a.row(p) = s * (g * adapter.b.transpose());
        grad.b.noalias() += s * (adapter.a.row(p).transpose() * g);
    }
    return grad;
}

AdapterGrad nll_gradient(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch) {
    if (batch.empty()) throw ArgumentError("nll_gradient needs a non-empty batch");
    const std::vector<double> weights(batch.size(), 1.0 / static_cast<double>(batch.size()));
    return weighted_nll_gradient(ModelView{base, adapter}, batch, weights);
}

double sequence_log_prob(const ModelView& model, const TokenSeq& context, const TokenSeq& target) {
    if (target.empty()) throw ArgumentError("sequence_log_prob needs a non-empty target");
    TokenId prev = last_or_bos(context);
    double total = 0.0;
    for (TokenId next : target) {
        check_token(model, next);
        total += log_softmax(effective_row(model, prev))(next);
        prev = next;
    }
    return total;
}

double sequence_log_prob(const BaseWeights& base, const AdapterParams& adapter, const TokenSeq& context,
                         const TokenSeq& target) {
    check_compatible(base, adapter);
    return sequence_log_prob(ModelView{base, adapter}, context, target);
}

TokenSeq generate_greedy(const ModelView& model, const TokenSeq& prompt, std::size_t max_len) {
    if (prompt.empty()) throw ArgumentError("generate_greedy needs a non-empty prompt");
    if (max_len == 0) throw ArgumentError("generate_greedy needs max_len >= 1");
    TokenSeq out;
    TokenId prev = prompt.back();
    while (out.size() < max_len) {
        const RowVector row = effective_row(model, prev);
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < row.size(); ++j) {
            if (row(j) > row(best)) best = j;
        }
        const auto next = static_cast<TokenId>(best);
        if (next == Vocab::kEos) break;
        out.push_back(next);
        prev = next;
    }
    return out;
}

TokenSeq generate_greedy(const BaseWeights& base, const AdapterParams& adapter, const TokenSeq& prompt,
                         std::size_t max_len) {
    check_compatible(base, adapter);
    return generate_greedy(ModelView{base, adapter}, prompt, max_len);
}

}  // namespace fedforget
