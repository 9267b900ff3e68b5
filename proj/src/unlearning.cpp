// SPDX-License-Identifier: Apache-2.0

#include "fedforget/unlearning.hpp"

#include "fedforget/errors.hpp"
#include "fedforget/rng.hpp"

#include <cmath>
#include <numeric>
#include <string>
#include <vector>

namespace fedforget {

std::string_view to_string(UnlearnMethod method) {
    switch (method) {
        case UnlearnMethod::GradAscent: return "GradAscent";
        case UnlearnMethod::GradDiff: return "GradDiff";
        case UnlearnMethod::NPO: return "NPO";
        case UnlearnMethod::SimNPO: return "SimNPO";
    }
    return "?";
}

UnlearnMethod parse_unlearn_method(std::string_view name) {
    for (auto m : kAllUnlearnMethods) {
        if (to_string(m) == name) return m;
    }
    throw ArgumentError("unknown unlearning method '" + std::string(name) + "'");
}

void UnlearnConfig::validate() const {
    if (!(gamma > 0.0)) throw ConfigError("unlearning gamma must be > 0");
    if (!(alpha_retain >= 0.0)) throw ConfigError("unlearning alpha must be >= 0");
    if ((method == UnlearnMethod::NPO || method == UnlearnMethod::SimNPO) && !(beta > 0.0)) {
        throw ConfigError("unlearning beta must be > 0");
    }
    if (!(learning_rate >= 0.0)) throw ConfigError("unlearning learning rate must be >= 0");
    if (batch_size < 1) throw ConfigError("unlearning batch size must be >= 1");
    if (steps == 0 && epochs == 0) throw ConfigError("unlearning needs steps >= 1 or epochs >= 1");
    if (!(grad_clip >= 0.0)) throw ConfigError("gradient clip must be >= 0");
}

std::size_t UnlearnConfig::effective_steps(std::size_t forget_size) const {
    if (steps > 0) return steps;
    return epochs * ((forget_size + batch_size - 1) / batch_size);
}

bool UnlearnConfig::uses_retain() const { return method != UnlearnMethod::GradAscent && alpha_retain != 0.0; }

double log_sigmoid(double x) {
    // log σ(x) = -log(1 + e^{-x}), evaluated without overflow on either side.
    return x >= 0.0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x));
}

namespace {

double sigmoid(double x) { return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void require_forget(std::span<const QaPair> forget) {
    if (forget.empty()) throw ArgumentError("unlearning needs a non-empty forget batch");
}

void require_beta(double beta) {
    if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
}

std::vector<double> per_pair_log_prob(const ModelView& model, std::span<const QaPair> batch) {
    std::vector<double> out;
    out.reserve(batch.size());
    for (const auto& pair : batch) out.push_back(sequence_log_prob(model, pair.question, pair.answer));
    return out;
}

// Adds alpha * nll_loss(retain) and its gradient into `acc`.
void add_retain_term(const ModelView& model, std::span<const QaPair> retain, double alpha, LossAndGrad& acc) {
    if (alpha == 0.0) return;
    if (retain.empty()) throw ArgumentError("retain batch must be non-empty when the retain coefficient is positive");
    const std::vector<double> w(retain.size(), alpha / static_cast<double>(retain.size()));
    std::vector<double> nll;
    const AdapterGrad g = weighted_nll_gradient(model, retain, w, &nll);
    acc.loss += alpha * std::accumulate(nll.begin(), nll.end(), 0.0) / static_cast<double>(retain.size());
    acc.grad.a += g.a;
    acc.grad.b += g.b;
}

// Forget terms are written as L = mean_i f(log p_i); dL/dθ = mean_i f'(log p_i) ∇log p_i
// = -sum_i (f'(log p_i)/n) ∇nll_i, which maps onto weighted_nll_gradient.
LossAndGrad forget_term(const ModelView& model, const UnlearnConfig& cfg, const TargetSnapshot* target,
                        std::span<const QaPair> forget) {
    require_forget(forget);
    const double n = static_cast<double>(forget.size());
    const std::vector<double> logp = per_pair_log_prob(model, forget);
    std::vector<double> weights(forget.size());
    double loss = 0.0;

    switch (cfg.method) {
        case UnlearnMethod::GradAscent:
        case UnlearnMethod::GradDiff:
            for (std::size_t i = 0; i < forget.size(); ++i) {
                loss += cfg.gamma * logp[i];
                weights[i] = -cfg.gamma / n;
            }
            break;
        case UnlearnMethod::NPO: {
            require_beta(cfg.beta);
            const ModelView reference{model.base, target->adapter};
            const std::vector<double> ref_logp = per_pair_log_prob(reference, forget);
            for (std::size_t i = 0; i < forget.size(); ++i) {
                const double log_ratio = logp[i] - ref_logp[i];
                loss += -(2.0 / cfg.beta) * log_sigmoid(-cfg.beta * log_ratio);
                // d/dlogp of -(2/β) log σ(-β r) = 2 σ(β r)
                weights[i] = -2.0 * sigmoid(cfg.beta * log_ratio) / n;
            }
            break;
        }
        case UnlearnMethod::SimNPO: {
            require_beta(cfg.beta);
            for (std::size_t i = 0; i < forget.size(); ++i) {
                const double len = static_cast<double>(forget[i].answer.size());
                const double arg = -(cfg.beta / len) * logp[i] - cfg.delta;
                loss += -(2.0 / cfg.beta) * log_sigmoid(arg);
                // d/dlogp of -(2/β) log σ(-(β/L) logp - δ) = (2/L) σ(-arg)
                weights[i] = -(2.0 / len) * sigmoid(-arg) / n;
            }
            break;
        }
    }
    LossAndGrad out;
    out.loss = loss / n;
    out.grad = weighted_nll_gradient(model, forget, weights);
    return out;
}

}  // namespace

double grad_ascent_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> forget,
                        double gamma) {
    require_forget(forget);
    return -gamma * nll_loss(base, adapter, forget);
}

double grad_diff_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> forget,
                      std::span<const QaPair> retain, double gamma, double alpha) {
    require_forget(forget);
    if (retain.empty()) throw ArgumentError("grad_diff_loss needs a non-empty retain batch");
    return -gamma * nll_loss(base, adapter, forget) + alpha * nll_loss(base, adapter, retain);
}

double npo_loss(const BaseWeights& base, const AdapterParams& adapter, const TargetSnapshot& target,
                std::span<const QaPair> forget, std::span<const QaPair> retain, double beta, double alpha) {
    require_forget(forget);
    require_beta(beta);
    const ModelView model{base, adapter};
    const ModelView reference{base, target.adapter};
    double term = 0.0;
    for (const auto& pair : forget) {
        const double log_ratio = sequence_log_prob(model, pair.question, pair.answer) -
                                 sequence_log_prob(reference, pair.question, pair.answer);
        term += log_sigmoid(-beta * log_ratio);
    }
    double loss = -(2.0 / beta) * term / static_cast<double>(forget.size());
    if (alpha != 0.0) loss += alpha * nll_loss(base, adapter, retain);
    return loss;
}

double simnpo_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> forget,
                   std::span<const QaPair> retain, double beta, double delta, double alpha) {
    require_forget(forget);
    require_beta(beta);
    const ModelView model{base, adapter};
    double term = 0.0;
    for (const auto& pair : forget) {
        const double len = static_cast<double>(pair.answer.size());
        term += log_sigmoid(-(beta / len) * sequence_log_prob(model, pair.question, pair.answer) - delta);
    }
    double loss = -(2.0 / beta) * term / static_cast<double>(forget.size());
    if (alpha != 0.0) loss += alpha * nll_loss(base, adapter, retain);
    return loss;
}

LossAndGrad unlearning_objective(const BaseWeights& base, const AdapterParams& adapter, const UnlearnConfig& cfg,
                                 const TargetSnapshot& target, std::span<const QaPair> forget,
                                 std::span<const QaPair> retain) {
    const ModelView model{base, adapter};
    LossAndGrad out = forget_term(model, cfg, &target, forget);
    if (cfg.method != UnlearnMethod::GradAscent) add_retain_term(model, retain, cfg.alpha_retain, out);
    return out;
}

namespace {

// Cycles through a seeded permutation of [0, n), reshuffling at each pass.
class BatchCursor {
public:
    BatchCursor(std::size_t n, std::size_t batch, std::uint64_t seed)
        : order_(n), batch_(std::min(batch, n)), seed_(seed) {
        reshuffle();
    }

    std::vector<std::size_t> next() {
        std::vector<std::size_t> out;
        out.reserve(batch_);
        while (out.size() < batch_) {
            if (pos_ == order_.size()) {
                ++pass_;
                reshuffle();
            }
            out.push_back(order_[pos_++]);
        }
        return out;
    }

private:
    void reshuffle() {
        std::iota(order_.begin(), order_.end(), std::size_t{0});
        Rng rng(derive_seed(seed_, {pass_}));
        rng.shuffle(std::span<std::size_t>(order_));
        pos_ = 0;
    }

    std::vector<std::size_t> order_;
    std::size_t batch_;
    std::uint64_t seed_;
    std::uint64_t pass_ = 0;
    std::size_t pos_ = 0;
};

std::vector<QaPair> gather(std::span<const QaPair> pool, const std::vector<std::size_t>& idx) {
    std::vector<QaPair> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(pool[i]);
    return out;
}

}  // namespace

FlatParams run_unlearning(const BaseWeights& base, const AdapterGeometry& geom, const FlatParams& global_adapter,
                          const UnlearnConfig& cfg, std::span<const QaPair> forget, std::span<const QaPair> retain) {
    cfg.validate();
    require_forget(forget);
    const bool needs_retain = cfg.uses_retain();
    if (needs_retain && retain.empty()) {
        throw ArgumentError(std::string(to_string(cfg.method)) + " needs a non-empty retain set");
    }

    const TargetSnapshot target{AdapterParams::from_flat(geom, global_adapter)};
    FlatParams params = global_adapter;

    BatchCursor forget_cursor(forget.size(), cfg.batch_size, derive_seed(cfg.rng_seed, {0}));
    BatchCursor retain_cursor(needs_retain ? retain.size() : 1, cfg.batch_size, derive_seed(cfg.rng_seed, {1}));

    const std::size_t steps = cfg.effective_steps(forget.size());
    for (std::size_t step = 0; step < steps; ++step) {
        const auto forget_batch = gather(forget, forget_cursor.next());
        const auto retain_batch = needs_retain ? gather(retain, retain_cursor.next()) : std::vector<QaPair>{};
        const auto adapter = AdapterParams::from_flat(geom, params);
        FlatParams grad = unlearning_objective(base, adapter, cfg, target, forget_batch, retain_batch).grad.flatten();
        if (cfg.grad_clip > 0.0) {
            const double norm = grad.norm();
            if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
        }
        params -= cfg.learning_rate * grad;
    }
    return params;
}

}  // namespace fedforget
