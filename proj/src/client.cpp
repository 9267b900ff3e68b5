// SPDX-License-Identifier: Apache-2.0

#include "fedforget/client.hpp"

#include "fedforget/errors.hpp"
#include "fedforget/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace fedforget {

void ClientShard::validate() const {
    if (pairs.empty()) throw DataError("client " + std::to_string(client_id) + " has an empty shard");
    if (forget_flags.size() != pairs.size()) {
        throw DimensionError("client " + std::to_string(client_id) + " forget flags do not match its pairs");
    }
}

std::vector<QaPair> ClientShard::effective_pairs(bool include_forget) const {
    std::vector<QaPair> out;
    out.reserve(pairs.size());
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (include_forget || !forget_flags[i]) out.push_back(pairs[i]);
    }
    return out;
}

void LocalTrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("learning_rate must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (local_epochs < 1) throw ConfigError("local_epochs must be >= 1");
    if (!(mu >= 0.0)) throw ConfigError("mu must be >= 0");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be >= 0");
    if (!(grad_clip >= 0.0)) throw ConfigError("grad_clip must be >= 0");
}

double proximal_penalty(const FlatParams& local, const FlatParams& global_ref, double mu) {
    if (local.size() != global_ref.size()) throw DimensionError("proximal penalty operands differ in length");
    if (!(mu >= 0.0)) throw ArgumentError("mu must be >= 0");
    return 0.5 * mu * (local - global_ref).squaredNorm();
}

FlatParams gradient_with_prox(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch,
                              const FlatParams& global_ref, double mu) {
    FlatParams grad = nll_gradient(base, adapter, batch).flatten();
    if (grad.size() != global_ref.size()) throw DimensionError("global reference does not match adapter");
    if (mu != 0.0) grad += mu * (adapter.flatten() - global_ref);
    return grad;
}

double prox_objective(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch,
                      const FlatParams& global_ref, double mu) {
    double value = nll_loss(base, adapter, batch);
    if (mu != 0.0) value += proximal_penalty(adapter.flatten(), global_ref, mu);
    return value;
}

FlatParams prox_sgd_step(const BaseWeights& base, const AdapterGeometry& geom, const FlatParams& params,
                         std::span<const QaPair> batch, const FlatParams& global_ref, double mu, double lr,
                         double weight_decay) {
    const auto adapter = AdapterParams::from_flat(geom, params);
    FlatParams next = params - lr * gradient_with_prox(base, adapter, batch, global_ref, mu);
    if (weight_decay != 0.0) next -= lr * weight_decay * next;
    return next;
}

double scheduled_learning_rate(const LocalTrainConfig& cfg, std::uint64_t global_round, std::size_t epoch,
                               std::size_t step_in_epoch, std::size_t steps_per_epoch) {
    if (cfg.warmup && global_round == 1 && epoch == 0 && steps_per_epoch > 0) {
        return cfg.learning_rate * static_cast<double>(step_in_epoch + 1) / static_cast<double>(steps_per_epoch);
    }
    return cfg.learning_rate;
}

namespace {

struct AdamWState {
    FlatParams m;
    FlatParams v;
    std::size_t t = 0;
};

FlatParams adamw_step(AdamWState& st, const FlatParams& params, const FlatParams& grad, double lr, double wd) {
    constexpr double b1 = 0.9;
    constexpr double b2 = 0.999;
    constexpr double eps = 1e-8;
    ++st.t;
    st.m = b1 * st.m + (1.0 - b1) * grad;
    st.v = b2 * st.v.array() + (1.0 - b2) * grad.array().square();
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(st.t));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(st.t));
    FlatParams next = params.array() - lr * (st.m.array() / c1) / ((st.v.array() / c2).sqrt() + eps);
    if (wd != 0.0) next -= lr * wd * next;
    return next;
}

}  // namespace

ClientUpdate local_train(const BaseWeights& base, const AdapterGeometry& geom, const FlatParams& global_adapter,
                         const ClientShard& shard, const LocalTrainConfig& cfg, bool include_forget,
                         std::uint64_t global_round) {
    cfg.validate();
    if (shard.forget_flags.size() != shard.pairs.size()) {
        throw DimensionError("client " + std::to_string(shard.client_id) + " forget flags do not match its pairs");
    }
    const std::vector<QaPair> pairs = shard.effective_pairs(include_forget);
    if (pairs.empty()) {
        throw DataError("client " + std::to_string(shard.client_id) + " has no pairs left to train on");
    }
    if (static_cast<std::size_t>(global_adapter.size()) != geom.param_count()) {
        throw DimensionError("broadcast adapter does not match the adapter geometry");
    }

    const std::size_t n = pairs.size();
    const std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;

    FlatParams params = global_adapter;
    AdamWState adam{FlatParams::Zero(params.size()), FlatParams::Zero(params.size()), 0};

    ClientUpdate update;
    update.client_id = shard.client_id;
    update.num_examples = n;

    std::vector<std::size_t> order(n);
    std::vector<QaPair> batch;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng rng(derive_seed(cfg.rng_seed, {global_round, epoch}));
        rng.shuffle(std::span<std::size_t>(order));

        for (std::size_t step = 0; step < steps_per_epoch; ++step) {
            const std::size_t lo = step * cfg.batch_size;
            const std::size_t hi = std::min(n, lo + cfg.batch_size);
            batch.clear();
            for (std::size_t i = lo; i < hi; ++i) batch.push_back(pairs[order[i]]);

            const double lr = scheduled_learning_rate(cfg, global_round, epoch, step, steps_per_epoch);
            if (cfg.optimizer == ClientOptimizer::Sgd && cfg.grad_clip == 0.0) {
                params = prox_sgd_step(base, geom, params, batch, global_adapter, cfg.mu, lr, cfg.weight_decay);
                continue;
            }
            const auto adapter = AdapterParams::from_flat(geom, params);
            FlatParams grad = gradient_with_prox(base, adapter, batch, global_adapter, cfg.mu);
            if (cfg.grad_clip > 0.0) {
                const double norm = grad.norm();
                if (norm > cfg.grad_clip) grad *= cfg.grad_clip / norm;
            }
            if (cfg.optimizer == ClientOptimizer::Sgd) {
                params -= lr * grad;
                if (cfg.weight_decay != 0.0) params -= lr * cfg.weight_decay * params;
            } else {
                params = adamw_step(adam, params, grad, lr, cfg.weight_decay);
            }
        }
        const auto adapter = AdapterParams::from_flat(geom, params);
        update.epoch_objective.push_back(prox_objective(base, adapter, pairs, global_adapter, cfg.mu));
    }
    update.params = std::move(params);
    return update;
}

}  // namespace fedforget
