// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "fedforget/model.hpp"
#include "fedforget/server.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedforget {

struct ClientShard {
    std::size_t client_id = 0;
    std::vector<QaPair> pairs;
    std::vector<bool> forget_flags;

    void validate() const;
    /// Pairs used for training: all of them, or only the unflagged ones.
    std::vector<QaPair> effective_pairs(bool include_forget) const;

    bool operator==(const ClientShard&) const = default;
};

enum class ClientOptimizer { Sgd, AdamW };

struct LocalTrainConfig {
    double learning_rate = 3.0;
    double weight_decay = 0.0;
    std::size_t batch_size = 8;
    std::size_t local_epochs = 5;
    double mu = 0.0;  // FedProx proximal strength; 0 disables the term
    /// Global gradient-norm clip per step; 0 disables.
    double grad_clip = 2.0;
    bool warmup = true;
    std::uint64_t rng_seed = 0;
    ClientOptimizer optimizer = ClientOptimizer::Sgd;
    /// Recorded for config fidelity; the reference model applies no dropout.
    double lora_dropout = 0.0;

    void validate() const;
};

/// (mu/2) * ||local - global_ref||^2.
double proximal_penalty(const FlatParams& local, const FlatParams& global_ref, double mu);

/// nll_gradient + mu * (adapter - global_ref), flattened.
FlatParams gradient_with_prox(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch,
                              const FlatParams& global_ref, double mu);

/// Mini-batch objective: nll_loss + proximal_penalty.
double prox_objective(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> batch,
                      const FlatParams& global_ref, double mu);

/// One plain SGD step with decoupled weight decay applied after the
/// gradient step: w <- w - lr*g; w <- w - lr*wd*w.
FlatParams prox_sgd_step(const BaseWeights& base, const AdapterGeometry& geom, const FlatParams& params,
                         std::span<const QaPair> batch, const FlatParams& global_ref, double mu, double lr,
                         double weight_decay);

/// Learning rate for a step, including the one-epoch linear warmup that
/// applies to the first local epoch of global round 1 only.
double scheduled_learning_rate(const LocalTrainConfig& cfg, std::uint64_t global_round, std::size_t epoch,
                               std::size_t step_in_epoch, std::size_t steps_per_epoch);

/// Local training from the broadcast adapter. Pure given its arguments.
ClientUpdate local_train(const BaseWeights& base, const AdapterGeometry& geom, const FlatParams& global_adapter,
                         const ClientShard& shard, const LocalTrainConfig& cfg, bool include_forget,
                         std::uint64_t global_round = 1);

}  // namespace fedforget
