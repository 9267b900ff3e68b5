// SPDX-License-Identifier: Apache-2.0
//
// Forgetting objectives. Each is a reweighting of per-pair sequence
// log-likelihoods, so every gradient goes through weighted_nll_gradient.

#pragma once

#include "fedforget/model.hpp"

#include <cstdint>
#include <span>
#include <string_view>

namespace fedforget {

enum class UnlearnMethod { GradAscent, GradDiff, NPO, SimNPO };

std::string_view to_string(UnlearnMethod method);
UnlearnMethod parse_unlearn_method(std::string_view name);
inline constexpr UnlearnMethod kAllUnlearnMethods[] = {UnlearnMethod::GradAscent, UnlearnMethod::GradDiff,
                                                       UnlearnMethod::NPO, UnlearnMethod::SimNPO};

struct UnlearnConfig {
    UnlearnMethod method = UnlearnMethod::GradDiff;
    double gamma = 1.0;         // forget coefficient (GradAscent, GradDiff)
    double alpha_retain = 1.0;  // retain coefficient (GradDiff, NPO, SimNPO)
    double beta = 0.1;          // inverse temperature (NPO, SimNPO)
    double delta = 0.0;         // SimNPO margin
    /// 0 selects epochs * ceil(|forget| / batch_size).
    std::size_t steps = 0;
    std::size_t epochs = 5;
    double learning_rate = 5.0;
    std::size_t batch_size = 8;
    /// Global gradient-norm clip; 0 disables.
    double grad_clip = 1.0;
    std::uint64_t rng_seed = 0;

    void validate() const;
    std::size_t effective_steps(std::size_t forget_size) const;
    bool uses_retain() const;
};

/// Frozen copy of the pre-unlearning adapter; reference model for NPO.
struct TargetSnapshot {
    AdapterParams adapter;
};

struct LossAndGrad {
    double loss = 0.0;
    AdapterGrad grad;
};

double grad_ascent_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> forget,
                        double gamma = 1.0);

double grad_diff_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> forget,
                      std::span<const QaPair> retain, double gamma = 1.0, double alpha = 1.0);

double npo_loss(const BaseWeights& base, const AdapterParams& adapter, const TargetSnapshot& target,
                std::span<const QaPair> forget, std::span<const QaPair> retain, double beta = 0.1,
                double alpha = 1.0);

double simnpo_loss(const BaseWeights& base, const AdapterParams& adapter, std::span<const QaPair> forget,
                   std::span<const QaPair> retain, double beta = 0.1, double delta = 0.0, double alpha = 1.0);

/// Loss and analytic gradient of the method selected by cfg. `target` is
/// only read for NPO; `retain` may be empty when the retain coefficient is 0
/// or the method has no retain term.
LossAndGrad unlearning_objective(const BaseWeights& base, const AdapterParams& adapter, const UnlearnConfig& cfg,
                                 const TargetSnapshot& target, std::span<const QaPair> forget,
                                 std::span<const QaPair> retain);

/// Applies cfg.steps clipped gradient steps of the chosen objective to the
/// incoming global adapter and returns the unlearned adapter.
FlatParams run_unlearning(const BaseWeights& base, const AdapterGeometry& geom, const FlatParams& global_adapter,
                          const UnlearnConfig& cfg, std::span<const QaPair> forget, std::span<const QaPair> retain);

double log_sigmoid(double x);

}  // namespace fedforget
