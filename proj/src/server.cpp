// SPDX-License-Identifier: Apache-2.0

#include "fedforget/server.hpp"

#include "fedforget/errors.hpp"

#include <cmath>
#include <string>

namespace fedforget {

namespace {

void check_updates(std::span<const ClientUpdate> updates, std::span<const double> weights) {
    if (updates.empty()) throw ArgumentError("aggregation needs at least one client update");
    if (weights.size() != updates.size()) throw DimensionError("one aggregation weight per update required");
    const auto n = updates.front().params.size();
    for (const auto& u : updates) {
        if (u.params.size() != n) {
            throw DimensionError("client " + std::to_string(u.client_id) + " sent " +
                                 std::to_string(u.params.size()) + " parameters, expected " + std::to_string(n));
        }
    }
}

void check_prev(const FlatParams& prev, std::span<const ClientUpdate> updates) {
    if (prev.size() != updates.front().params.size()) {
        throw DimensionError("previous global has " + std::to_string(prev.size()) + " parameters, updates have " +
                             std::to_string(updates.front().params.size()));
    }
}

void check_moment(const std::optional<FlatParams>& moment, Eigen::Index n, const char* name) {
    if (!moment || moment->size() != n) {
        throw DimensionError(std::string("server state ") + name + " does not match parameter dimension");
    }
}

double sign(double x) { return (x > 0.0) - (x < 0.0); }

}  // namespace

std::string_view to_string(FedAlgorithm alg) {
    switch (alg) {
        case FedAlgorithm::FedAvg: return "FedAvg";
        case FedAlgorithm::FedAvgM: return "FedAvgM";
        case FedAlgorithm::FedProx: return "FedProx";
        case FedAlgorithm::FedAdagrad: return "FedAdagrad";
        case FedAlgorithm::FedAdam: return "FedAdam";
        case FedAlgorithm::FedYogi: return "FedYogi";
    }
    return "?";
}

FedAlgorithm parse_fed_algorithm(std::string_view name) {
    for (auto alg : kAllFedAlgorithms) {
        if (to_string(alg) == name) return alg;
    }
    throw ArgumentError("unknown federated algorithm '" + std::string(name) + "'");
}

bool uses_momentum(FedAlgorithm alg) {
    return alg == FedAlgorithm::FedAvgM || alg == FedAlgorithm::FedAdam || alg == FedAlgorithm::FedYogi;
}

bool uses_second_moment(FedAlgorithm alg) {
    return alg == FedAlgorithm::FedAdagrad || alg == FedAlgorithm::FedAdam || alg == FedAlgorithm::FedYogi;
}

ServerOptState ServerOptState::fresh(FedAlgorithm algorithm, std::size_t dim, const ServerHyper& hyper) {
    ServerOptState state;
    state.algorithm = algorithm;
    state.hyper = hyper;
    const auto n = static_cast<Eigen::Index>(dim);
    if (uses_momentum(algorithm)) state.m = FlatParams::Zero(n);
    if (uses_second_moment(algorithm)) state.v = FlatParams::Zero(n);
    return state;
}

void ServerOptState::validate() const {
    if (m.has_value() != uses_momentum(algorithm) || v.has_value() != uses_second_moment(algorithm)) {
        throw ContractError("server state moments do not match algorithm " + std::string(to_string(algorithm)));
    }
    if (algorithm == FedAlgorithm::FedAdagrad && (v->array() < 0.0).any()) {
        throw ContractError("FedAdagrad second moment must be non-negative");
    }
}

std::vector<double> compute_weights(std::span<const ClientUpdate> updates) {
    if (updates.empty()) throw ArgumentError("compute_weights needs at least one update");
    double total = 0.0;
    for (const auto& u : updates) {
        if (u.num_examples < 1) throw ArgumentError("client update with zero examples");
        total += static_cast<double>(u.num_examples);
    }
    std::vector<double> weights;
    weights.reserve(updates.size());
    for (const auto& u : updates) weights.push_back(static_cast<double>(u.num_examples) / total);
    return weights;
}

std::vector<double> uniform_weights(std::span<const ClientUpdate> updates) {
    if (updates.empty()) throw ArgumentError("uniform_weights needs at least one update");
    return std::vector<double>(updates.size(), 1.0 / static_cast<double>(updates.size()));
}

FlatParams fedavg_aggregate(std::span<const ClientUpdate> updates, std::span<const double> weights) {
    check_updates(updates, weights);
    // Anchored on the first client so identical inputs come back bit-exact even
    // when the weights do not sum to exactly 1 in floating point.
    const FlatParams& anchor = updates.front().params;
    FlatParams offset = FlatParams::Zero(anchor.size());
    for (std::size_t k = 1; k < updates.size(); ++k) offset += weights[k] * (updates[k].params - anchor);
    return anchor + offset;
}

FlatParams aggregated_delta(const FlatParams& prev_global, std::span<const ClientUpdate> updates,
                            std::span<const double> weights) {
    check_updates(updates, weights);
    check_prev(prev_global, updates);
    FlatParams delta = FlatParams::Zero(prev_global.size());
    for (std::size_t k = 0; k < updates.size(); ++k) delta += weights[k] * (updates[k].params - prev_global);
    return delta;
}

StepResult fedavgm_step(const ServerOptState& state, const FlatParams& prev_global,
                        std::span<const ClientUpdate> updates, std::span<const double> weights) {
    if (state.algorithm != FedAlgorithm::FedAvgM) {
        throw ContractError("fedavgm_step called with " + std::string(to_string(state.algorithm)) + " state");
    }
    const FlatParams delta = aggregated_delta(prev_global, updates, weights);
    check_moment(state.m, delta.size(), "momentum");

    StepResult out{FlatParams(), state};
    if (state.round == 0) {
        out.state.m = delta;
    } else {
        out.state.m = state.hyper.beta1 * *state.m + delta;
    }
    out.global = prev_global + *out.state.m;
    out.state.round = state.round + 1;
    return out;
}

StepResult adaptive_step(AdaptiveVariant variant, const ServerOptState& state, const FlatParams& prev_global,
                         std::span<const ClientUpdate> updates, std::span<const double> weights) {
    const FedAlgorithm expected = variant == AdaptiveVariant::Adagrad ? FedAlgorithm::FedAdagrad
                                  : variant == AdaptiveVariant::Adam  ? FedAlgorithm::FedAdam
                                                                      : FedAlgorithm::FedYogi;
    if (state.algorithm != expected) {
        throw ContractError("adaptive step for " + std::string(to_string(expected)) + " called with " +
                            std::string(to_string(state.algorithm)) + " state");
    }
    const auto& h = state.hyper;
    if (!(h.tau > 0.0)) throw ArgumentError("tau must be positive");

    const FlatParams delta = aggregated_delta(prev_global, updates, weights);
    check_moment(state.v, delta.size(), "second moment");
    const auto delta_sq = delta.array().square();

    StepResult out{FlatParams(), state};
    const auto& v_prev = *state.v;
    FlatParams direction;
    switch (variant) {
        case AdaptiveVariant::Adagrad:
            out.state.v = v_prev.array() + delta_sq;
            direction = delta;
            break;
        case AdaptiveVariant::Adam:
        case AdaptiveVariant::Yogi: {
            check_moment(state.m, delta.size(), "momentum");
            if (state.round == 0) {
                out.state.m = delta;
            } else {
                out.state.m = h.beta1 * *state.m + (1.0 - h.beta1) * delta;
            }
            if (variant == AdaptiveVariant::Adam) {
                out.state.v = h.beta2 * v_prev.array() + (1.0 - h.beta2) * delta_sq;
            } else {
                FlatParams v_next(v_prev.size());
                for (Eigen::Index i = 0; i < v_prev.size(); ++i) {
                    const double d2 = delta(i) * delta(i);
                    v_next(i) = v_prev(i) - (1.0 - h.beta2) * d2 * sign(v_prev(i) - d2);
                }
                out.state.v = std::move(v_next);
            }
            direction = *out.state.m;
            break;
        }
    }
    out.global = prev_global.array() + h.server_lr * direction.array() / (out.state.v->array().sqrt() + h.tau);
    out.state.round = state.round + 1;
    return out;
}

StepResult aggregate(const ServerOptState& state, const FlatParams& prev_global,
                     std::span<const ClientUpdate> updates) {
    const auto weights = state.hyper.uniform_weights ? uniform_weights(updates) : compute_weights(updates);
    switch (state.algorithm) {
        case FedAlgorithm::FedAvg:
        case FedAlgorithm::FedProx: {
            check_prev(prev_global, updates);
            StepResult out{fedavg_aggregate(updates, weights), state};
            out.state.round = state.round + 1;
            return out;
        }
        case FedAlgorithm::FedAvgM: return fedavgm_step(state, prev_global, updates, weights);
        case FedAlgorithm::FedAdagrad: return adaptive_step(AdaptiveVariant::Adagrad, state, prev_global, updates, weights);
        case FedAlgorithm::FedAdam: return adaptive_step(AdaptiveVariant::Adam, state, prev_global, updates, weights);
        case FedAlgorithm::FedYogi: return adaptive_step(AdaptiveVariant::Yogi, state, prev_global, updates, weights);
    }
    throw ContractError("unhandled federated algorithm");
}

}  // namespace fedforget
