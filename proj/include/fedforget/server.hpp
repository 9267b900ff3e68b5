// SPDX-License-Identifier: Apache-2.0
//
// Server-side aggregation rules over flattened adapter parameters.
// Every rule except FedAvg/FedProx keeps state across rounds; the state is
// a plain value threaded through each call.

#pragma once

#include "fedforget/types.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fedforget {

enum class FedAlgorithm { FedAvg, FedAvgM, FedProx, FedAdagrad, FedAdam, FedYogi };

std::string_view to_string(FedAlgorithm alg);
FedAlgorithm parse_fed_algorithm(std::string_view name);
inline constexpr FedAlgorithm kAllFedAlgorithms[] = {FedAlgorithm::FedAvg,     FedAlgorithm::FedAvgM,
                                                     FedAlgorithm::FedProx,    FedAlgorithm::FedAdagrad,
                                                     FedAlgorithm::FedAdam,    FedAlgorithm::FedYogi};

enum class AdaptiveVariant { Adagrad, Adam, Yogi };

struct ServerHyper {
    double server_lr = 1.0;  // ε in the adaptive rules
    double beta1 = 0.9;
    double beta2 = 0.99;
    double tau = 1e-3;
    double mu = 0.01;        // client-side proximal strength, carried for FedProx
    double lambda = 1e-3;    // parsed and stored; no rule consumes it
    bool uniform_weights = false;

    bool operator==(const ServerHyper&) const = default;
};

struct ClientUpdate {
    std::size_t client_id = 0;
    FlatParams params;
    std::size_t num_examples = 1;
    /// Local objective on the client's effective shard after each local epoch.
    std::vector<double> epoch_objective;
};

struct ServerOptState {
    FedAlgorithm algorithm = FedAlgorithm::FedAvg;
    std::optional<FlatParams> m;
    std::optional<FlatParams> v;
    std::uint64_t round = 0;
    ServerHyper hyper;

    /// Fresh state with zeroed moments of the given dimension where the
    /// algorithm needs them.
    static ServerOptState fresh(FedAlgorithm algorithm, std::size_t dim, const ServerHyper& hyper = {});

    /// Throws ContractError when the moment presence pattern does not match the tag.
    void validate() const;
};

bool uses_momentum(FedAlgorithm alg);
bool uses_second_moment(FedAlgorithm alg);

/// alpha_k = N_k / sum_j N_j.
std::vector<double> compute_weights(std::span<const ClientUpdate> updates);
std::vector<double> uniform_weights(std::span<const ClientUpdate> updates);

/// sum_k alpha_k * phi_k.
FlatParams fedavg_aggregate(std::span<const ClientUpdate> updates, std::span<const double> weights);

/// sum_k alpha_k * (phi_k - prev).
FlatParams aggregated_delta(const FlatParams& prev_global, std::span<const ClientUpdate> updates,
                            std::span<const double> weights);

struct StepResult {
    FlatParams global;
    ServerOptState state;
};

StepResult fedavgm_step(const ServerOptState& state, const FlatParams& prev_global,
                        std::span<const ClientUpdate> updates, std::span<const double> weights);

/// FedAdagrad / FedAdam / FedYogi. No bias correction; sign(0) = 0 for Yogi.
StepResult adaptive_step(AdaptiveVariant variant, const ServerOptState& state, const FlatParams& prev_global,
                         std::span<const ClientUpdate> updates, std::span<const double> weights);

/// Dispatches on state.algorithm. Weights follow hyper.uniform_weights.
StepResult aggregate(const ServerOptState& state, const FlatParams& prev_global,
                     std::span<const ClientUpdate> updates);

}  // namespace fedforget
