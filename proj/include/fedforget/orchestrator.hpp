// SPDX-License-Identifier: Apache-2.0
//
// Round loop for federated fine-tuning with interleaved unlearning requests.

#pragma once

#include "fedforget/client.hpp"
#include "fedforget/datagen.hpp"
#include "fedforget/server.hpp"
#include "fedforget/unlearning.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fedforget {

/// Stream tags for derive_seed(master_seed, {tag, ...}).
inline constexpr std::uint64_t kInitStream = 1;
inline constexpr std::uint64_t kSampleStream = 2;
inline constexpr std::uint64_t kLocalStream = 3;     // {tag, round, client}
inline constexpr std::uint64_t kUnlearnStream = 4;   // {tag, round}
inline constexpr std::uint64_t kRequestStream = 5;

struct UnlearnRequest {
    std::size_t client_id = 0;
    std::vector<std::size_t> forget_indices;
    std::uint64_t round_issued = 0;

    bool operator==(const UnlearnRequest&) const = default;
};

enum class RequestPolicyKind { None, EveryRoundRandom, Scheduled };

std::string_view to_string(RequestPolicyKind kind);
RequestPolicyKind parse_request_policy(std::string_view name);

struct RequestPolicy {
    RequestPolicyKind kind = RequestPolicyKind::None;
    /// Scheduled only; round_issued is the round the request arrives.
    std::vector<UnlearnRequest> schedule;
};

struct RunConfig {
    std::size_t num_clients = 30;
    double participation_rate = 0.1;
    std::size_t global_rounds = 10;
    FedAlgorithm algorithm = FedAlgorithm::FedAvg;
    ServerHyper hyper;
    UnlearnConfig unlearn;
    LocalTrainConfig local;
    std::size_t lora_rank = 32;
    double lora_alpha = 64.0;
    bool lora_scaled = true;
    RequestPolicy request_policy;
    std::uint64_t master_seed = 0;
    /// 0 disables periodic checkpoints.
    std::size_t checkpoint_every = 0;
    /// Wall-clock timings are nondeterministic, so they are opt-in.
    bool record_wall_clock = false;

    void validate() const;
    AdapterGeometry geometry(std::size_t vocab_size) const;
};

struct RoundRecord {
    std::uint64_t round = 0;
    std::vector<std::size_t> participants;
    std::string adapter_checksum;
    int indicator = 0;
    std::optional<UnlearnRequest> honored;
    /// Final-epoch local objective of each participant, in participant order.
    std::vector<double> client_objectives;
    std::vector<std::string> warnings;
    std::optional<double> wall_clock_ms;

    bool operator==(const RoundRecord&) const = default;
};

struct RunHistory {
    std::vector<RoundRecord> records;
    FlatParams final_adapter;
    /// Number of times the unlearning operator executed.
    std::size_t unlearn_invocations = 0;
};

/// Resumable state between rounds; everything a checkpoint must carry.
struct SessionState {
    std::uint64_t next_round = 1;
    FlatParams global;
    ServerOptState server;
    std::vector<UnlearnRequest> honored;
    std::vector<UnlearnRequest> pending;
    std::vector<RoundRecord> records;
    std::size_t unlearn_invocations = 0;
    /// Pairs excluded before the run starts (retrain baseline).
    std::vector<std::vector<std::size_t>> initial_exclusions;
};

/// ceil(C*K) distinct ids, sorted, seeded per round.
std::vector<std::size_t> sample_clients(std::uint64_t round, std::size_t num_clients, double participation_rate,
                                        std::uint64_t master_seed);

/// A ~ U(-0.01, 0.01) seeded, B = 0.
FlatParams initial_adapter(const AdapterGeometry& geom, std::uint64_t master_seed);

class TrainingSession {
public:
    TrainingSession(RunConfig cfg, std::vector<ClientShard> shards, const BaseWeights& base,
                    std::vector<std::vector<std::size_t>> initial_exclusions = {});
    TrainingSession(RunConfig cfg, std::vector<ClientShard> shards, const BaseWeights& base, SessionState state);

    bool finished() const { return state_.next_round > cfg_.global_rounds; }
    std::uint64_t next_round() const { return state_.next_round; }

    /// Queues the round's requests and runs the unlearning operator if one
    /// is honored. Must precede train_round for the same round.
    void begin_round();
    /// Local training on the sampled clients and server aggregation.
    void train_round();
    void run_round() {
        begin_round();
        train_round();
    }
    void run_to_end();

    /// Queues a request outside the configured policy.
    void submit(UnlearnRequest request);

    const SessionState& state() const { return state_; }
    const RunConfig& config() const { return cfg_; }
    const std::vector<ClientShard>& shards() const { return shards_; }
    /// Test hook for mutation probes on data the session no longer reads.
    std::vector<ClientShard>& mutable_shards() { return shards_; }
    bool is_excluded(std::size_t client, std::size_t index) const;
    RunHistory history() const;

private:
    void queue_policy_requests(std::uint64_t round);
    std::optional<std::string> check_request(const UnlearnRequest& request) const;
    void honor(const UnlearnRequest& request, RoundRecord& record);
    ClientShard effective_shard(std::size_t client) const;

    RunConfig cfg_;
    std::vector<ClientShard> shards_;
    const BaseWeights& base_;
    AdapterGeometry geom_;
    SessionState state_;
    std::vector<std::vector<bool>> excluded_;
    std::optional<RoundRecord> open_round_;
};

RunHistory run_training(const RunConfig& cfg, const WorldBundle& world, const BaseWeights& base);

/// Fresh training with the given pairs excluded from the start; no unlearning.
RunHistory retrain_baseline(const RunConfig& cfg, const WorldBundle& world, const BaseWeights& base,
                            const std::vector<std::vector<std::size_t>>& forget_sets);

/// Per-client indices of the forget-flagged pairs.
std::vector<std::vector<std::size_t>> flagged_forget_sets(const WorldBundle& world);

/// One request per client holding forget-flagged pairs, issued at `round`.
std::vector<UnlearnRequest> requests_for_flagged(const WorldBundle& world, std::uint64_t round);

}  // namespace fedforget
