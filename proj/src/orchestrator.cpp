// SPDX-License-Identifier: Apache-2.0

#include "fedforget/orchestrator.hpp"

#include "fedforget/checksum.hpp"
#include "fedforget/errors.hpp"
#include "fedforget/rng.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <set>

namespace fedforget {

std::string_view to_string(RequestPolicyKind kind) {
    switch (kind) {
        case RequestPolicyKind::None: return "none";
        case RequestPolicyKind::EveryRoundRandom: return "every_round_random";
        case RequestPolicyKind::Scheduled: return "scheduled";
    }
    return "?";
}

RequestPolicyKind parse_request_policy(std::string_view name) {
    for (auto kind : {RequestPolicyKind::None, RequestPolicyKind::EveryRoundRandom, RequestPolicyKind::Scheduled}) {
        if (name == to_string(kind)) return kind;
    }
    throw ArgumentError("unknown request policy '" + std::string(name) + "'");
}

void RunConfig::validate() const {
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (!(participation_rate > 0.0 && participation_rate <= 1.0)) {
        throw ConfigError("participation_rate must lie in (0, 1]");
    }
    if (global_rounds < 1) throw ConfigError("global_rounds must be >= 1");
    if (lora_rank < 1) throw ConfigError("lora_rank must be >= 1");
    if (!(lora_alpha > 0.0)) throw ConfigError("lora_alpha must be > 0");
    if (!(hyper.tau > 0.0)) throw ConfigError("tau must be > 0");
    if (!(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(hyper.beta2 >= 0.0 && hyper.beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(hyper.mu >= 0.0)) throw ConfigError("mu must be >= 0");
    local.validate();
    unlearn.validate();
    for (const auto& r : request_policy.schedule) {
        if (r.round_issued < 1 || r.round_issued > global_rounds) {
            throw ConfigError("scheduled request round " + std::to_string(r.round_issued) + " is outside 1.." +
                              std::to_string(global_rounds));
        }
    }
}

AdapterGeometry RunConfig::geometry(std::size_t vocab_size) const {
    AdapterGeometry geom{vocab_size, lora_rank, lora_alpha, lora_scaled};
    geom.validate();
    return geom;
}

std::vector<std::size_t> sample_clients(std::uint64_t round, std::size_t num_clients, double participation_rate,
                                        std::uint64_t master_seed) {
    // The epsilon keeps 0.1 * 30 at 3 despite 0.1 not being representable.
    auto count = static_cast<std::size_t>(std::ceil(participation_rate * static_cast<double>(num_clients) - 1e-9));
    count = std::clamp<std::size_t>(count, 1, num_clients);
    std::vector<std::size_t> ids(num_clients);
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    Rng rng(derive_seed(master_seed, {kSampleStream, round}));
    for (std::size_t i = 0; i < count; ++i) std::swap(ids[i], ids[i + rng.below(num_clients - i)]);
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

FlatParams initial_adapter(const AdapterGeometry& geom, std::uint64_t master_seed) {
    auto params = AdapterParams::zeros(geom);
    Rng rng(derive_seed(master_seed, {kInitStream}));
    for (Eigen::Index i = 0; i < params.a.rows(); ++i) {
        for (Eigen::Index j = 0; j < params.a.cols(); ++j) params.a(i, j) = rng.uniform(-0.01, 0.01);
    }
    return params.flatten();
}

namespace {

SessionState fresh_state(const RunConfig& cfg, const BaseWeights& base,
                         std::vector<std::vector<std::size_t>> initial_exclusions) {
    cfg.validate();
    const auto geom = cfg.geometry(base.vocab_size());
    SessionState state;
    state.global = initial_adapter(geom, cfg.master_seed);
    state.server = ServerOptState::fresh(cfg.algorithm, geom.param_count(), cfg.hyper);
    state.initial_exclusions = std::move(initial_exclusions);
    return state;
}

}  // namespace

TrainingSession::TrainingSession(RunConfig cfg, std::vector<ClientShard> shards, const BaseWeights& base,
                                 std::vector<std::vector<std::size_t>> initial_exclusions)
    : TrainingSession(cfg, std::move(shards), base, fresh_state(cfg, base, std::move(initial_exclusions))) {}

TrainingSession::TrainingSession(RunConfig cfg, std::vector<ClientShard> shards, const BaseWeights& base,
                                 SessionState state)
    : cfg_(std::move(cfg)), shards_(std::move(shards)), base_(base), state_(std::move(state)) {
    cfg_.validate();
    geom_ = cfg_.geometry(base_.vocab_size());
    if (shards_.size() != cfg_.num_clients) {
        throw ConfigError("config names " + std::to_string(cfg_.num_clients) + " clients but the world has " +
                          std::to_string(shards_.size()) + " shards");
    }
    for (const auto& s : shards_) s.validate();
    if (static_cast<std::size_t>(state_.global.size()) != geom_.param_count()) {
        throw DimensionError("session adapter does not match the configured geometry");
    }
    state_.server.validate();

    excluded_.clear();
    for (const auto& s : shards_) excluded_.emplace_back(s.pairs.size(), false);
    if (!state_.initial_exclusions.empty() && state_.initial_exclusions.size() != shards_.size()) {
        throw DimensionError("initial exclusions must list every client");
    }
    for (std::size_t k = 0; k < state_.initial_exclusions.size(); ++k) {
        for (auto i : state_.initial_exclusions[k]) excluded_.at(k).at(i) = true;
    }
    for (const auto& r : state_.honored) {
        for (auto i : r.forget_indices) excluded_.at(r.client_id).at(i) = true;
    }
}

bool TrainingSession::is_excluded(std::size_t client, std::size_t index) const {
    return excluded_.at(client).at(index);
}

void TrainingSession::submit(UnlearnRequest request) { state_.pending.push_back(std::move(request)); }

void TrainingSession::queue_policy_requests(std::uint64_t round) {
    switch (cfg_.request_policy.kind) {
        case RequestPolicyKind::None: return;
        case RequestPolicyKind::Scheduled:
            for (const auto& r : cfg_.request_policy.schedule) {
                if (r.round_issued == round) state_.pending.push_back(r);
            }
            return;
        case RequestPolicyKind::EveryRoundRandom: {
            // A random client with flagged pairs that are neither forgotten nor already queued.
            std::set<std::pair<std::size_t, std::size_t>> queued;
            for (const auto& r : state_.pending) {
                for (auto i : r.forget_indices) queued.emplace(r.client_id, i);
            }
            std::vector<UnlearnRequest> candidates;
            for (const auto& shard : shards_) {
                UnlearnRequest r{shard.client_id, {}, round};
                for (std::size_t i = 0; i < shard.pairs.size(); ++i) {
                    if (shard.forget_flags[i] && !excluded_[shard.client_id][i] &&
                        !queued.contains({shard.client_id, i})) {
                        r.forget_indices.push_back(i);
                    }
                }
                if (!r.forget_indices.empty()) candidates.push_back(std::move(r));
            }
            if (candidates.empty()) return;
            Rng rng(derive_seed(cfg_.master_seed, {kRequestStream, round}));
            state_.pending.push_back(candidates[rng.below(candidates.size())]);
            return;
        }
    }
}

std::optional<std::string> TrainingSession::check_request(const UnlearnRequest& request) const {
    if (request.client_id >= shards_.size()) {
        return "client " + std::to_string(request.client_id) + " does not exist";
    }
    if (request.forget_indices.empty()) return std::string("request names no pairs");
    std::set<std::size_t> seen;
    for (auto i : request.forget_indices) {
        if (i >= shards_[request.client_id].pairs.size()) {
            return "index " + std::to_string(i) + " is outside client " + std::to_string(request.client_id) +
                   "'s shard";
        }
        if (!seen.insert(i).second) return "index " + std::to_string(i) + " is repeated";
        if (excluded_[request.client_id][i]) return "index " + std::to_string(i) + " is already forgotten";
    }
    return std::nullopt;
}

void TrainingSession::honor(const UnlearnRequest& request, RoundRecord& record) {
    const auto& shard = shards_[request.client_id];
    std::vector<bool> requested(shard.pairs.size(), false);
    std::vector<QaPair> forget;
    for (auto i : request.forget_indices) {
        requested[i] = true;
        forget.push_back(shard.pairs[i]);
    }
    std::vector<QaPair> retain;
    for (std::size_t i = 0; i < shard.pairs.size(); ++i) {
        if (!requested[i] && !excluded_[request.client_id][i]) retain.push_back(shard.pairs[i]);
    }

    UnlearnConfig ucfg = cfg_.unlearn;
    ucfg.rng_seed = derive_seed(cfg_.master_seed, {kUnlearnStream, record.round});
    if (ucfg.uses_retain() && retain.empty()) {
        record.warnings.push_back("client " + std::to_string(request.client_id) +
                                  " has no retained pairs; unlearning without the retain term");
        ucfg.alpha_retain = 0.0;
    }
    state_.global = run_unlearning(base_, geom_, state_.global, ucfg, forget, retain);
    ++state_.unlearn_invocations;

    for (auto i : request.forget_indices) excluded_[request.client_id][i] = true;
    state_.honored.push_back(request);
    record.indicator = 1;
    record.honored = request;
}

void TrainingSession::begin_round() {
    if (finished()) throw ContractError("the run has already completed all rounds");
    if (open_round_) throw ContractError("begin_round called twice for round " + std::to_string(state_.next_round));
    RoundRecord record;
    record.round = state_.next_round;
    queue_policy_requests(record.round);
    // At most one request is honored per round; invalid ones are dropped with a note.
    while (!state_.pending.empty()) {
        UnlearnRequest request = state_.pending.front();
        state_.pending.erase(state_.pending.begin());
        if (auto problem = check_request(request)) {
            record.warnings.push_back("rejected unlearn request: " + *problem);
            continue;
        }
        honor(request, record);
        break;
    }
    open_round_ = std::move(record);
}

ClientShard TrainingSession::effective_shard(std::size_t client) const {
    const auto& shard = shards_[client];
    ClientShard out;
    out.client_id = shard.client_id;
    for (std::size_t i = 0; i < shard.pairs.size(); ++i) {
        if (!excluded_[client][i]) {
            out.pairs.push_back(shard.pairs[i]);
            out.forget_flags.push_back(false);
        }
    }
    return out;
}

void TrainingSession::train_round() {
    if (!open_round_) throw ContractError("train_round needs begin_round first");
    RoundRecord record = std::move(*open_round_);
    open_round_.reset();
    const auto started = std::chrono::steady_clock::now();

    std::vector<ClientUpdate> updates;
    for (auto k : sample_clients(record.round, cfg_.num_clients, cfg_.participation_rate, cfg_.master_seed)) {
        const ClientShard shard = effective_shard(k);
        if (shard.pairs.empty()) {
            record.warnings.push_back("client " + std::to_string(k) + " has no pairs left and sits out");
            continue;
        }
        LocalTrainConfig local = cfg_.local;
        local.rng_seed = derive_seed(cfg_.master_seed, {kLocalStream, record.round, k});
        local.mu = cfg_.algorithm == FedAlgorithm::FedProx ? cfg_.hyper.mu : 0.0;
        updates.push_back(local_train(base_, geom_, state_.global, shard, local, true, record.round));
        record.participants.push_back(k);
        record.client_objectives.push_back(updates.back().epoch_objective.back());
    }
    if (updates.empty()) {
        record.warnings.push_back("no client produced an update; global adapter unchanged");
    } else {
        auto step = aggregate(state_.server, state_.global, updates);
        state_.global = std::move(step.global);
        state_.server = std::move(step.state);
    }
    record.adapter_checksum = params_checksum(state_.global);
    if (cfg_.record_wall_clock) {
        record.wall_clock_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    }
    state_.records.push_back(std::move(record));
    ++state_.next_round;
}

void TrainingSession::run_to_end() {
    while (!finished()) run_round();
}

RunHistory TrainingSession::history() const {
    return RunHistory{state_.records, state_.global, state_.unlearn_invocations};
}

RunHistory run_training(const RunConfig& cfg, const WorldBundle& world, const BaseWeights& base) {
    TrainingSession session(cfg, world.shards, base);
    session.run_to_end();
    return session.history();
}

RunHistory retrain_baseline(const RunConfig& cfg, const WorldBundle& world, const BaseWeights& base,
                            const std::vector<std::vector<std::size_t>>& forget_sets) {
    RunConfig plain = cfg;
    plain.request_policy = {};
    TrainingSession session(plain, world.shards, base, forget_sets);
    session.run_to_end();
    return session.history();
}

std::vector<std::vector<std::size_t>> flagged_forget_sets(const WorldBundle& world) {
    std::vector<std::vector<std::size_t>> sets(world.shards.size());
    for (std::size_t k = 0; k < world.shards.size(); ++k) {
        for (std::size_t i = 0; i < world.shards[k].pairs.size(); ++i) {
            if (world.shards[k].forget_flags[i]) sets[k].push_back(i);
        }
    }
    return sets;
}

std::vector<UnlearnRequest> requests_for_flagged(const WorldBundle& world, std::uint64_t round) {
    std::vector<UnlearnRequest> out;
    const auto sets = flagged_forget_sets(world);
    for (std::size_t k = 0; k < sets.size(); ++k) {
        if (!sets[k].empty()) out.push_back({k, sets[k], round});
    }
    return out;
}

}  // namespace fedforget
