// SPDX-License-Identifier: Apache-2.0
//
// Synthetic world: every fact is a unique query token bound to a short
// sequence of value tokens that appear in no other fact, so a bigram model
// can memorize it exactly. World facts and real authors are baked into the
// base model; client facts are only ever seen by the adapter.

#pragma once

#include "fedforget/client.hpp"
#include "fedforget/evaluation.hpp"
#include "fedforget/model.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace fedforget {

enum class PartitionKind { Uniform, Dirichlet };

struct PartitionScheme {
    PartitionKind kind = PartitionKind::Uniform;
    double dirichlet_alpha = 1.0;

    bool operator==(const PartitionScheme&) const = default;
};

struct WorldConfig {
    /// 0 picks the smallest feasible vocabulary.
    std::size_t vocab_size = 0;
    std::size_t num_clients = 6;
    std::size_t facts_per_client = 20;
    std::size_t facts_per_entity = 4;
    std::size_t answer_len_min = 2;
    std::size_t answer_len_max = 3;
    std::size_t num_wrong_answers = 3;
    std::size_t world_facts_count = 20;
    std::size_t real_authors_count = 20;
    double forget_fraction = 0.10;
    PartitionScheme partition;
    std::uint64_t seed = 0;

    void validate() const;
    /// Vocabulary needed when every answer takes the maximum length.
    std::size_t required_vocab() const;
    std::size_t client_fact_count() const { return num_clients * facts_per_client; }
    bool operator==(const WorldConfig&) const = default;
};

struct PretrainConfig {
    double learning_rate = 50.0;
    std::size_t max_iters = 2000;
    double target_nll = 0.05;
    double failure_nll = 0.5;
};

struct WorldBundle {
    Vocab vocab;
    WorldConfig config;
    std::vector<QaPair> base_pretrain_corpus;
    std::vector<ClientShard> shards;
    EvalBundle eval;

    bool operator==(const WorldBundle&) const = default;
};

/// A contiguous group of client facts that is partitioned and forgotten as a unit.
struct Entity {
    std::vector<std::size_t> facts;
};

WorldBundle generate_world(const WorldConfig& cfg);

/// Full-batch gradient descent on the answer NLL of the pretrain corpus,
/// starting from an all-zero logit table.
BaseWeights pretrain_base(std::span<const QaPair> corpus, const Vocab& vocab, const PretrainConfig& cfg);

/// Entity indices assigned to each of K clients; entity-disjoint, every
/// client receives at least one entity.
std::vector<std::vector<std::size_t>> partition_clients(std::span<const Entity> entities, std::size_t num_clients,
                                                        const PartitionScheme& scheme, std::uint64_t seed);

/// Forget-flagged client facts, in shard order.
std::vector<QaPair> forget_pairs(const WorldBundle& world);

}  // namespace fedforget
