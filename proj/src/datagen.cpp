// SPDX-License-Identifier: Apache-2.0

#include "fedforget/datagen.hpp"

#include "fedforget/errors.hpp"
#include "fedforget/rng.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <string>

namespace fedforget {

void WorldConfig::validate() const {
    if (num_clients < 1) throw ConfigError("world needs at least one client");
    if (facts_per_client < 1) throw ConfigError("facts_per_client must be >= 1");
    if (facts_per_entity < 1) throw ConfigError("facts_per_entity must be >= 1");
    if (answer_len_min < 1 || answer_len_max < answer_len_min) throw ConfigError("answer length range is empty");
    if (num_wrong_answers < 3) throw ConfigError("num_wrong_answers must be >= 3");
    if (!(forget_fraction >= 0.0 && forget_fraction <= 1.0)) throw ConfigError("forget_fraction must lie in [0, 1]");
    for (std::size_t pool : {client_fact_count(), world_facts_count, real_authors_count}) {
        if (pool != 0 && pool <= num_wrong_answers) {
            throw ConfigError("each fact pool needs more than num_wrong_answers facts to draw wrong answers from");
        }
    }
    const std::size_t entities = (client_fact_count() + facts_per_entity - 1) / facts_per_entity;
    if (num_clients > entities) {
        throw ConfigError("cannot give " + std::to_string(num_clients) + " clients a disjoint entity each from " +
                          std::to_string(entities) + " entities");
    }
    if (partition.kind == PartitionKind::Dirichlet && !(partition.dirichlet_alpha > 0.0)) {
        throw ConfigError("dirichlet alpha must be > 0");
    }
    if (vocab_size != 0 && vocab_size < required_vocab()) {
        throw ConfigError("vocab_size " + std::to_string(vocab_size) + " is infeasible; the world needs at least " +
                          std::to_string(required_vocab()) + " tokens");
    }
}

std::size_t WorldConfig::required_vocab() const {
    const std::size_t facts = client_fact_count() + world_facts_count + real_authors_count;
    return std::max<std::size_t>(Vocab::kMinSize, 3 + facts * (2 + answer_len_max));
}

namespace {

struct Fact {
    TokenId query;
    TokenId paraphrase;
    TokenSeq answer;  // values followed by EOS
};

class TokenPool {
public:
    TokenPool(std::size_t vocab, Rng& rng) : ids_(vocab - 3) {
        std::iota(ids_.begin(), ids_.end(), TokenId{3});
        rng.shuffle(std::span<TokenId>(ids_));
    }
    TokenId take() { return ids_.at(next_++); }

private:
    std::vector<TokenId> ids_;
    std::size_t next_ = 0;
};

std::vector<Fact> make_facts(std::size_t count, const WorldConfig& cfg, TokenPool& tokens, Rng& rng) {
    std::vector<Fact> facts;
    facts.reserve(count);
    const std::size_t span = cfg.answer_len_max - cfg.answer_len_min + 1;
    for (std::size_t i = 0; i < count; ++i) {
        Fact f;
        f.query = tokens.take();
        f.paraphrase = tokens.take();
        const std::size_t len = cfg.answer_len_min + rng.below(span);
        for (std::size_t j = 0; j < len; ++j) f.answer.push_back(tokens.take());
        f.answer.push_back(Vocab::kEos);
        facts.push_back(std::move(f));
    }
    return facts;
}

std::vector<QaPair> to_pairs(const std::vector<Fact>& facts, std::size_t num_wrong, Rng& rng) {
    std::vector<QaPair> pairs;
    pairs.reserve(facts.size());
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < facts.size(); ++i) {
        QaPair p;
        p.question = {facts[i].query};
        p.paraphrased_question = {facts[i].paraphrase};
        p.answer = facts[i].answer;
        others.clear();
        for (std::size_t j = 0; j < facts.size(); ++j) {
            if (j != i) others.push_back(j);
        }
        // Partial Fisher-Yates: the first num_wrong slots are a uniform sample.
        for (std::size_t k = 0; k < num_wrong; ++k) {
            std::swap(others[k], others[k + rng.below(others.size() - k)]);
            p.wrong_answers.push_back(facts[others[k]].answer);
        }
        pairs.push_back(std::move(p));
    }
    return pairs;
}

std::vector<ChoiceItem> to_choice_items(const std::vector<QaPair>& pairs) {
    std::vector<ChoiceItem> items;
    items.reserve(pairs.size());
    for (const auto& p : pairs) {
        ChoiceItem item{p, {p.answer}};
        item.choices.insert(item.choices.end(), p.wrong_answers.begin(), p.wrong_answers.end());
        items.push_back(std::move(item));
    }
    return items;
}

std::vector<double> dirichlet(std::size_t k, double alpha, Rng& rng) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    std::vector<double> draws(k);
    double total = 0.0;
    for (auto& d : draws) {
        d = gamma(rng.engine());
        total += d;
    }
    if (!(total > 0.0)) return std::vector<double>(k, 1.0 / static_cast<double>(k));
    for (auto& d : draws) d /= total;
    return draws;
}

}  // namespace

std::vector<std::vector<std::size_t>> partition_clients(std::span<const Entity> entities, std::size_t num_clients,
                                                        const PartitionScheme& scheme, std::uint64_t seed) {
    if (num_clients < 1) throw ArgumentError("partition needs at least one client");
    if (num_clients > entities.size()) {
        throw ArgumentError("cannot split " + std::to_string(entities.size()) + " entities across " +
                            std::to_string(num_clients) + " clients");
    }
    Rng rng(derive_seed(seed, {0x9a27}));
    std::vector<std::size_t> order(entities.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(std::span<std::size_t>(order));

    std::vector<std::size_t> counts(num_clients, 1);
    const std::size_t spare = entities.size() - num_clients;
    if (scheme.kind == PartitionKind::Uniform) {
        for (std::size_t i = 0; i < spare; ++i) ++counts[i % num_clients];
    } else {
        // Largest-remainder rounding of the Dirichlet shares of the spare entities.
        const auto share = dirichlet(num_clients, scheme.dirichlet_alpha, rng);
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t k = 0; k < num_clients; ++k) {
            const double exact = share[k] * static_cast<double>(spare);
            const auto whole = static_cast<std::size_t>(std::floor(exact));
            counts[k] += whole;
            assigned += whole;
            remainders.emplace_back(exact - static_cast<double>(whole), k);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& x, const auto& y) { return x.first > y.first; });
        for (std::size_t i = 0; assigned < spare; ++i, ++assigned) ++counts[remainders[i].second];
    }

    std::vector<std::vector<std::size_t>> out(num_clients);
    std::size_t next = 0;
    for (std::size_t k = 0; k < num_clients; ++k) {
        for (std::size_t c = 0; c < counts[k]; ++c) out[k].push_back(order[next++]);
        std::sort(out[k].begin(), out[k].end());
    }
    return out;
}

WorldBundle generate_world(const WorldConfig& cfg) {
    cfg.validate();
    WorldBundle world;
    world.config = cfg;
    world.vocab = Vocab::of_size(cfg.vocab_size == 0 ? cfg.required_vocab() : cfg.vocab_size);

    Rng token_rng(derive_seed(cfg.seed, {1}));
    Rng length_rng(derive_seed(cfg.seed, {2}));
    Rng wrong_rng(derive_seed(cfg.seed, {3}));
    TokenPool tokens(world.vocab.size, token_rng);

    const auto client_facts = make_facts(cfg.client_fact_count(), cfg, tokens, length_rng);
    const auto world_facts = make_facts(cfg.world_facts_count, cfg, tokens, length_rng);
    const auto author_facts = make_facts(cfg.real_authors_count, cfg, tokens, length_rng);

    const auto client_pairs = to_pairs(client_facts, cfg.num_wrong_answers, wrong_rng);
    const auto world_pairs = to_pairs(world_facts, cfg.num_wrong_answers, wrong_rng);
    const auto author_pairs = to_pairs(author_facts, cfg.num_wrong_answers, wrong_rng);

    for (const auto* pool : {&world_pairs, &author_pairs}) {
        for (const auto& p : *pool) {
            world.base_pretrain_corpus.push_back(p);
            QaPair para = p;
            para.question = p.paraphrased_question;
            world.base_pretrain_corpus.push_back(std::move(para));
        }
    }

    std::vector<Entity> entities;
    for (std::size_t i = 0; i < client_pairs.size(); i += cfg.facts_per_entity) {
        Entity e;
        for (std::size_t j = i; j < std::min(client_pairs.size(), i + cfg.facts_per_entity); ++j) e.facts.push_back(j);
        entities.push_back(std::move(e));
    }
    const auto assignment = partition_clients(entities, cfg.num_clients, cfg.partition, cfg.seed);

    // Forget whole entities, starting at a random client and walking the
    // client ring in shard order, until the requested fact count is met.
    const auto n_forget = static_cast<std::size_t>(std::llround(cfg.forget_fraction *
                                                                static_cast<double>(client_pairs.size())));
    Rng forget_rng(derive_seed(cfg.seed, {4}));
    const std::size_t first_client = forget_rng.below(cfg.num_clients);

    world.shards.resize(cfg.num_clients);
    for (std::size_t k = 0; k < cfg.num_clients; ++k) {
        world.shards[k].client_id = k;
        for (auto e : assignment[k]) {
            for (auto f : entities[e].facts) {
                world.shards[k].pairs.push_back(client_pairs[f]);
                world.shards[k].forget_flags.push_back(false);
            }
        }
    }
    std::size_t flagged = 0;
    for (std::size_t step = 0; step < cfg.num_clients && flagged < n_forget; ++step) {
        auto& shard = world.shards[(first_client + step) % cfg.num_clients];
        for (std::size_t i = 0; i < shard.pairs.size() && flagged < n_forget; ++i, ++flagged) {
            shard.forget_flags[i] = true;
        }
    }

    for (const auto& shard : world.shards) {
        for (std::size_t i = 0; i < shard.pairs.size(); ++i) {
            (shard.forget_flags[i] ? world.eval.forget : world.eval.retain).push_back(shard.pairs[i]);
        }
    }
    world.eval.world_facts = to_choice_items(world_pairs);
    world.eval.real_authors = to_choice_items(author_pairs);
    return world;
}

BaseWeights pretrain_base(std::span<const QaPair> corpus, const Vocab& vocab, const PretrainConfig& cfg) {
    if (corpus.empty()) throw ArgumentError("pretraining corpus is empty");
    const auto v = static_cast<Eigen::Index>(vocab.size);
    Matrix w = Matrix::Zero(v, v);
    const double n = static_cast<double>(corpus.size());

    double loss = 0.0;
    for (std::size_t iter = 0; iter <= cfg.max_iters; ++iter) {
        std::map<TokenId, RowVector> grads;
        loss = 0.0;
        for (const auto& pair : corpus) {
            TokenId prev = pair.question.empty() ? Vocab::kBos : pair.question.back();
            for (TokenId next : pair.answer) {
                const RowVector logp = log_softmax(w.row(prev));
                loss -= logp(next);
                RowVector g = logp.array().exp();
                g(next) -= 1.0;
                auto [it, fresh] = grads.try_emplace(prev, RowVector::Zero(v));
                it->second += g / n;
                prev = next;
            }
        }
        loss /= n;
        if (loss < cfg.target_nll || iter == cfg.max_iters) break;
        for (const auto& [row, g] : grads) w.row(row) -= cfg.learning_rate * g;
    }
    if (!(loss < cfg.failure_nll)) {
        throw PretrainError("pretraining stopped at mean NLL " + std::to_string(loss) + " after " +
                            std::to_string(cfg.max_iters) + " iterations");
    }
    return BaseWeights(std::move(w));
}

std::vector<QaPair> forget_pairs(const WorldBundle& world) { return world.eval.forget; }

}  // namespace fedforget
