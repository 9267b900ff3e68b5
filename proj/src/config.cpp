// SPDX-License-Identifier: Apache-2.0

#include "fedforget/config.hpp"

#include "fedforget/checksum.hpp"
#include "fedforget/errors.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>

namespace fedforget {

ExperimentConfig::ExperimentConfig() {
    world.num_clients = run.num_clients;
    world.seed = run.master_seed;
}

void ExperimentConfig::set_seed(std::uint64_t seed) {
    world.seed = seed;
    run.master_seed = seed;
}

void ExperimentConfig::validate() const {
    if (world.num_clients != run.num_clients) throw ConfigError("world and run disagree on num_clients");
    world.validate();
    run.validate();
    if (!(run.local.lora_dropout >= 0.0 && run.local.lora_dropout < 1.0)) {
        throw ConfigError("lora_dropout must lie in [0, 1)");
    }
    if (!(pretrain.learning_rate > 0.0)) throw ConfigError("pretrain_lr must be > 0");
    if (pretrain.max_iters < 1) throw ConfigError("pretrain_max_iters must be >= 1");
    if (!(pretrain.target_nll > 0.0 && pretrain.target_nll <= pretrain.failure_nll)) {
        throw ConfigError("pretrain_target_nll must lie in (0, pretrain_failure_nll]");
    }
    if (eval.max_generation_length < 1) throw ConfigError("max_generation_length must be >= 1");
}

namespace {

std::size_t read_size(const YAML::Node& n) {
    const auto v = n.as<long long>();
    if (v < 0) throw ConfigError("expected a non-negative integer");
    return static_cast<std::size_t>(v);
}

std::string optimizer_name(ClientOptimizer o) { return o == ClientOptimizer::Sgd ? "sgd" : "adamw"; }

ClientOptimizer parse_optimizer(const std::string& s) {
    if (s == "sgd") return ClientOptimizer::Sgd;
    if (s == "adamw") return ClientOptimizer::AdamW;
    throw ConfigError("client_optimizer must be sgd or adamw");
}

std::string partition_name(PartitionKind k) { return k == PartitionKind::Uniform ? "uniform" : "dirichlet"; }

PartitionKind parse_partition(const std::string& s) {
    if (s == "uniform") return PartitionKind::Uniform;
    if (s == "dirichlet") return PartitionKind::Dirichlet;
    throw ConfigError("partition must be uniform or dirichlet");
}

struct Binding {
    std::string key;
    std::function<void(ExperimentConfig&, const YAML::Node&)> read;
    std::function<void(const ExperimentConfig&, YAML::Emitter&)> write;
};

template <typename Get>
Binding size_key(std::string key, Get get) {
    return {std::move(key), [get](ExperimentConfig& c, const YAML::Node& n) { get(c) = read_size(n); },
            [get](const ExperimentConfig& c, YAML::Emitter& e) {
                e << static_cast<unsigned long long>(get(c));
            }};
}

template <typename Get>
Binding double_key(std::string key, Get get) {
    return {std::move(key), [get](ExperimentConfig& c, const YAML::Node& n) { get(c) = n.as<double>(); },
            [get](const ExperimentConfig& c, YAML::Emitter& e) { e << get(c); }};
}

template <typename Get>
Binding bool_key(std::string key, Get get) {
    return {std::move(key), [get](ExperimentConfig& c, const YAML::Node& n) { get(c) = n.as<bool>(); },
            [get](const ExperimentConfig& c, YAML::Emitter& e) { e << get(c); }};
}

template <typename Parse, typename Name, typename Get>
Binding enum_key(std::string key, Parse parse, Name name, Get get) {
    return {std::move(key),
            [parse, get](ExperimentConfig& c, const YAML::Node& n) { get(c) = parse(n.as<std::string>()); },
            [name, get](const ExperimentConfig& c, YAML::Emitter& e) {
                e << std::string(name(get(c)));
            }};
}

UnlearnRequest read_request(const YAML::Node& n) {
    if (!n.IsMap()) throw ConfigError("schedule entries must be maps with round, client and indices");
    for (auto it = n.begin(); it != n.end(); ++it) {
        const auto k = it->first.as<std::string>();
        if (k != "round" && k != "client" && k != "indices") {
            throw ConfigError("unknown schedule entry key '" + k + "'");
        }
    }
    if (!n["round"] || !n["client"] || !n["indices"]) {
        throw ConfigError("schedule entries need round, client and indices");
    }
    UnlearnRequest r;
    r.round_issued = read_size(n["round"]);
    r.client_id = read_size(n["client"]);
    for (const auto& i : n["indices"]) r.forget_indices.push_back(read_size(i));
    return r;
}

const std::vector<Binding>& bindings() {
    static const std::vector<Binding> table = [] {
        using C = ExperimentConfig;
        std::vector<Binding> b;
        b.push_back({"seed",
                     [](C& c, const YAML::Node& n) { c.set_seed(n.as<std::uint64_t>()); },
                     [](const C& c, YAML::Emitter& e) { e << static_cast<unsigned long long>(c.run.master_seed); }});
        b.push_back({"num_clients",
                     [](C& c, const YAML::Node& n) { c.world.num_clients = c.run.num_clients = read_size(n); },
                     [](const C& c, YAML::Emitter& e) { e << static_cast<unsigned long long>(c.run.num_clients); }});
        b.push_back(double_key("participation_rate", [](auto& c) -> auto& { return c.run.participation_rate; }));
        b.push_back(size_key("global_rounds", [](auto& c) -> auto& { return c.run.global_rounds; }));
        b.push_back(enum_key("fl_algorithm", [](const std::string& s) { return parse_fed_algorithm(s); },
                             [](FedAlgorithm a) { return to_string(a); },
                             [](auto& c) -> auto& { return c.run.algorithm; }));
        b.push_back(double_key("server_lr", [](auto& c) -> auto& { return c.run.hyper.server_lr; }));
        b.push_back(double_key("beta1", [](auto& c) -> auto& { return c.run.hyper.beta1; }));
        b.push_back(double_key("beta2", [](auto& c) -> auto& { return c.run.hyper.beta2; }));
        b.push_back(double_key("tau", [](auto& c) -> auto& { return c.run.hyper.tau; }));
        b.push_back(double_key("mu", [](auto& c) -> auto& { return c.run.hyper.mu; }));
        b.push_back(double_key("lambda", [](auto& c) -> auto& { return c.run.hyper.lambda; }));
        b.push_back(bool_key("uniform_weights", [](auto& c) -> auto& { return c.run.hyper.uniform_weights; }));

        b.push_back(double_key("learning_rate", [](auto& c) -> auto& { return c.run.local.learning_rate; }));
        b.push_back(double_key("weight_decay", [](auto& c) -> auto& { return c.run.local.weight_decay; }));
        b.push_back(size_key("batch_size", [](auto& c) -> auto& { return c.run.local.batch_size; }));
        b.push_back(size_key("local_epochs", [](auto& c) -> auto& { return c.run.local.local_epochs; }));
        b.push_back(double_key("grad_clip", [](auto& c) -> auto& { return c.run.local.grad_clip; }));
        b.push_back(bool_key("warmup", [](auto& c) -> auto& { return c.run.local.warmup; }));
        b.push_back(enum_key("client_optimizer", parse_optimizer, optimizer_name,
                             [](auto& c) -> auto& { return c.run.local.optimizer; }));
        b.push_back(size_key("lora_rank", [](auto& c) -> auto& { return c.run.lora_rank; }));
        b.push_back(double_key("lora_alpha", [](auto& c) -> auto& { return c.run.lora_alpha; }));
        b.push_back(bool_key("lora_scaled", [](auto& c) -> auto& { return c.run.lora_scaled; }));
        b.push_back(double_key("lora_dropout", [](auto& c) -> auto& { return c.run.local.lora_dropout; }));

        b.push_back(enum_key("unlearn_method", [](const std::string& s) { return parse_unlearn_method(s); },
                             [](UnlearnMethod m) { return to_string(m); },
                             [](auto& c) -> auto& { return c.run.unlearn.method; }));
        b.push_back(double_key("unlearn_gamma", [](auto& c) -> auto& { return c.run.unlearn.gamma; }));
        b.push_back(double_key("unlearn_alpha", [](auto& c) -> auto& { return c.run.unlearn.alpha_retain; }));
        b.push_back(double_key("unlearn_beta", [](auto& c) -> auto& { return c.run.unlearn.beta; }));
        b.push_back(double_key("unlearn_delta", [](auto& c) -> auto& { return c.run.unlearn.delta; }));
        b.push_back(size_key("unlearn_steps", [](auto& c) -> auto& { return c.run.unlearn.steps; }));
        b.push_back(size_key("unlearn_epochs", [](auto& c) -> auto& { return c.run.unlearn.epochs; }));
        b.push_back(double_key("unlearn_lr", [](auto& c) -> auto& { return c.run.unlearn.learning_rate; }));
        b.push_back(size_key("unlearn_batch_size", [](auto& c) -> auto& { return c.run.unlearn.batch_size; }));
        b.push_back(double_key("unlearn_grad_clip", [](auto& c) -> auto& { return c.run.unlearn.grad_clip; }));

        b.push_back(enum_key("request_policy", [](const std::string& s) { return parse_request_policy(s); },
                             [](RequestPolicyKind k) { return to_string(k); },
                             [](auto& c) -> auto& { return c.run.request_policy.kind; }));
        b.push_back({"schedule",
                     [](C& c, const YAML::Node& n) {
                         if (!n.IsSequence() && !n.IsNull()) throw ConfigError("schedule must be a list");
                         c.run.request_policy.schedule.clear();
                         for (const auto& item : n) c.run.request_policy.schedule.push_back(read_request(item));
                     },
                     [](const C& c, YAML::Emitter& e) {
                         e << YAML::Flow << YAML::BeginSeq;
                         for (const auto& r : c.run.request_policy.schedule) {
                             e << YAML::BeginMap << YAML::Key << "round" << YAML::Value
                               << static_cast<unsigned long long>(r.round_issued) << YAML::Key << "client"
                               << YAML::Value << static_cast<unsigned long long>(r.client_id) << YAML::Key
                               << "indices" << YAML::Value << YAML::Flow << YAML::BeginSeq;
                             for (auto i : r.forget_indices) e << static_cast<unsigned long long>(i);
                             e << YAML::EndSeq << YAML::EndMap;
                         }
                         e << YAML::EndSeq;
                     }});
        b.push_back(size_key("checkpoint_every", [](auto& c) -> auto& { return c.run.checkpoint_every; }));
        b.push_back(bool_key("record_wall_clock", [](auto& c) -> auto& { return c.run.record_wall_clock; }));

        b.push_back(size_key("vocab_size", [](auto& c) -> auto& { return c.world.vocab_size; }));
        b.push_back(size_key("facts_per_client", [](auto& c) -> auto& { return c.world.facts_per_client; }));
        b.push_back(size_key("facts_per_entity", [](auto& c) -> auto& { return c.world.facts_per_entity; }));
        b.push_back(size_key("answer_len_min", [](auto& c) -> auto& { return c.world.answer_len_min; }));
        b.push_back(size_key("answer_len_max", [](auto& c) -> auto& { return c.world.answer_len_max; }));
        b.push_back(size_key("num_wrong_answers", [](auto& c) -> auto& { return c.world.num_wrong_answers; }));
        b.push_back(size_key("world_facts_count", [](auto& c) -> auto& { return c.world.world_facts_count; }));
        b.push_back(size_key("real_authors_count", [](auto& c) -> auto& { return c.world.real_authors_count; }));
        b.push_back(double_key("forget_fraction", [](auto& c) -> auto& { return c.world.forget_fraction; }));
        b.push_back(enum_key("partition", parse_partition, partition_name,
                             [](auto& c) -> auto& { return c.world.partition.kind; }));
        b.push_back(double_key("dirichlet_alpha", [](auto& c) -> auto& { return c.world.partition.dirichlet_alpha; }));

        b.push_back(double_key("pretrain_lr", [](auto& c) -> auto& { return c.pretrain.learning_rate; }));
        b.push_back(size_key("pretrain_max_iters", [](auto& c) -> auto& { return c.pretrain.max_iters; }));
        b.push_back(double_key("pretrain_target_nll", [](auto& c) -> auto& { return c.pretrain.target_nll; }));
        b.push_back(double_key("pretrain_failure_nll", [](auto& c) -> auto& { return c.pretrain.failure_nll; }));

        b.push_back(size_key("max_generation_length",
                             [](auto& c) -> auto& { return c.eval.max_generation_length; }));
        return b;
    }();
    return table;
}

std::string nearest_key(std::string_view key) {
    std::string best;
    std::size_t best_d = std::numeric_limits<std::size_t>::max();
    for (const auto& b : bindings()) {
        const auto d = edit_distance(key, b.key);
        if (d < best_d) {
            best_d = d;
            best = b.key;
        }
    }
    return best;
}

}  // namespace

std::size_t edit_distance(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
            diag = up;
        }
    }
    return row[b.size()];
}

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& b : bindings()) out.push_back(b.key);
        return out;
    }();
    return keys;
}

ExperimentConfig parse_config(std::string_view text) {
    YAML::Node root;
    try {
        root = YAML::Load(std::string(text));
    } catch (const YAML::ParserException& e) {
        throw ConfigError("config parse error at line " + std::to_string(e.mark.line + 1) + ": " + e.msg);
    }
    ExperimentConfig cfg;
    if (root.IsNull()) {
        cfg.validate();
        return cfg;
    }
    if (!root.IsMap()) throw ConfigError("config must be a mapping of keys to values");

    for (auto it = root.begin(); it != root.end(); ++it) {
        const auto key = it->first.as<std::string>();
        const auto line = std::to_string(it->first.Mark().line + 1);
        const auto& table = bindings();
        const auto found = std::find_if(table.begin(), table.end(), [&](const Binding& b) { return b.key == key; });
        if (found == table.end()) {
            throw ConfigError("unknown config key '" + key + "' at line " + line + "; did you mean '" +
                              nearest_key(key) + "'?");
        }
        try {
            found->read(cfg, it->second);
        } catch (const YAML::Exception&) {
            throw ConfigError("config key '" + key + "' at line " + line + " has a value of the wrong type");
        } catch (const ConfigError& e) {
            throw ConfigError("config key '" + key + "' at line " + line + ": " + e.what());
        } catch (const ArgumentError& e) {
            throw ConfigError("config key '" + key + "' at line " + line + ": " + e.what());
        }
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream text;
    text << in.rdbuf();
    return parse_config(text.str());
}

std::string dump_config(const ExperimentConfig& cfg) {
    YAML::Emitter e;
    e.SetDoublePrecision(17);
    e << YAML::BeginMap;
    for (const auto& b : bindings()) {
        e << YAML::Key << b.key << YAML::Value;
        b.write(cfg, e);
    }
    e << YAML::EndMap;
    return std::string(e.c_str()) + "\n";
}

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(dump_config(cfg)); }

}  // namespace fedforget
