// SPDX-License-Identifier: Apache-2.0

#include "fedforget/io.hpp"

#include "fedforget/checksum.hpp"
#include "fedforget/errors.hpp"

#include <fmt/format.h>

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

namespace fedforget {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw DataError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string to_text(const Json& doc) { return doc.dump(2) + "\n"; }

namespace {

void expect_format(const Json& doc, std::string_view format, int version) {
    if (!doc.is_object() || !doc.contains("format") || doc.at("format") != format) {
        throw IncompatibleFormatError("document is not a " + std::string(format) + " file");
    }
    const int found = doc.at("format_version").get<int>();
    if (found != version) {
        throw IncompatibleFormatError(std::string(format) + " format version " + std::to_string(found) +
                                      " is not supported (expected " + std::to_string(version) + ")");
    }
}

Json header(std::string_view format, int version) {
    Json doc;
    doc["format"] = format;
    doc["format_version"] = version;
    return doc;
}

Json seq_to_json(const TokenSeq& seq) { return Json(seq); }
TokenSeq seq_from_json(const Json& doc) { return doc.get<TokenSeq>(); }

Json choice_to_json(const ChoiceItem& item) {
    Json doc;
    doc["pair"] = to_json(item.pair);
    doc["choices"] = Json::array();
    for (const auto& c : item.choices) doc["choices"].push_back(seq_to_json(c));
    return doc;
}

ChoiceItem choice_from_json(const Json& doc) {
    ChoiceItem item;
    item.pair = qa_pair_from_json(doc.at("pair"));
    for (const auto& c : doc.at("choices")) item.choices.push_back(seq_from_json(c));
    return item;
}

Json pairs_to_json(const std::vector<QaPair>& pairs) {
    Json out = Json::array();
    for (const auto& p : pairs) out.push_back(to_json(p));
    return out;
}

std::vector<QaPair> pairs_from_json(const Json& doc) {
    std::vector<QaPair> out;
    for (const auto& p : doc) out.push_back(qa_pair_from_json(p));
    return out;
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> number_or_absent(const Json& doc, const char* key) {
    if (!doc.contains(key) || doc.at(key).is_null()) return std::nullopt;
    return doc.at(key).get<double>();
}

Json split_to_json(const std::optional<SplitMetrics>& split) {
    if (!split) return nullptr;
    Json doc;
    doc["probability"] = split->probability;
    doc["rouge"] = split->rouge;
    doc["truth_ratio"] = split->truth_ratio;
    doc["count"] = split->count;
    return doc;
}

std::optional<SplitMetrics> split_from_json(const Json& doc) {
    if (doc.is_null()) return std::nullopt;
    SplitMetrics s;
    s.probability = doc.at("probability").get<double>();
    s.rouge = doc.at("rouge").get<double>();
    s.truth_ratio = doc.at("truth_ratio").get<double>();
    s.count = doc.at("count").get<std::size_t>();
    return s;
}

std::string csv_number(const std::optional<double>& v) { return v ? fmt::format("{}", *v) : std::string(); }

}  // namespace

Json encode_array(const FlatParams& values) {
    Json doc;
    doc["shape"] = {values.size()};
    doc["data"] = base64_encode(to_le_bytes(std::span<const double>(values.data(), values.size())));
    return doc;
}

FlatParams decode_array(const Json& doc) {
    const auto shape = doc.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 1) throw IntegrityError("array shape must have one dimension");
    const auto values = from_le_bytes(base64_decode(doc.at("data").get<std::string>()));
    if (values.size() != shape[0]) {
        throw IntegrityError("array holds " + std::to_string(values.size()) + " values, header says " +
                             std::to_string(shape[0]));
    }
    return Eigen::Map<const FlatParams>(values.data(), static_cast<Eigen::Index>(values.size()));
}

Json encode_matrix(const Matrix& m) {
    Json doc;
    doc["shape"] = {m.rows(), m.cols()};
    doc["data"] = base64_encode(to_le_bytes(std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))));
    return doc;
}

Matrix decode_matrix(const Json& doc) {
    const auto shape = doc.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 2) throw IntegrityError("matrix shape must have two dimensions");
    const auto values = from_le_bytes(base64_decode(doc.at("data").get<std::string>()));
    if (values.size() != shape[0] * shape[1]) throw IntegrityError("matrix data does not match its shape header");
    return Eigen::Map<const Matrix>(values.data(), static_cast<Eigen::Index>(shape[0]),
                                    static_cast<Eigen::Index>(shape[1]));
}

Json to_json(const QaPair& pair) {
    Json doc;
    doc["question"] = seq_to_json(pair.question);
    doc["answer"] = seq_to_json(pair.answer);
    doc["paraphrased_question"] = seq_to_json(pair.paraphrased_question);
    doc["wrong_answers"] = Json::array();
    for (const auto& w : pair.wrong_answers) doc["wrong_answers"].push_back(seq_to_json(w));
    return doc;
}

QaPair qa_pair_from_json(const Json& doc) {
    QaPair p;
    p.question = seq_from_json(doc.at("question"));
    p.answer = seq_from_json(doc.at("answer"));
    p.paraphrased_question = seq_from_json(doc.at("paraphrased_question"));
    for (const auto& w : doc.at("wrong_answers")) p.wrong_answers.push_back(seq_from_json(w));
    return p;
}

Json to_json(const WorldBundle& world) {
    Json doc = header("fedforget-world", kWorldFormatVersion);
    const auto& c = world.config;
    doc["config"] = {{"vocab_size", c.vocab_size},
                     {"num_clients", c.num_clients},
                     {"facts_per_client", c.facts_per_client},
                     {"facts_per_entity", c.facts_per_entity},
                     {"answer_len_min", c.answer_len_min},
                     {"answer_len_max", c.answer_len_max},
                     {"num_wrong_answers", c.num_wrong_answers},
                     {"world_facts_count", c.world_facts_count},
                     {"real_authors_count", c.real_authors_count},
                     {"forget_fraction", c.forget_fraction},
                     {"partition", c.partition.kind == PartitionKind::Uniform ? "uniform" : "dirichlet"},
                     {"dirichlet_alpha", c.partition.dirichlet_alpha},
                     {"seed", c.seed}};
    doc["vocab_size"] = world.vocab.size;
    doc["pretrain_corpus"] = pairs_to_json(world.base_pretrain_corpus);
    doc["shards"] = Json::array();
    for (const auto& s : world.shards) {
        Json shard;
        shard["client_id"] = s.client_id;
        shard["pairs"] = pairs_to_json(s.pairs);
        shard["forget_flags"] = s.forget_flags;
        doc["shards"].push_back(std::move(shard));
    }
    Json eval;
    eval["forget"] = pairs_to_json(world.eval.forget);
    eval["retain"] = pairs_to_json(world.eval.retain);
    eval["real_authors"] = Json::array();
    for (const auto& i : world.eval.real_authors) eval["real_authors"].push_back(choice_to_json(i));
    eval["world_facts"] = Json::array();
    for (const auto& i : world.eval.world_facts) eval["world_facts"].push_back(choice_to_json(i));
    doc["eval"] = std::move(eval);
    return doc;
}

WorldBundle world_from_json(const Json& doc) {
    expect_format(doc, "fedforget-world", kWorldFormatVersion);
    WorldBundle w;
    const auto& c = doc.at("config");
    w.config.vocab_size = c.at("vocab_size").get<std::size_t>();
    w.config.num_clients = c.at("num_clients").get<std::size_t>();
    w.config.facts_per_client = c.at("facts_per_client").get<std::size_t>();
    w.config.facts_per_entity = c.at("facts_per_entity").get<std::size_t>();
    w.config.answer_len_min = c.at("answer_len_min").get<std::size_t>();
    w.config.answer_len_max = c.at("answer_len_max").get<std::size_t>();
    w.config.num_wrong_answers = c.at("num_wrong_answers").get<std::size_t>();
    w.config.world_facts_count = c.at("world_facts_count").get<std::size_t>();
    w.config.real_authors_count = c.at("real_authors_count").get<std::size_t>();
    w.config.forget_fraction = c.at("forget_fraction").get<double>();
    w.config.partition.kind =
        c.at("partition").get<std::string>() == "uniform" ? PartitionKind::Uniform : PartitionKind::Dirichlet;
    w.config.partition.dirichlet_alpha = c.at("dirichlet_alpha").get<double>();
    w.config.seed = c.at("seed").get<std::uint64_t>();
    w.vocab = Vocab::of_size(doc.at("vocab_size").get<std::size_t>());
    w.base_pretrain_corpus = pairs_from_json(doc.at("pretrain_corpus"));
    for (const auto& s : doc.at("shards")) {
        ClientShard shard;
        shard.client_id = s.at("client_id").get<std::size_t>();
        shard.pairs = pairs_from_json(s.at("pairs"));
        shard.forget_flags = s.at("forget_flags").get<std::vector<bool>>();
        shard.validate();
        w.shards.push_back(std::move(shard));
    }
    const auto& e = doc.at("eval");
    w.eval.forget = pairs_from_json(e.at("forget"));
    w.eval.retain = pairs_from_json(e.at("retain"));
    for (const auto& i : e.at("real_authors")) w.eval.real_authors.push_back(choice_from_json(i));
    for (const auto& i : e.at("world_facts")) w.eval.world_facts.push_back(choice_from_json(i));
    return w;
}

Json base_to_json(const BaseWeights& base) {
    Json doc = header("fedforget-base", kBaseFormatVersion);
    doc["logits"] = encode_matrix(base.logits());
    doc["sha256"] = sha256_hex(to_le_bytes(
        std::span<const double>(base.logits().data(), static_cast<std::size_t>(base.logits().size()))));
    return doc;
}

BaseWeights base_from_json(const Json& doc) {
    expect_format(doc, "fedforget-base", kBaseFormatVersion);
    Matrix m = decode_matrix(doc.at("logits"));
    const auto digest = sha256_hex(to_le_bytes(std::span<const double>(m.data(), static_cast<std::size_t>(m.size()))));
    if (digest != doc.at("sha256").get<std::string>()) throw IntegrityError("base weights fail their checksum");
    return BaseWeights(std::move(m));
}

Json adapter_to_json(const AdapterGeometry& geom, const FlatParams& params) {
    Json doc = header("fedforget-adapter", kAdapterFormatVersion);
    doc["vocab_size"] = geom.vocab_size;
    doc["rank"] = geom.rank;
    doc["alpha"] = geom.alpha;
    doc["scaled"] = geom.scaled;
    doc["checksum"] = params_checksum(params);
    doc["params"] = encode_array(params);
    return doc;
}

FlatParams adapter_from_json(const Json& doc, AdapterGeometry& geom) {
    expect_format(doc, "fedforget-adapter", kAdapterFormatVersion);
    geom.vocab_size = doc.at("vocab_size").get<std::size_t>();
    geom.rank = doc.at("rank").get<std::size_t>();
    geom.alpha = doc.at("alpha").get<double>();
    geom.scaled = doc.at("scaled").get<bool>();
    geom.validate();
    FlatParams params = decode_array(doc.at("params"));
    if (static_cast<std::size_t>(params.size()) != geom.param_count()) {
        throw IntegrityError("adapter parameter count does not match its geometry");
    }
    if (params_checksum(params) != doc.at("checksum").get<std::string>()) {
        throw IntegrityError("adapter parameters fail their checksum");
    }
    return params;
}

Json to_json(const UnlearnRequest& request) {
    return Json{{"client", request.client_id}, {"indices", request.forget_indices}, {"round", request.round_issued}};
}

UnlearnRequest unlearn_request_from_json(const Json& doc) {
    UnlearnRequest r;
    r.client_id = doc.at("client").get<std::size_t>();
    r.forget_indices = doc.at("indices").get<std::vector<std::size_t>>();
    r.round_issued = doc.at("round").get<std::uint64_t>();
    return r;
}

Json to_json(const ServerOptState& state) {
    Json doc;
    doc["algorithm"] = to_string(state.algorithm);
    doc["round"] = state.round;
    doc["hyper"] = {{"server_lr", state.hyper.server_lr}, {"beta1", state.hyper.beta1},
                    {"beta2", state.hyper.beta2},         {"tau", state.hyper.tau},
                    {"mu", state.hyper.mu},               {"lambda", state.hyper.lambda},
                    {"uniform_weights", state.hyper.uniform_weights}};
    doc["m"] = state.m ? encode_array(*state.m) : Json(nullptr);
    doc["v"] = state.v ? encode_array(*state.v) : Json(nullptr);
    return doc;
}

ServerOptState server_state_from_json(const Json& doc) {
    ServerOptState s;
    s.algorithm = parse_fed_algorithm(doc.at("algorithm").get<std::string>());
    s.round = doc.at("round").get<std::uint64_t>();
    const auto& h = doc.at("hyper");
    s.hyper.server_lr = h.at("server_lr").get<double>();
    s.hyper.beta1 = h.at("beta1").get<double>();
    s.hyper.beta2 = h.at("beta2").get<double>();
    s.hyper.tau = h.at("tau").get<double>();
    s.hyper.mu = h.at("mu").get<double>();
    s.hyper.lambda = h.at("lambda").get<double>();
    s.hyper.uniform_weights = h.at("uniform_weights").get<bool>();
    if (!doc.at("m").is_null()) s.m = decode_array(doc.at("m"));
    if (!doc.at("v").is_null()) s.v = decode_array(doc.at("v"));
    s.validate();
    return s;
}

Json to_json(const RoundRecord& record) {
    Json doc;
    doc["round"] = record.round;
    doc["participants"] = record.participants;
    doc["adapter_checksum"] = record.adapter_checksum;
    doc["indicator"] = record.indicator;
    doc["honored"] = record.honored ? to_json(*record.honored) : Json(nullptr);
    doc["client_objectives"] = record.client_objectives;
    doc["warnings"] = record.warnings;
    if (record.wall_clock_ms) doc["wall_clock_ms"] = *record.wall_clock_ms;
    return doc;
}

RoundRecord round_record_from_json(const Json& doc) {
    RoundRecord r;
    r.round = doc.at("round").get<std::uint64_t>();
    r.participants = doc.at("participants").get<std::vector<std::size_t>>();
    r.adapter_checksum = doc.at("adapter_checksum").get<std::string>();
    r.indicator = doc.at("indicator").get<int>();
    if (!doc.at("honored").is_null()) r.honored = unlearn_request_from_json(doc.at("honored"));
    r.client_objectives = doc.at("client_objectives").get<std::vector<double>>();
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    r.wall_clock_ms = number_or_absent(doc, "wall_clock_ms");
    return r;
}

std::string round_log(const std::vector<RoundRecord>& records) {
    std::string out;
    for (const auto& r : records) out += to_json(r).dump() + "\n";
    return out;
}

Json checkpoint_to_json(const SessionState& state, const std::string& config_hash) {
    Json payload;
    payload["next_round"] = state.next_round;
    payload["global"] = encode_array(state.global);
    payload["server"] = to_json(state.server);
    payload["honored"] = Json::array();
    for (const auto& r : state.honored) payload["honored"].push_back(to_json(r));
    payload["pending"] = Json::array();
    for (const auto& r : state.pending) payload["pending"].push_back(to_json(r));
    payload["records"] = Json::array();
    for (const auto& r : state.records) payload["records"].push_back(to_json(r));
    payload["unlearn_invocations"] = state.unlearn_invocations;
    payload["initial_exclusions"] = state.initial_exclusions;

    Json doc = header("fedforget-checkpoint", kCheckpointFormatVersion);
    doc["config_hash"] = config_hash;
    doc["integrity"] = sha256_hex(payload.dump());
    doc["payload"] = std::move(payload);
    return doc;
}

SessionState checkpoint_from_json(const std::string& text, const std::string& expected_config_hash) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw IntegrityError(std::string("checkpoint is truncated or malformed: ") + e.what());
    }
    try {
        expect_format(doc, "fedforget-checkpoint", kCheckpointFormatVersion);
        const auto& payload = doc.at("payload");
        if (sha256_hex(payload.dump()) != doc.at("integrity").get<std::string>()) {
            throw IntegrityError("checkpoint payload fails its integrity hash");
        }
        if (!expected_config_hash.empty() && doc.at("config_hash").get<std::string>() != expected_config_hash) {
            throw IncompatibleFormatError("checkpoint was written for a different configuration");
        }
        SessionState s;
        s.next_round = payload.at("next_round").get<std::uint64_t>();
        s.global = decode_array(payload.at("global"));
        s.server = server_state_from_json(payload.at("server"));
        for (const auto& r : payload.at("honored")) s.honored.push_back(unlearn_request_from_json(r));
        for (const auto& r : payload.at("pending")) s.pending.push_back(unlearn_request_from_json(r));
        for (const auto& r : payload.at("records")) s.records.push_back(round_record_from_json(r));
        s.unlearn_invocations = payload.at("unlearn_invocations").get<std::size_t>();
        s.initial_exclusions = payload.at("initial_exclusions").get<std::vector<std::vector<std::size_t>>>();
        return s;
    } catch (const Json::exception& e) {
        throw IntegrityError(std::string("checkpoint content is damaged: ") + e.what());
    }
}

Json to_json(const EvalReport& report) {
    Json doc = header("fedforget-eval", kReportFormatVersion);
    doc["label"] = report.label;
    doc["algorithm"] = report.algorithm;
    doc["model_checksum"] = report.model_checksum;
    doc["splits"] = {{"forget", split_to_json(report.forget)},
                     {"retain", split_to_json(report.retain)},
                     {"real_authors", split_to_json(report.real_authors)},
                     {"world_facts", split_to_json(report.world_facts)}};
    doc["model_utility"] = optional_number(report.model_utility);
    doc["forget_truth_ratio"] = optional_number(report.forget_truth_ratio);
    doc["forget_quality"] = report.forget_quality
                                ? Json{{"statistic", report.forget_quality->statistic},
                                       {"p_value", report.forget_quality->p_value}}
                                : Json(nullptr);
    doc["nvm"] = optional_number(report.nvm);
    doc["nkm"] = optional_number(report.nkm);
    doc["up"] = optional_number(report.up);
    doc["forget_raw_truth_ratios"] = report.forget_raw_truth_ratios;
    doc["warnings"] = report.warnings;
    return doc;
}

EvalReport eval_report_from_json(const Json& doc) {
    expect_format(doc, "fedforget-eval", kReportFormatVersion);
    EvalReport r;
    r.label = doc.at("label").get<std::string>();
    r.algorithm = doc.at("algorithm").get<std::string>();
    r.model_checksum = doc.at("model_checksum").get<std::string>();
    const auto& s = doc.at("splits");
    r.forget = split_from_json(s.at("forget"));
    r.retain = split_from_json(s.at("retain"));
    r.real_authors = split_from_json(s.at("real_authors"));
    r.world_facts = split_from_json(s.at("world_facts"));
    r.model_utility = number_or_absent(doc, "model_utility");
    r.forget_truth_ratio = number_or_absent(doc, "forget_truth_ratio");
    if (!doc.at("forget_quality").is_null()) {
        r.forget_quality = KsResult{doc.at("forget_quality").at("statistic").get<double>(),
                                    doc.at("forget_quality").at("p_value").get<double>()};
    }
    r.nvm = number_or_absent(doc, "nvm");
    r.nkm = number_or_absent(doc, "nkm");
    r.up = number_or_absent(doc, "up");
    r.forget_raw_truth_ratios = doc.at("forget_raw_truth_ratios").get<std::vector<double>>();
    r.warnings = doc.at("warnings").get<std::vector<std::string>>();
    return r;
}

std::string eval_report_csv(const EvalReport& r) {
    std::string head = "label,algorithm";
    std::string row = r.label + "," + r.algorithm;
    const std::pair<const char*, const std::optional<SplitMetrics>*> splits[] = {
        {"forget", &r.forget}, {"retain", &r.retain}, {"real_authors", &r.real_authors},
        {"world_facts", &r.world_facts}};
    for (const auto& [name, split] : splits) {
        for (const char* metric : {"probability", "rouge", "truth_ratio"}) {
            head += fmt::format(",{}_{}", name, metric);
            std::optional<double> v;
            if (*split) {
                const auto& s = **split;
                v = std::string_view(metric) == "probability" ? s.probability
                    : std::string_view(metric) == "rouge"     ? s.rouge
                                                              : s.truth_ratio;
            }
            row += "," + csv_number(v);
        }
    }
    head += ",model_utility,ftr,ks_statistic,ks_p_value,nvm,nkm,up\n";
    row += "," + csv_number(r.model_utility) + "," + csv_number(r.forget_truth_ratio);
    row += "," + csv_number(r.forget_quality ? std::optional(r.forget_quality->statistic) : std::nullopt);
    row += "," + csv_number(r.forget_quality ? std::optional(r.forget_quality->p_value) : std::nullopt);
    row += "," + csv_number(r.nvm) + "," + csv_number(r.nkm) + "," + csv_number(r.up) + "\n";
    return head + row;
}

Json to_json(const RunManifest& m) {
    Json doc = header("fedforget-manifest", 1);
    doc["config_path"] = m.config_path;
    doc["world_path"] = m.world_path;
    doc["output_dir"] = m.output_dir;
    doc["created"] = m.created;
    doc["checksums"] = Json::object();
    for (const auto& [path, sum] : m.checksums) doc["checksums"][path] = sum;
    return doc;
}

RunManifest manifest_from_json(const Json& doc) {
    expect_format(doc, "fedforget-manifest", 1);
    RunManifest m;
    m.config_path = doc.at("config_path").get<std::string>();
    m.world_path = doc.at("world_path").get<std::string>();
    m.output_dir = doc.at("output_dir").get<std::string>();
    m.created = doc.at("created").get<std::string>();
    for (const auto& [path, sum] : doc.at("checksums").items()) m.checksums[path] = sum.get<std::string>();
    return m;
}

RunManifest make_manifest(const fs::path& config, const fs::path& world, const fs::path& output_dir) {
    RunManifest m;
    m.config_path = config.string();
    m.world_path = world.string();
    m.output_dir = output_dir.string();
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
    m.created = stamp;
    for (const auto& p : {config, world}) {
        if (!p.empty()) m.checksums[p.string()] = content_checksum(read_file(p));
    }
    return m;
}

void verify_manifest(const RunManifest& manifest) {
    for (const auto& [path, sum] : manifest.checksums) {
        if (content_checksum(read_file(path)) != sum) throw IntegrityError(path + " changed since the run started");
    }
}

}  // namespace fedforget
