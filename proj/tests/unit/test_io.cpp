// SPDX-License-Identifier: Apache-2.0

#include "fedforget/checksum.hpp"
#include "fedforget/config.hpp"
#include "fedforget/errors.hpp"
#include "fedforget/io.hpp"
#include "fedforget/report.hpp"
#include "fixtures.hpp"
#include "helpers.hpp"

#include <doctest.h>

#include <cstdlib>
#include <sstream>

using namespace fedforget;
using namespace fedforget::testing;

namespace {

const std::filesystem::path kGoldenDir = std::filesystem::path(FEDFORGET_SOURCE_DIR) / "tests" / "golden";

// Compares against tests/golden/<name>; FEDFORGET_UPDATE_GOLDEN=1 rewrites the file instead.
void check_golden(const std::string& name, const std::string& actual) {
    const auto path = kGoldenDir / name;
    if (std::getenv("FEDFORGET_UPDATE_GOLDEN") != nullptr) {
        write_file_atomic(path, actual);
        return;
    }
    REQUIRE_MESSAGE(std::filesystem::exists(path), "missing golden file " << path.string());
    const std::string expected = read_file(path);
    INFO("golden file " << name);
    CHECK(actual == expected);
}

std::string error_of(const std::string& yaml) {
    try {
        parse_config(yaml);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

TrainingSession scheduled_session(const SmallWorld& w) {
    auto cfg = small_run();
    cfg.algorithm = FedAlgorithm::FedAdam;
    cfg.request_policy.kind = RequestPolicyKind::Scheduled;
    cfg.request_policy.schedule = {UnlearnRequest{0, {0, 1}, 2}};
    return TrainingSession(cfg, w.world.shards, w.base);
}

}  // namespace

TEST_SUITE("io") {

TEST_CASE("empty config yields the documented defaults") {
    for (const char* text : {"", "# nothing\n", "{}\n"}) {
        const auto cfg = parse_config(text);
        CHECK(cfg.run.lora_rank == 32);
        CHECK(cfg.run.lora_alpha == 64.0);
        CHECK(cfg.run.hyper.beta1 == 0.9);
        CHECK(cfg.run.hyper.beta2 == 0.99);
        CHECK(cfg.run.hyper.tau == 1e-3);
        CHECK(cfg.run.hyper.mu == 0.01);
        CHECK(cfg.run.hyper.server_lr == 1.0);
        CHECK(cfg.run.num_clients == 30);
        CHECK(cfg.run.participation_rate == 0.1);
        CHECK(cfg.run.global_rounds == 10);
        CHECK(cfg.run.local.local_epochs == 5);
        CHECK(cfg.run.request_policy.kind == RequestPolicyKind::None);
        CHECK(cfg.world.num_clients == 30);
    }
}

TEST_CASE("unknown keys name the nearest valid key") {
    const auto msg = error_of("seed: 1\nparticpation_rate: 0.5\n");
    CHECK(msg.find("particpation_rate") != std::string::npos);
    CHECK(msg.find("did you mean 'participation_rate'") != std::string::npos);
    CHECK(msg.find("line 2") != std::string::npos);
    CHECK(edit_distance("particpation_rate", "participation_rate") == 1);
    CHECK(edit_distance("", "abc") == 3);
    CHECK(edit_distance("kitten", "sitting") == 3);
}

TEST_CASE("range, type and syntax errors") {
    auto msg = error_of("participation_rate: 1.5\n");
    CHECK(msg.find("participation_rate") != std::string::npos);
    CHECK(!error_of("participation_rate: 0\n").empty());
    CHECK(error_of("participation_rate: 1.0\n").empty());
    msg = error_of("num_clients: lots\n");
    CHECK(msg.find("num_clients") != std::string::npos);
    CHECK(msg.find("wrong type") != std::string::npos);
    msg = error_of("seed: 1\nglobal_rounds: [1,\n");
    CHECK(msg.find("parse error at line") != std::string::npos);
    CHECK(!error_of("fl_algorithm: FedSGD\n").empty());
    CHECK(!error_of("unlearn_method: RMU\n").empty());
    CHECK(!error_of("request_policy: sometimes\n").empty());
    CHECK(!error_of("lora_dropout: 1.0\n").empty());
    CHECK(!error_of("- 1\n- 2\n").empty());
    CHECK_THROWS_AS(load_config("/nonexistent/fedforget.yaml"), ConfigError);
}

TEST_CASE("schedule entries parse into requests") {
    const auto cfg = parse_config(
        "global_rounds: 5\nrequest_policy: scheduled\nschedule:\n"
        "  - {round: 2, client: 1, indices: [0, 3]}\n  - {round: 5, client: 0, indices: [2]}\n");
    REQUIRE(cfg.run.request_policy.schedule.size() == 2);
    CHECK(cfg.run.request_policy.schedule[0] == UnlearnRequest{1, {0, 3}, 2});
    CHECK(cfg.run.request_policy.schedule[1] == UnlearnRequest{0, {2}, 5});
    CHECK(!error_of("request_policy: scheduled\nschedule:\n  - {round: 1, client: 0, idx: [1]}\n").empty());
    CHECK(!error_of("global_rounds: 3\nrequest_policy: scheduled\nschedule:\n  - {round: 4, client: 0, indices: [1]}\n").empty());
}

TEST_CASE("canonical dump round-trips and is the schema golden") {
    const ExperimentConfig defaults;
    const auto text = dump_config(defaults);
    CHECK(dump_config(parse_config(text)) == text);
    CHECK(config_hash(parse_config(text)) == config_hash(defaults));
    check_golden("config_defaults.yaml", text);

    auto changed = defaults;
    changed.set_seed(9);
    CHECK(config_hash(changed) != config_hash(defaults));
    CHECK(changed.world.seed == 9);

    // Every schema key shows up in the canonical dump.
    for (const auto& key : config_keys()) CHECK(text.find(key + ":") != std::string::npos);
}

TEST_CASE("shipped configs load and validate") {
    const auto root = std::filesystem::path(FEDFORGET_SOURCE_DIR) / "configs";
    for (const char* name : {"desk.yaml", "paper.yaml"}) {
        INFO(name);
        ExperimentConfig cfg;
        CHECK_NOTHROW(cfg = load_config(root / name));
        CHECK_NOTHROW(cfg.validate());
    }
    const auto paper = load_config(root / "paper.yaml");
    CHECK(paper.run.num_clients == 30);
    CHECK(paper.run.participation_rate == 0.1);
    CHECK(paper.run.global_rounds == 10);
    CHECK(paper.run.local.local_epochs == 5);
    CHECK(paper.run.local.learning_rate == 8e-5);
}

TEST_CASE("base64 and array envelopes") {
    CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o', 'o', 'b', 'a', 'r'}) == "Zm9vYmFy");
    CHECK(base64_encode(std::vector<std::uint8_t>{'f', 'o'}) == "Zm8=");
    CHECK(base64_decode("Zm8=") == std::vector<std::uint8_t>{'f', 'o'});
    CHECK_THROWS_AS(base64_decode("Zm8"), IntegrityError);
    CHECK_THROWS_AS(base64_decode("Z!8="), IntegrityError);

    FlatParams v(4);
    v << 1.0, -0.0, 1e-300, 0.1;
    const auto doc = encode_array(v);
    CHECK(doc.at("shape") == Json::array({4}));
    const FlatParams back = decode_array(doc);
    CHECK(back == v);
    CHECK(std::signbit(back(1)));
    // Little-endian image of 1.0.
    CHECK(to_le_bytes(std::vector<double>{1.0}) == std::vector<std::uint8_t>{0, 0, 0, 0, 0, 0, 0xf0, 0x3f});

    auto bad = doc;
    bad["shape"] = Json::array({5});
    CHECK_THROWS_AS(decode_array(bad), IntegrityError);

    Rng rng(1);
    const Matrix m = random_matrix(rng, 3, 5, 1.0);
    CHECK(decode_matrix(encode_matrix(m)) == m);
}

TEST_CASE("world, base and adapter files round-trip") {
    const auto& w = small_world();
    CHECK(world_from_json(Json::parse(to_text(to_json(w.world)))) == w.world);
    CHECK(base_from_json(Json::parse(to_text(base_to_json(w.base)))).logits() == w.base.logits());

    const AdapterGeometry geom{w.world.vocab.size, 4, 8.0, true};
    const auto params = initial_adapter(geom, 2);
    AdapterGeometry back_geom;
    CHECK(adapter_from_json(Json::parse(to_text(adapter_to_json(geom, params))), back_geom) == params);
    CHECK(back_geom == geom);

    auto tampered = adapter_to_json(geom, params);
    tampered["checksum"] = "0000000000000000";
    CHECK_THROWS_AS(adapter_from_json(tampered, back_geom), IntegrityError);
    auto future = to_json(w.world);
    future["format_version"] = kWorldFormatVersion + 1;
    CHECK_THROWS_AS(world_from_json(future), IncompatibleFormatError);
}

TEST_CASE("round log lines parse independently and match the golden") {
    const auto& w = small_world();
    auto session = scheduled_session(w);
    session.run_to_end();
    const auto log = round_log(session.state().records);
    std::istringstream lines(log);
    std::string line;
    std::size_t n = 0;
    while (std::getline(lines, line)) {
        const auto doc = Json::parse(line);
        CHECK(round_record_from_json(doc) == session.state().records.at(n));
        ++n;
    }
    CHECK(n == session.state().records.size());
    CHECK(log.back() == '\n');
    check_golden("round_log.jsonl", log);
}

TEST_CASE("floats survive serialization bit-exactly") {
    Rng rng(2);
    RoundRecord r;
    r.round = 1;
    for (int i = 0; i < 200; ++i) r.client_objectives.push_back(std::ldexp(rng.uniform(-1.0, 1.0), static_cast<int>(rng.below(200)) - 100));
    r.client_objectives.push_back(0.1);
    r.client_objectives.push_back(1.0 / 3.0);
    const auto back = round_record_from_json(Json::parse(to_json(r).dump()));
    CHECK(back.client_objectives == r.client_objectives);
}

TEST_CASE("checkpoints resume bit-exactly") {
    const auto& w = small_world();
    const std::string hash = config_hash(ExperimentConfig{});
    auto full = scheduled_session(w);
    full.run_to_end();

    auto partial = scheduled_session(w);
    partial.run_round();
    partial.run_round();
    const std::string text = to_text(checkpoint_to_json(partial.state(), hash));
    check_golden("checkpoint.json", text);

    TrainingSession resumed(partial.config(), w.world.shards, w.base, checkpoint_from_json(text, hash));
    resumed.run_to_end();
    CHECK(resumed.state().records == full.state().records);
    CHECK(resumed.state().global == full.state().global);
    CHECK(round_log(resumed.state().records) == round_log(full.state().records));
    CHECK(*resumed.state().server.m == *full.state().server.m);
}

TEST_CASE("damaged or foreign checkpoints are refused") {
    const auto& w = small_world();
    const std::string hash = config_hash(ExperimentConfig{});
    auto session = scheduled_session(w);
    session.run_round();
    const auto doc = checkpoint_to_json(session.state(), hash);
    const std::string text = to_text(doc);

    CHECK_THROWS_AS(checkpoint_from_json(text.substr(0, text.size() / 2), hash), IntegrityError);
    CHECK_THROWS_AS(checkpoint_from_json("", hash), IntegrityError);

    auto bumped = doc;
    bumped["format_version"] = kCheckpointFormatVersion + 1;
    CHECK_THROWS_AS(checkpoint_from_json(to_text(bumped), hash), IncompatibleFormatError);

    auto edited = doc;
    edited["payload"]["next_round"] = 7;
    CHECK_THROWS_AS(checkpoint_from_json(to_text(edited), hash), IntegrityError);

    CHECK_THROWS_AS(checkpoint_from_json(text, "different"), IncompatibleFormatError);
    CHECK_NOTHROW(checkpoint_from_json(text, ""));
}

TEST_CASE("eval report json and csv match their goldens") {
    const auto& w = small_world();
    auto session = scheduled_session(w);
    session.run_to_end();
    const auto geom = session.config().geometry(w.world.vocab.size);
    const auto adapter = AdapterParams::from_flat(geom, session.state().global);
    const auto retrain_h = retrain_baseline(session.config(), w.world, w.base, flagged_forget_sets(w.world));
    const auto retrain = AdapterParams::from_flat(geom, retrain_h.final_adapter);
    const ModelView rv{w.base, retrain};
    auto report = evaluate({w.base, adapter}, &rv, w.world.eval);
    report.label = "GradDiff";
    report.algorithm = "FedAdam";
    const auto doc = to_json(report);
    check_golden("eval_report.json", to_text(doc));
    check_golden("eval_report.csv", eval_report_csv(report));

    const auto back = eval_report_from_json(doc);
    CHECK(to_json(back) == doc);
    CHECK(back.model_utility == report.model_utility);
    CHECK(back.forget_raw_truth_ratios == report.forget_raw_truth_ratios);
}

TEST_CASE("comparison table follows the method-by-algorithm layout") {
    std::vector<EvalReport> reports;
    double v = 0.05;
    for (const char* label : {"Retrain", "NPO", "Finetune", "GradAscent", "SimNPO", "GradDiff"}) {
        for (const char* alg : {"FedYogi", "FedAvg"}) {
            EvalReport r;
            r.label = label;
            r.algorithm = alg;
            r.model_utility = v;
            r.forget_truth_ratio = 1.0 - v;
            v += 0.05;
            reports.push_back(r);
        }
    }
    const auto table = build_comparison(reports);
    CHECK(table.rows == std::vector<std::string>{"Finetune", "GradAscent", "GradDiff", "NPO", "SimNPO", "Retrain"});
    CHECK(table.columns == std::vector<std::string>{"FedAvg", "FedYogi"});
    CHECK(*table.cells[5][1].model_utility == doctest::Approx(0.05));
    check_golden("report.txt", render_table(table));
    check_golden("report.csv", comparison_csv(table));
    reports.push_back(reports.front());
    CHECK_THROWS_AS(build_comparison(reports), ArgumentError);
}

TEST_CASE("manifests detect changed inputs") {
    TempDir dir("manifest");
    write_file_atomic(dir / "c.yaml", "seed: 1\n");
    write_file_atomic(dir / "w.json", "{}\n");
    const auto m = make_manifest(dir / "c.yaml", dir / "w.json", dir.path());
    CHECK(m.checksums.size() == 2);
    CHECK(m.checksums.at((dir / "c.yaml").string()) == content_checksum("seed: 1\n"));
    const auto back = manifest_from_json(to_json(m));
    CHECK(back.checksums == m.checksums);
    CHECK(back.created == m.created);
    CHECK_NOTHROW(verify_manifest(m));
    write_file_atomic(dir / "c.yaml", "seed: 2\n");
    CHECK_THROWS_AS(verify_manifest(m), IntegrityError);
    // Git's blob hash of the empty file, under SHA-256.
    CHECK(content_checksum("") == "473a0f4c3be8a93681a267e3b1e9a7dcda1185436fe141f7749120a303721813");
}

TEST_CASE("atomic writes leave no temp files behind") {
    TempDir dir("atomic");
    write_file_atomic(dir / "x.txt", "one");
    write_file_atomic(dir / "x.txt", "two");
    CHECK(read_file(dir / "x.txt") == "two");
    std::size_t files = 0;
    for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir.path())) ++files;
    CHECK(files == 1);
    CHECK_THROWS_AS(read_file(dir / "missing.txt"), DataError);
}

}  // TEST_SUITE
