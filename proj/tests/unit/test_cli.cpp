// SPDX-License-Identifier: Apache-2.0

#include "fedforget/cli.hpp"
#include "fedforget/io.hpp"
#include "fixtures.hpp"

#include <doctest.h>

#include <sstream>

using namespace fedforget;
using namespace fedforget::testing;

namespace {

struct Outcome {
    int code;
    std::string out;
    std::string err;
};

Outcome run(std::vector<std::string> args) {
    args.insert(args.begin(), "fedforget");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

constexpr const char* kTinyConfig = R"(seed: 4
num_clients: 3
participation_rate: 1.0
global_rounds: 4
fl_algorithm: FedAvg
local_epochs: 2
lora_rank: 4
lora_alpha: 8
facts_per_client: 8
facts_per_entity: 2
world_facts_count: 8
real_authors_count: 8
forget_fraction: 0.25
unlearn_method: NPO
unlearn_epochs: 2
request_policy: scheduled
schedule:
  - {round: 2, client: 1, indices: [0]}
checkpoint_every: 2
)";

// gen-world, pretrain, train, retrain, eval x2, report under `dir`.
void pipeline(const TempDir& dir) {
    const auto p = [&](const std::string& n) { return (dir / n).string(); };
    write_file_atomic(p("c.yaml"), kTinyConfig);
    REQUIRE(run({"gen-world", "--config", p("c.yaml"), "--out", p("world.json")}).code == kExitOk);
    REQUIRE(run({"pretrain", "--config", p("c.yaml"), "--world", p("world.json"), "--out", p("base.json")}).code == kExitOk);
    const std::vector<std::string> common{"--config", p("c.yaml"), "--world", p("world.json"), "--base", p("base.json")};
    auto with = [&](std::vector<std::string> head, std::vector<std::string> tail) {
        head.insert(head.end(), common.begin(), common.end());
        head.insert(head.end(), tail.begin(), tail.end());
        return head;
    };
    REQUIRE(run(with({"train"}, {"--out", p("train")})).code == kExitOk);
    REQUIRE(run(with({"retrain"}, {"--out", p("retrain")})).code == kExitOk);
    REQUIRE(run(with({"eval"}, {"--adapter", p("train/adapter.json"), "--retrain", p("retrain/adapter.json"), "--out",
                                p("npo.json")}))
                .code == kExitOk);
    REQUIRE(run(with({"eval"}, {"--adapter", p("retrain/adapter.json"), "--retrain", p("retrain/adapter.json"),
                                "--label", "Retrain", "--out", p("retrain.json")}))
                .code == kExitOk);
    REQUIRE(run({"report", p("npo.json"), p("retrain.json"), "--out", p("table")}).code == kExitOk);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with 1") {
    auto r = run({});
    CHECK(r.code == kExitUsage);
    r = run({"train"});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("--config") != std::string::npos);
    CHECK(r.err.find("Usage") != std::string::npos);
    r = run({"frobnicate"});
    CHECK(r.code == kExitUsage);
    r = run({"gen-world", "--config", "/nonexistent.yaml", "--out", "x"});
    CHECK(r.code == kExitUsage);
    CHECK(run({"--help"}).code == kExitOk);
}

TEST_CASE("runtime errors exit with 2") {
    TempDir dir("cli-runtime");
    write_file_atomic(dir / "bad.yaml", "particpation_rate: 0.5\n");
    auto r = run({"gen-world", "--config", (dir / "bad.yaml").string(), "--out", (dir / "w.json").string()});
    CHECK(r.code == kExitRuntime);
    CHECK(r.err.find("did you mean 'participation_rate'") != std::string::npos);
    CHECK(!std::filesystem::exists(dir / "w.json"));
}

TEST_CASE("gen-world is byte-identical across runs and honors --seed") {
    TempDir dir("cli-gen");
    write_file_atomic(dir / "c.yaml", kTinyConfig);
    const auto cfg = (dir / "c.yaml").string();
    REQUIRE(run({"gen-world", "--config", cfg, "--out", (dir / "a.json").string()}).code == kExitOk);
    REQUIRE(run({"gen-world", "--config", cfg, "--out", (dir / "b.json").string()}).code == kExitOk);
    REQUIRE(run({"gen-world", "--config", cfg, "--seed", "5", "--out", (dir / "c.json").string()}).code == kExitOk);
    CHECK(read_file(dir / "a.json") == read_file(dir / "b.json"));
    CHECK(read_file(dir / "a.json") != read_file(dir / "c.json"));
}

TEST_CASE("full pipeline is reproducible and replay matches") {
    TempDir a("cli-a"), b("cli-b");
    pipeline(a);
    pipeline(b);
    for (const char* f : {"table.txt", "table.json", "table.csv", "npo.json", "npo.csv", "train/rounds.jsonl",
                          "train/adapter.json", "retrain/adapter.json", "base.json", "world.json"}) {
        INFO(f);
        CHECK(read_file(a / f) == read_file(b / f));
    }
    const auto table = read_file(a / "table.txt");
    CHECK(table.find("NPO") != std::string::npos);
    CHECK(table.find("Retrain") != std::string::npos);
    CHECK(table.find("FedAvg") != std::string::npos);

    const auto eval = Json::parse(read_file(a / "retrain.json"));
    CHECK(eval["forget_quality"]["statistic"] == 0.0);
    CHECK(eval["forget_quality"]["p_value"] == 1.0);

    const auto log = read_file(a / "train/rounds.jsonl");
    std::istringstream lines(log);
    std::string line;
    std::vector<int> ind;
    while (std::getline(lines, line)) ind.push_back(Json::parse(line)["indicator"].get<int>());
    CHECK(ind == std::vector<int>{0, 1, 0, 0});
    CHECK(std::filesystem::exists(a / "train/checkpoints/round-0002.json"));
    CHECK(std::filesystem::exists(a / "train/checkpoints/round-0004.json"));
    CHECK(std::filesystem::exists(a / "train/manifest.json"));

    const auto r = run({"replay", "--config", (a / "c.yaml").string(), "--world", (a / "world.json").string(), "--base",
                        (a / "base.json").string(), "--checkpoint", (a / "train/checkpoints/round-0002.json").string(),
                        "--out", (a / "replayed").string()});
    REQUIRE(r.code == kExitOk);
    CHECK(r.out.find("resuming at round 3") != std::string::npos);
    CHECK(read_file(a / "replayed/adapter.json") == read_file(a / "train/adapter.json"));
    CHECK(read_file(a / "replayed/rounds.jsonl") == log);

    write_file_atomic(a / "other.yaml", std::string(kTinyConfig) + "unlearn_beta: 0.2\n");
    const auto mismatch = run({"replay", "--config", (a / "other.yaml").string(), "--world", (a / "world.json").string(),
                               "--base", (a / "base.json").string(), "--checkpoint",
                               (a / "train/checkpoints/round-0002.json").string(), "--out", (a / "x").string()});
    CHECK(mismatch.code == kExitRuntime);
    CHECK(mismatch.err.find("different configuration") != std::string::npos);
}

}  // TEST_SUITE
