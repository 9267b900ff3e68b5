// SPDX-License-Identifier: Apache-2.0

#include "fedforget/cli.hpp"

#include "fedforget/checksum.hpp"
#include "fedforget/config.hpp"
#include "fedforget/errors.hpp"
#include "fedforget/io.hpp"
#include "fedforget/report.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <optional>

namespace fedforget {

namespace fs = std::filesystem;

namespace {

struct GlobalFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> checkpoint_every;
};

struct Paths {
    std::string world;
    std::string base;
    std::string adapter;
    std::string retrain;
    std::string checkpoint;
    std::string label;
    std::vector<std::string> inputs;
};

ExperimentConfig resolve_config(const GlobalFlags& flags) {
    ExperimentConfig cfg = load_config(flags.config);
    if (flags.seed) cfg.set_seed(*flags.seed);
    if (flags.checkpoint_every) cfg.run.checkpoint_every = *flags.checkpoint_every;
    cfg.validate();
    return cfg;
}

WorldBundle load_world(const std::string& path) { return world_from_json(Json::parse(read_file(path))); }
BaseWeights load_base(const std::string& path) { return base_from_json(Json::parse(read_file(path))); }

void check_world_matches(const ExperimentConfig& cfg, const WorldBundle& world) {
    if (world.shards.size() != cfg.run.num_clients) {
        throw ConfigError(fmt::format("config expects {} clients, world file has {}", cfg.run.num_clients,
                                      world.shards.size()));
    }
}

std::string checkpoint_name(std::uint64_t round) { return fmt::format("round-{:04d}.json", round); }

void write_run_outputs(const fs::path& dir, const AdapterGeometry& geom, const TrainingSession& session) {
    write_file_atomic(dir / "adapter.json", to_text(adapter_to_json(geom, session.state().global)));
    write_file_atomic(dir / "rounds.jsonl", round_log(session.state().records));
}

void drive(TrainingSession& session, const ExperimentConfig& cfg, const fs::path& dir, const AdapterGeometry& geom,
           std::ostream& out) {
    const auto hash = config_hash(cfg);
    while (!session.finished()) {
        session.run_round();
        const auto& rec = session.state().records.back();
        out << fmt::format("round {:>3}  clients {:>2}  unlearn {}  adapter {}\n", rec.round, rec.participants.size(),
                           rec.indicator, rec.adapter_checksum);
        if (cfg.run.checkpoint_every > 0 && rec.round % cfg.run.checkpoint_every == 0) {
            write_file_atomic(dir / "checkpoints" / checkpoint_name(rec.round),
                              to_text(checkpoint_to_json(session.state(), hash)));
        }
    }
    write_run_outputs(dir, geom, session);
}

int cmd_gen_world(const GlobalFlags& g, std::ostream& out) {
    const auto cfg = resolve_config(g);
    const auto world = generate_world(cfg.world);
    write_file_atomic(g.out, to_text(to_json(world)));
    out << fmt::format("world: {} clients, vocab {}, {} forget / {} retain facts -> {}\n", world.shards.size(),
                       world.vocab.size, world.eval.forget.size(), world.eval.retain.size(), g.out);
    return kExitOk;
}

int cmd_pretrain(const GlobalFlags& g, const Paths& p, std::ostream& out) {
    const auto cfg = resolve_config(g);
    const auto world = load_world(p.world);
    const auto base = pretrain_base(world.base_pretrain_corpus, world.vocab, cfg.pretrain);
    write_file_atomic(g.out, to_text(base_to_json(base)));
    out << fmt::format("base: {}x{} logits -> {}\n", base.vocab_size(), base.vocab_size(), g.out);
    return kExitOk;
}

int cmd_train(const GlobalFlags& g, const Paths& p, bool retrain, std::ostream& out) {
    const auto cfg = resolve_config(g);
    const auto world = load_world(p.world);
    check_world_matches(cfg, world);
    const auto base = load_base(p.base);
    const fs::path dir = g.out;
    fs::create_directories(dir);
    auto manifest = make_manifest(g.config, p.world, dir);
    manifest.checksums[p.base] = content_checksum(read_file(p.base));
    write_file_atomic(dir / "manifest.json", to_text(to_json(manifest)));

    RunConfig run = cfg.run;
    std::vector<std::vector<std::size_t>> exclusions;
    if (retrain) {
        run.request_policy = {};
        exclusions = flagged_forget_sets(world);
    }
    const auto geom = run.geometry(base.vocab_size());
    TrainingSession session(run, world.shards, base, exclusions);
    drive(session, cfg, dir, geom, out);
    verify_manifest(manifest);
    out << fmt::format("final adapter {} -> {}\n", params_checksum(session.state().global),
                       (dir / "adapter.json").string());
    return kExitOk;
}

int cmd_replay(const GlobalFlags& g, const Paths& p, std::ostream& out) {
    const auto cfg = resolve_config(g);
    const auto world = load_world(p.world);
    check_world_matches(cfg, world);
    const auto base = load_base(p.base);
    auto state = checkpoint_from_json(read_file(p.checkpoint), config_hash(cfg));
    const fs::path dir = g.out;
    fs::create_directories(dir);
    const auto geom = cfg.run.geometry(base.vocab_size());
    out << fmt::format("resuming at round {}\n", state.next_round);
    TrainingSession session(cfg.run, world.shards, base, std::move(state));
    drive(session, cfg, dir, geom, out);
    return kExitOk;
}

int cmd_eval(const GlobalFlags& g, const Paths& p, std::ostream& out) {
    const auto cfg = resolve_config(g);
    const auto world = load_world(p.world);
    const auto base = load_base(p.base);
    AdapterGeometry geom;
    const auto params = adapter_from_json(Json::parse(read_file(p.adapter)), geom);
    if (geom.vocab_size != base.vocab_size()) throw DimensionError("adapter and base disagree on vocabulary size");
    const auto adapter = AdapterParams::from_flat(geom, params);

    std::optional<AdapterParams> retrain;
    if (!p.retrain.empty()) {
        AdapterGeometry rgeom;
        const auto rparams = adapter_from_json(Json::parse(read_file(p.retrain)), rgeom);
        retrain = AdapterParams::from_flat(rgeom, rparams);
    }
    const ModelView model{base, adapter};
    std::optional<ModelView> retrain_view;
    if (retrain) retrain_view.emplace(ModelView{base, *retrain});

    EvalReport report = evaluate(model, retrain_view ? &*retrain_view : nullptr, world.eval, cfg.eval);
    report.algorithm = std::string(to_string(cfg.run.algorithm));
    report.label = !p.label.empty() ? p.label
                   : cfg.run.request_policy.kind == RequestPolicyKind::None
                       ? std::string("Finetune")
                       : std::string(to_string(cfg.run.unlearn.method));
    write_file_atomic(g.out, to_text(to_json(report)));
    fs::path csv = g.out;
    csv.replace_extension(".csv");
    write_file_atomic(csv, eval_report_csv(report));
    out << fmt::format("{} / {}: MU {} FTR {}\n", report.label, report.algorithm,
                       report.model_utility ? fmt::format("{:.4f}", *report.model_utility) : "-",
                       report.forget_truth_ratio ? fmt::format("{:.4f}", *report.forget_truth_ratio) : "-");
    return kExitOk;
}

int cmd_report(const GlobalFlags& g, const Paths& p, std::ostream& out) {
    std::vector<EvalReport> reports;
    for (const auto& path : p.inputs) reports.push_back(eval_report_from_json(Json::parse(read_file(path))));
    const auto table = build_comparison(reports);
    const auto text = render_table(table);
    write_file_atomic(g.out + ".json", to_text(to_json(table)));
    write_file_atomic(g.out + ".txt", text);
    write_file_atomic(g.out + ".csv", comparison_csv(table));
    out << text;
    return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Federated LoRA fine-tuning and unlearning simulator", "fedforget"};
    app.require_subcommand(1);
    GlobalFlags g;
    Paths p;

    auto* gen = app.add_subcommand("gen-world", "Generate a synthetic world file");
    auto* pre = app.add_subcommand("pretrain", "Fit the frozen base model on a world's pretraining corpus");
    auto* train = app.add_subcommand("train", "Federated fine-tuning with the configured unlearning requests");
    auto* retrain = app.add_subcommand("retrain", "Federated fine-tuning on retained data only");
    auto* eval = app.add_subcommand("eval", "Evaluate an adapter on the world's evaluation splits");
    auto* report = app.add_subcommand("report", "Merge evaluation files into a method-by-algorithm table");
    auto* replay = app.add_subcommand("replay", "Resume a run from a checkpoint and finish it");

    for (auto* sub : {gen, pre, train, retrain, eval, replay}) {
        sub->add_option("--config", g.config, "YAML config file")->required()->check(CLI::ExistingFile);
        sub->add_option("--seed", g.seed, "Override the config seed");
        sub->add_option("--checkpoint-every", g.checkpoint_every, "Checkpoint interval in rounds (0 disables)");
    }
    for (auto* sub : {gen, pre, train, retrain, eval, report, replay}) {
        sub->add_option("--out", g.out, "Output file or directory")->required();
    }
    for (auto* sub : {pre, train, retrain, eval, replay}) {
        sub->add_option("--world", p.world, "World file")->required()->check(CLI::ExistingFile);
    }
    for (auto* sub : {train, retrain, eval, replay}) {
        sub->add_option("--base", p.base, "Pretrained base file")->required()->check(CLI::ExistingFile);
    }
    eval->add_option("--adapter", p.adapter, "Adapter file")->required()->check(CLI::ExistingFile);
    eval->add_option("--retrain", p.retrain, "Retrain-baseline adapter for forget quality")
        ->check(CLI::ExistingFile);
    eval->add_option("--label", p.label, "Row label (default: Finetune or the unlearning method)");
    replay->add_option("--checkpoint", p.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
    report->add_option("inputs", p.inputs, "Evaluation files")->required()->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (*gen) return cmd_gen_world(g, out);
        if (*pre) return cmd_pretrain(g, p, out);
        if (*train) return cmd_train(g, p, false, out);
        if (*retrain) return cmd_train(g, p, true, out);
        if (*eval) return cmd_eval(g, p, out);
        if (*report) return cmd_report(g, p, out);
        if (*replay) return cmd_replay(g, p, out);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}

}  // namespace fedforget
