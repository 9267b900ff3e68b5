// SPDX-License-Identifier: Apache-2.0
//
// A three-client world small enough for whole-run tests.

#pragma once

#include "fedforget/datagen.hpp"
#include "fedforget/orchestrator.hpp"

#include <cstdlib>
#include <unistd.h>

#include <filesystem>
#include <string>

namespace fedforget::testing {

struct SmallWorld {
    WorldBundle world;
    BaseWeights base;
};

inline WorldConfig small_world_config() {
    WorldConfig cfg;
    cfg.num_clients = 3;
    cfg.facts_per_client = 8;
    cfg.facts_per_entity = 2;
    cfg.world_facts_count = 8;
    cfg.real_authors_count = 8;
    cfg.forget_fraction = 0.25;
    cfg.seed = 21;
    return cfg;
}

inline const SmallWorld& small_world() {
    static const SmallWorld w = [] {
        auto world = generate_world(small_world_config());
        auto base = pretrain_base(world.base_pretrain_corpus, world.vocab, {});
        return SmallWorld{std::move(world), std::move(base)};
    }();
    return w;
}

inline RunConfig small_run() {
    RunConfig cfg;
    cfg.num_clients = 3;
    cfg.participation_rate = 1.0;
    cfg.global_rounds = 4;
    cfg.lora_rank = 4;
    cfg.lora_alpha = 8.0;
    cfg.local.local_epochs = 2;
    cfg.unlearn.epochs = 2;
    cfg.master_seed = 3;
    return cfg;
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() / ("fedforget-test-" + tag + "-" + std::to_string(::getpid()));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

}  // namespace fedforget::testing
