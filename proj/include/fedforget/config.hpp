// SPDX-License-Identifier: Apache-2.0
//
// Flat YAML experiment configuration. Absent keys keep their defaults;
// unknown keys are rejected with a suggestion.

#pragma once

#include "fedforget/datagen.hpp"
#include "fedforget/evaluation.hpp"
#include "fedforget/orchestrator.hpp"

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace fedforget {

struct ExperimentConfig {
    WorldConfig world;
    PretrainConfig pretrain;
    RunConfig run;
    EvalOptions eval;

    ExperimentConfig();
    /// Propagates shared settings (client count, seed) and validates every part.
    void validate() const;
    void set_seed(std::uint64_t seed);
};

/// Every key accepted by the config schema, in documentation order.
const std::vector<std::string>& config_keys();

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical YAML rendering; parse_config(dump_config(c)) reproduces c.
std::string dump_config(const ExperimentConfig& cfg);

/// SHA-256 of the canonical rendering.
std::string config_hash(const ExperimentConfig& cfg);

std::size_t edit_distance(std::string_view a, std::string_view b);

}  // namespace fedforget
