// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. Every document is JSON with a format tag and version;
// float arrays are base64 little-endian float64 with an explicit shape.

#pragma once

#include "fedforget/config.hpp"
#include "fedforget/datagen.hpp"
#include "fedforget/evaluation.hpp"
#include "fedforget/orchestrator.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <string>

namespace fedforget {

using Json = nlohmann::ordered_json;

inline constexpr int kWorldFormatVersion = 1;
inline constexpr int kBaseFormatVersion = 1;
inline constexpr int kAdapterFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr int kReportFormatVersion = 1;

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temp file and renames it over the target.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Two-space indented dump with a trailing newline.
std::string to_text(const Json& doc);

Json encode_array(const FlatParams& values);
FlatParams decode_array(const Json& doc);
Json encode_matrix(const Matrix& m);
Matrix decode_matrix(const Json& doc);

Json to_json(const QaPair& pair);
QaPair qa_pair_from_json(const Json& doc);

Json to_json(const WorldBundle& world);
WorldBundle world_from_json(const Json& doc);

Json base_to_json(const BaseWeights& base);
BaseWeights base_from_json(const Json& doc);

Json adapter_to_json(const AdapterGeometry& geom, const FlatParams& params);
/// Returns the stored geometry through `geom`.
FlatParams adapter_from_json(const Json& doc, AdapterGeometry& geom);

Json to_json(const UnlearnRequest& request);
UnlearnRequest unlearn_request_from_json(const Json& doc);

Json to_json(const ServerOptState& state);
ServerOptState server_state_from_json(const Json& doc);

/// One line of the round log.
Json to_json(const RoundRecord& record);
RoundRecord round_record_from_json(const Json& doc);
/// Newline-terminated compact JSON objects, one per record.
std::string round_log(const std::vector<RoundRecord>& records);

Json checkpoint_to_json(const SessionState& state, const std::string& config_hash);
/// Throws IntegrityError on damaged content and IncompatibleFormatError on
/// an unknown version or a config hash mismatch.
SessionState checkpoint_from_json(const std::string& text, const std::string& expected_config_hash);

Json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& doc);
std::string eval_report_csv(const EvalReport& report);

struct RunManifest {
    std::string config_path;
    std::string world_path;
    std::string output_dir;
    std::string created;
    /// File path -> git-style content checksum.
    std::map<std::string, std::string> checksums;
};

Json to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const Json& doc);
RunManifest make_manifest(const std::filesystem::path& config, const std::filesystem::path& world,
                          const std::filesystem::path& output_dir);
/// Throws IntegrityError naming the first file whose content changed.
void verify_manifest(const RunManifest& manifest);

}  // namespace fedforget
