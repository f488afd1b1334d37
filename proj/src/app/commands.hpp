// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "skel/skelmap.hpp"

namespace gk::app {

// Each command validates its arguments (ArgumentError), does its work and
// returns a JSON summary of what it wrote.

// poses/<subject>/<condition>/<view>.jsonl -> out/<subject>/<condition>/<view>.gt01 + index.json
nlohmann::json render_skeleton_dir(const std::filesystem::path& poses, const std::filesystem::path& out,
                                   const skel::RenderConfig& cfg);

// sils/<subject>/<condition>/<view>/*.pgm -> out/<subject>/<condition>/<view>.gt01 + index.json
nlohmann::json preprocess_dir(const std::filesystem::path& sils, const std::filesystem::path& out);

nlohmann::json gen_synth_cmd(const std::filesystem::path& spec_file, const std::filesystem::path& out);

nlohmann::json train_cmd(const std::filesystem::path& config_file, const std::optional<std::filesystem::path>& resume);

// Whole-sequence embeddings of a dataset (restricted to `conditions` if given).
nlohmann::json embed_cmd(const std::filesystem::path& checkpoint, const std::filesystem::path& silhouettes,
                         const std::filesystem::path& skeletons, const std::vector<std::string>& conditions,
                         const std::filesystem::path& out);

// The evaluation report (empty protocol path = defaults).
nlohmann::json eval_cmd(const std::filesystem::path& gallery, const std::filesystem::path& probe,
                        const std::filesystem::path& protocol);

// "checks": per-check results; "passed": overall verdict.
nlohmann::json gradcheck_cmd(std::size_t cases, std::uint64_t seed, const std::optional<std::string>& only);

}  // namespace gk::app
