#pragma once

#include "mdev/harness.hpp"
#include "mdev/models.hpp"

#include "json.hpp"

#include <filesystem>
#include <string>

namespace mdev {

/// Parses JSON text, rejecting duplicate object keys.
nlohmann::json parse_json_strict(const std::string& text);

/// Validated spec with defaults applied. Unknown keys, wrong types and out of
/// range values raise ConfigError naming the offending field (e.g. "eta[0]").
ExperimentSpec spec_from_json(const nlohmann::json& j);
ExperimentSpec parse_config_text(const std::string& text);
ExperimentSpec parse_config(const std::filesystem::path& path);

/// Canonical echo of a spec; spec_from_json(spec_to_json(s)) reproduces s.
nlohmann::json spec_to_json(const ExperimentSpec& spec);

/// Model from a string id ("ou", "tanh") or an object such as
/// {"id": "ou-matrix", "A": [[...]], "sigma": [[...]]}.
Model model_from_json(const nlohmann::json& j);

ExperimentKind experiment_kind_from_string(const std::string& s);

}  // namespace mdev
