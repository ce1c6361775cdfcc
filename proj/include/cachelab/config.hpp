#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "cachelab/experiment.hpp"

namespace cachelab {

inline constexpr int kConfigVersion = 1;

/// INI text with a top-level `config_version` key and one section per module.
/// Absent keys keep their defaults; unknown sections or keys, malformed values
/// and a missing or unsupported version throw ConfigInvalid.
ExperimentConfig parse_config(std::string_view ini_text);
/// Throws ConfigInvalid when the file is missing or unreadable.
ExperimentConfig load_config(const std::filesystem::path& path);

/// Every key with its current value; parse_config(config_to_ini(c)) reproduces c.
std::string config_to_ini(const ExperimentConfig& config);

}  // namespace cachelab
