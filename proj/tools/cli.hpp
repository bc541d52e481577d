#pragma once

#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace enlg::cli {

enum ExitCode { kOk = 0, kValidation = 1, kRuntime = 2 };

/// Built-in pipeline defaults. Sections absent from a config file keep these.
nlohmann::json default_config();

/// Defaults, then the file (deep merge), then per-section seeds filled from the
/// global seed where not given explicitly.
nlohmann::json resolve_config(const nlohmann::json& file, std::uint64_t seed);

/// Parses and runs one subcommand; returns the process exit status.
int run(const std::vector<std::string>& args);

std::string sha256_file(const std::string& path);

}  // namespace enlg::cli
