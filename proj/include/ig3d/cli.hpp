#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

namespace ig3d {

/// Exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitRuntime = 3;

/// Environment variable naming a score server URL used when no provider is
/// configured.
inline constexpr const char* kProviderUrlEnv = "IG3D_PROVIDER_URL";

/// Run the tool with `args` (without the program name). Errors are reported
/// on `err` and mapped to the exit codes above.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Built-in defaults of each subcommand's configuration, as stored in run
/// manifests.
nlohmann::json default_config(const std::string& command);

/// Name of the run manifest written next to every output.
inline constexpr const char* kRunManifestName = "run.json";

}  // namespace ig3d
