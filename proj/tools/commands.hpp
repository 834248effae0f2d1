#pragma once

// Subcommands of the pineapple executable. Every command is a function of a
// JSON config snapshot and an output directory, and writes manifest.json
// into that directory; rerun replays a manifest's snapshot.

#include <string>

#include <nlohmann/json.hpp>

#include "pineapple/data_pipeline.hpp"

namespace pineapple::cli {

inline constexpr const char* kRunDirEnv = "PINEAPPLE_RUN_DIR";

/// $PINEAPPLE_RUN_DIR/<command>, or runs/<command> when unset.
std::string default_out_dir(const std::string& command);

struct CommandContext {
    int jobs = 0;  // 0 = all logical cores
    bool quiet = false;
};

/// Dispatches on `command`. Throws ConfigError for invalid snapshots.
RunManifest run_command(const std::string& command, const nlohmann::json& config, const std::string& out,
                        const CommandContext& ctx);

struct RerunReport {
    RunManifest original;
    RunManifest replay;
    std::vector<std::string> mismatched;  // primary outputs whose hashes differ or are missing
};

RerunReport rerun(const std::string& manifest_path, const std::string& out, const CommandContext& ctx);

}  // namespace pineapple::cli
