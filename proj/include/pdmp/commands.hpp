#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "pdmp/config.hpp"

namespace pdmp {

const std::vector<std::string>& command_names();

// Runs one subcommand into `out`, then writes manifest.json with the digest
// of every file produced. Returns 0 when every verdict passes, 1 when one
// fails, 2 on an execution error (recorded in error.json).
int run_command(const std::string& command, const LoadedConfig& cfg, std::uint64_t seed,
                const std::filesystem::path& out, std::ostream& log);

// Reruns the manifest's command into `out` and compares output digests:
// 0 when all match, 1 on any difference, 2 when the rerun itself fails.
int replay(const std::filesystem::path& manifest, const std::filesystem::path& out, std::ostream& log);

}  // namespace pdmp
