#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pdmp {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

struct OutputDigest {
  std::string file;  // relative to the output directory
  std::string sha256;
};

// Everything needed to rerun a command: the config text itself travels in
// the manifest so a replay does not depend on the original file.
struct RunManifest {
  std::string command;
  std::string config_text;
  std::string config_origin;
  std::string spec_hash;
  std::uint64_t seed = 0;
  std::string seed_rule = "replica k uses splitmix64(seed, k)";
  std::map<std::string, std::string> versions;
  std::map<std::string, std::vector<double>> budget;
  std::string started;
  std::string finished;
  int exit_code = 0;
  std::vector<OutputDigest> outputs;

  std::string to_json() const;
  static RunManifest from_json(const std::string& text);
  static RunManifest load(const std::filesystem::path& path);
};

std::string utc_timestamp();

}  // namespace pdmp
