#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pdmp/gene.hpp"

namespace pdmp {

// Sectioned key = value text:
//
//   [model]
//   kind = gene            # or switching-linear
//   rates = 1, 2
//
// Values are a bare word or a comma-separated list of numbers. '#' starts
// a comment. Each key may appear once.
struct ConfigEntry {
  std::string text;
  std::vector<double> numbers;  // empty when the value is a word
  int line = 0;
};

class ConfigText {
 public:
  static ConfigText parse(const std::string& text, const std::string& origin = "<config>");
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const ConfigEntry& at(const std::string& key) const;
  double number(const std::string& key) const;
  std::optional<double> number_or(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::string word(const std::string& key) const;
  const std::map<std::string, ConfigEntry>& entries() const { return entries_; }
  const std::string& origin() const { return origin_; }
  // key = value lines of the listed sections, sorted
  std::string canonical(const std::vector<std::string>& sections) const;
  std::string where(const std::string& key) const;

 private:
  std::string origin_;
  std::map<std::string, ConfigEntry> entries_;  // "section.key"
};

// Experiment sizes. Unknown keys are rejected at load time and by set().
class Budget {
 public:
  static const std::vector<std::string>& keys();
  bool has(const std::string& key) const { return values_.count(key) > 0; }
  double get(const std::string& key, double fallback) const;
  std::size_t count(const std::string& key, std::size_t fallback) const;
  std::vector<double> list(const std::string& key, std::vector<double> fallback) const;
  void set(const std::string& key, std::vector<double> v);
  // parses "key=v1,v2"
  void set_override(const std::string& assignment);
  const std::map<std::string, std::vector<double>>& values() const { return values_; }

 private:
  std::map<std::string, std::vector<double>> values_;
};

struct LoadedConfig {
  std::string text;  // the file as read
  std::string origin;
  std::string kind;  // gene | switching-linear
  ModelSpec spec;
  AssumptionInputs inputs;
  DeriveOptions derive;
  std::optional<OperonBundle> operon;
  HybridState start;
  HybridState start2;
  Budget budget;
  std::uint64_t seed = 1;
  std::string spec_hash;  // SHA-256 of the model, switching and constants sections
};

LoadedConfig parse_config(const std::string& text, const std::string& origin = "<config>");
LoadedConfig load_config(const std::filesystem::path& path);

}  // namespace pdmp
