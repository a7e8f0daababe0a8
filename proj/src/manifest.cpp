#include "pdmp/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>
#include <openssl/evp.h>

#include "pdmp/errors.hpp"

namespace pdmp {

namespace {
std::string hex(const unsigned char* p, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string s;
  for (unsigned k = 0; k < n; ++k) {
    s += digits[p[k] >> 4];
    s += digits[p[k] & 15];
  }
  return s;
}
}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw NumericalError("sha256 failed");
  return hex(md, len);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot read " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return sha256_hex(ss.str());
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["command"] = command;
  j["spec_hash"] = spec_hash;
  j["seed"] = seed;
  j["seed_rule"] = seed_rule;
  j["versions"] = versions;
  j["budget"] = budget;
  j["started"] = started;
  j["finished"] = finished;
  j["exit_code"] = exit_code;
  auto& outs = j["outputs"] = nlohmann::ordered_json::array();
  for (const auto& o : outputs) outs.push_back({{"file", o.file}, {"sha256", o.sha256}});
  j["config_origin"] = config_origin;
  j["config_text"] = config_text;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.spec_hash = j.at("spec_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.seed_rule = j.value("seed_rule", m.seed_rule);
    m.versions = j.value("versions", std::map<std::string, std::string>{});
    m.budget = j.value("budget", std::map<std::string, std::vector<double>>{});
    m.started = j.value("started", "");
    m.finished = j.value("finished", "");
    m.exit_code = j.value("exit_code", 0);
    for (const auto& o : j.at("outputs")) m.outputs.push_back({o.at("file"), o.at("sha256")});
    m.config_origin = j.value("config_origin", "");
    m.config_text = j.at("config_text").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed manifest: ") + e.what());
  }
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError("cannot open manifest " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return from_json(ss.str());
}

}  // namespace pdmp
