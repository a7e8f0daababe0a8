#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "pdmp/commands.hpp"
#include "pdmp/config.hpp"
#include "pdmp/errors.hpp"
#include "pdmp/manifest.hpp"

using namespace pdmp;
namespace fs = std::filesystem;

namespace {
const char* kMinimal = R"(
[model]
kind = gene
dim = 1
rates = 1
jump_rate = 1
burst_upper = 1
eps = 0
)";

const char* kGene = R"(
[model]
kind = gene
dim = 2
rates = 1, 2
jump_rate = 1
burst_upper = 1
perturbation = box
eps = 0.05
)";

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("pdmp_harness_" + name);
  fs::remove_all(p);
  return p;
}

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "t.cfg");
  } catch (const InputError& e) {
    return e.what();
  } catch (const SpecError& e) {
    return e.what();
  }
  return "";
}
}  // namespace

TEST_CASE("minimal gene config loads with defaults") {
  const auto cfg = parse_config(kMinimal, "min.cfg");
  CHECK(cfg.kind == "gene");
  CHECK(cfg.spec.dim == 1);
  CHECK(cfg.spec.jump_rate == 1.0);
  CHECK(cfg.inputs.alpha == -1.0);
  CHECK(cfg.operon.has_value());
  CHECK(cfg.spec_hash.size() == 64);
  CHECK(cfg.start.y.size() == 1);
}

TEST_CASE("spec hash ignores comments, run settings and key order") {
  const auto a = parse_config(kGene);
  const auto b = parse_config(std::string("# note\n[run]\nseed = 9\n") +
                              "[model]\neps = 0.05\nperturbation = box\nburst_upper = 1\njump_rate = 1\n"
                              "rates = 1, 2\ndim = 2\nkind = gene\n");
  CHECK(a.spec_hash == b.spec_hash);
  CHECK(b.seed == 9);
  const auto c = parse_config(std::string(kGene) + "[constants]\nL_w = 0.5\n");
  CHECK(a.spec_hash != c.spec_hash);
}

TEST_CASE("config errors name the offending key") {
  const std::string sw = R"(
[model]
kind = switching-linear
dim = 1
regimes = 2
jump_rate = 1
rates_1 = 1
rates_2 = 1
center_1 = 0
center_2 = 1
jump_scale = 0.5
burst_upper = 1
eps = 0
[switching]
row_1 = 0.5, 0.5
row_2 = 0.6, 0.6
)";
  CHECK(error_of(sw).find("switching.row_2 sums to 1.2") != std::string::npos);
  CHECK(error_of(std::string(kGene) + "[constants]\nalpha = 1\n").find("constants.alpha") != std::string::npos);
  const auto unknown = error_of(std::string(kGene) + "colour = red\n");
  CHECK(unknown.find("t.cfg:10") != std::string::npos);
  CHECK(unknown.find("colour") != std::string::npos);
  CHECK(error_of(std::string(kGene) + "dim = 2\n").find("dim") != std::string::npos);
  CHECK(error_of("[nowhere]\nx = 1\n").find("nowhere") != std::string::npos);
  CHECK(error_of("[model]\nkind = brusselator\n").find("model.kind") != std::string::npos);
}

TEST_CASE("budget overrides are validated") {
  Budget b;
  b.set_override("steps=500");
  b.set_override("checkpoints=1,2,4");
  CHECK(b.count("steps", 0) == 500);
  CHECK(b.list("checkpoints", {}).size() == 3);
  CHECK(b.get("tol", 0.5) == 0.5);
  CHECK_THROWS_AS(b.set_override("nonsense=1"), InputError);
  CHECK_THROWS_AS(b.set_override("steps"), InputError);
  CHECK_THROWS_AS(b.set_override("steps=abc"), InputError);
}

TEST_CASE("derive-constants honours a jump Lipschitz override") {
  const auto cfg = parse_config(std::string(kGene) + "[constants]\nL_w = 0.5\n");
  const auto out = scratch("constants");
  std::ostringstream log;
  REQUIRE(run_command("derive-constants", cfg, 3, out, log) == 0);
  const auto txt = slurp(out / "constants.txt");
  CHECK(txt.rfind("# spec_hash=" + cfg.spec_hash + " seed=3", 0) == 0);
  CHECK(txt.find("\na = 0.25\n") != std::string::npos);
  CHECK(fs::exists(out / "manifest.json"));
  fs::remove_all(out);
}

TEST_CASE("simulate-chain with zero steps writes the start state only") {
  auto cfg = parse_config(kGene);
  cfg.budget.set("steps", {0});
  const auto out = scratch("zero");
  std::ostringstream log;
  REQUIRE(run_command("simulate-chain", cfg, 1, out, log) == 0);
  std::ifstream f(out / "trajectory.csv");
  std::string line;
  int data = 0;
  while (std::getline(f, line))
    if (!line.empty() && line[0] != '#' && std::isdigit(static_cast<unsigned char>(line[0]))) ++data;
  CHECK(data == 1);
  fs::remove_all(out);
}

TEST_CASE("reruns are byte-identical and replay confirms them") {
  auto cfg = parse_config(kGene);
  cfg.budget.set("steps", {200});
  const auto a = scratch("run_a"), b = scratch("run_b"), r = scratch("run_r");
  std::ostringstream log;
  REQUIRE(run_command("simulate-chain", cfg, 11, a, log) == 0);
  REQUIRE(run_command("simulate-chain", cfg, 11, b, log) == 0);
  const auto ma = RunManifest::load(a / "manifest.json"), mb = RunManifest::load(b / "manifest.json");
  REQUIRE(ma.outputs.size() == mb.outputs.size());
  for (std::size_t k = 0; k < ma.outputs.size(); ++k) CHECK(ma.outputs[k].sha256 == mb.outputs[k].sha256);
  CHECK(ma.spec_hash == cfg.spec_hash);
  CHECK(replay(a / "manifest.json", r, log) == 0);

  // a different seed changes the trajectory digest
  const auto c = scratch("run_c");
  REQUIRE(run_command("simulate-chain", cfg, 12, c, log) == 0);
  CHECK(RunManifest::load(c / "manifest.json").outputs.front().sha256 != ma.outputs.front().sha256);

  // tampering with a recorded digest is reported
  auto tampered = ma;
  tampered.outputs.front().sha256 = std::string(64, '0');
  std::ofstream(a / "manifest.json", std::ios::binary) << tampered.to_json();
  CHECK(replay(a / "manifest.json", scratch("run_r2"), log) == 1);
  for (const auto& p : {a, b, c, r}) fs::remove_all(p);
}

TEST_CASE("exit codes separate failed verdicts from execution errors") {
  auto cfg = parse_config(kGene);
  std::ostringstream log;
  cfg.budget.set("steps", {1000});
  cfg.budget.set("replicas", {2});
  cfg.budget.set("reference_samples", {20000});
  cfg.budget.set("tol", {1e-9});
  const auto fail = scratch("fail");
  CHECK(run_command("slln-chain", cfg, 5, fail, log) == 1);

  auto bad = parse_config(kGene);
  bad.budget.set("draws", {100});
  const auto err = scratch("err");
  CHECK(run_command("short-time", bad, 5, err, log) == 2);
  CHECK(slurp(err / "error.json").find("10^4") != std::string::npos);
  CHECK(RunManifest::load(err / "manifest.json").exit_code == 2);

  CHECK(run_command("no-such-command", cfg, 5, scratch("unknown"), log) == 2);
  CHECK(replay(scratch("missing") / "manifest.json", scratch("missing_out"), log) == 2);
  for (const auto& p : {fail, err}) fs::remove_all(p);
}

TEST_CASE("manifest round-trips through JSON") {
  RunManifest m;
  m.command = "fm-distance";
  m.spec_hash = sha256_hex("x");
  m.seed = 42;
  m.budget = {{"steps", {10}}};
  m.outputs = {{"a.csv", sha256_hex("")}};
  m.config_text = "[model]\nkind = gene\n";
  const auto back = RunManifest::from_json(m.to_json());
  CHECK(back.command == m.command);
  CHECK(back.seed == 42);
  CHECK(back.outputs.front().sha256 == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(back.config_text == m.config_text);
  CHECK_THROWS_AS(RunManifest::from_json("{"), InputError);
  CHECK(command_names().size() == 13);
}
