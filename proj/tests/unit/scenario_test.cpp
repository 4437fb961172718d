// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <fstream>

#include "crs/scenario.hpp"
#include "test_support.hpp"

using namespace crs;

namespace {

EnvLookup env_of(std::map<std::string, std::string> vars) {
  return [vars = std::move(vars)](const std::string& k) -> std::optional<std::string> {
    auto it = vars.find(k);
    if (it == vars.end()) return std::nullopt;
    return it->second;
  };
}

const EnvLookup kNoEnv = env_of({});

RunOptions simulated(std::uint64_t seed = 7) {
  RunOptions o;
  o.clock = "simulated";
  o.seed = seed;
  return o;
}

// Copies a fixture manifest into `dir` after `edit`, with its relative paths
// made absolute so it still resolves from there.
fs::path edited_manifest(const std::string& name, const fs::path& dir, const std::function<void(json&)>& edit) {
  auto base = test::fixture_path("");
  json m = test::load_fixture_json(name);
  auto abs = [&](json& v) {
    if (v.is_string()) v = (base / v.get<std::string>()).string();
  };
  if (m.contains("lab_target")) abs(m["lab_target"]);
  if (m.contains("call_graph")) abs(m["call_graph"]);
  if (m["task"].contains("commit_diff_file")) abs(m["task"]["commit_diff_file"]);
  if (m.contains("policy_file")) abs(m["policy_file"]);
  if (m.contains("sarif_reports")) {
    for (auto& r : m["sarif_reports"]) abs(r["file"]);
  }
  if (m.contains("providers") && m["providers"].contains("scripts")) {
    for (auto& [k, v] : m["providers"]["scripts"].items()) abs(v);
  }
  edit(m);
  auto path = dir / name;
  std::ofstream(path) << m.dump(2);
  return path;
}

}  // namespace

TEST_CASE("basic scenario meets its expectations", "[scenario]") {
  auto out = run_manifest(test::fixture_path("scenario-basic.json"), simulated(), kNoEnv);
  INFO(out.report["scenario"].dump());
  REQUIRE(out.ok);
  REQUIRE(out.failures.empty());
  const auto& r = out.report;
  REQUIRE(r["povs"].size() == 1);
  REQUIRE(r["povs"][0]["status"] == "Passed");
  REQUIRE(r["bundles"].size() == 1);
  REQUIRE(r["bundles"][0]["sarif_id"] == "sarif-1");
  REQUIRE(r["score"]["total"].get<double>() == Catch::Approx(9.591583333333332).epsilon(1e-12));
  for (const auto& [name, s] : r["scenario"]["scripts"].items()) {
    INFO(name);
    REQUIRE(s["remaining"] == 0);
    REQUIRE(s["over_consumed"] == 0);
  }
  // MSan is disabled by the manifest policy, UBSan by default.
  REQUIRE(r["targets"].size() == 1);
  REQUIRE(r["targets"][0]["sanitizer"] == "Address");
  REQUIRE(r["fuzzer"][0]["stop_reason"] == "POV found");
}

TEST_CASE("simulated runs are byte-identical", "[scenario]") {
  for (const char* name : {"scenario-basic.json", "scenario-xpatch.json", "scenario-sarif.json"}) {
    INFO(name);
    auto a = run_manifest(test::fixture_path(name), simulated(), kNoEnv);
    auto b = run_manifest(test::fixture_path(name), simulated(), kNoEnv);
    REQUIRE(a.ok);
    REQUIRE(a.report.dump() == b.report.dump());
  }
}

TEST_CASE("XPatch fires at half time without a POV", "[scenario]") {
  auto out = run_manifest(test::fixture_path("scenario-xpatch.json"), simulated(), kNoEnv);
  REQUIRE(out.ok);
  const auto& r = out.report;
  REQUIRE(r["povs"].empty());
  REQUIRE(r["patches"].size() == 1);
  REQUIRE(r["patches"][0]["is_xpatch"] == true);
  std::int64_t received = r["ledger"]["received_at"];
  std::int64_t window = r["ledger"]["time_window"];
  REQUIRE(r["patches"][0]["submitted_at"].get<std::int64_t>() - received >= window / 2);
  REQUIRE(r["ledger"]["xpatch_count"] == 1);
}

TEST_CASE("SARIF-only scenario assesses without fuzzing", "[scenario]") {
  auto out = run_manifest(test::fixture_path("scenario-sarif.json"), simulated(), kNoEnv);
  REQUIRE(out.ok);
  REQUIRE(out.report["strategy_runs"].empty());
  REQUIRE(out.report["fuzzer"].empty());
  REQUIRE(out.report["ledger"]["entries"].size() == 2);
}

TEST_CASE("failed expectations and script mismatches are reported", "[scenario]") {
  test::TempDir tmp;
  SECTION("wrong expectation") {
    auto p = edited_manifest("scenario-basic.json", tmp.path(), [](json& m) { m["expect"]["povs_accepted"] = 2; });
    auto out = run_manifest(p, simulated(), kNoEnv);
    REQUIRE_FALSE(out.ok);
    REQUIRE(out.failures.size() == 1);
    REQUIRE(out.failures[0].find("povs_accepted") != std::string::npos);
  }
  SECTION("unused script entry") {
    auto p = edited_manifest("scenario-basic.json", tmp.path(), [](json& m) {
      m["providers"]["scripts"]["eval-a"].push_back({{"response", "Yes."}});
    });
    auto out = run_manifest(p, simulated(), kNoEnv);
    REQUIRE_FALSE(out.ok);
    REQUIRE(out.report["scenario"]["scripts"]["eval-a"]["remaining"] == 1);
  }
  SECTION("unknown expectation key") {
    REQUIRE(check_expectations(json{{"bogus", 1}}, json::object()).size() == 1);
    REQUIRE(check_expectations(json{{"errors", 0}}, json{{"errors", json::array()}}).empty());
  }
}

TEST_CASE("manifest errors", "[scenario]") {
  test::TempDir tmp;
  REQUIRE_THROWS_AS(run_manifest(tmp.path() / "none.json", simulated(), kNoEnv), ManifestError);
  auto bad_target = edited_manifest("scenario-basic.json", tmp.path(),
                                    [](json& m) { m["lab_target"] = "/nonexistent/target.json"; });
  REQUIRE_THROWS_AS(run_manifest(bad_target, simulated(), kNoEnv), ManifestError);
  auto bad_priority = edited_manifest("scenario-basic.json", tmp.path(),
                                      [](json& m) { m["providers"]["priority"] = json::array(); });
  REQUIRE_THROWS_AS(run_manifest(bad_priority, simulated(), kNoEnv), ManifestError);
  auto bad_outcome = edited_manifest("scenario-basic.json", tmp.path(),
                                     [](json& m) { m["competition"] = {{"pov", {"Maybe"}}}; });
  REQUIRE_THROWS_AS(run_manifest(bad_outcome, simulated(), kNoEnv), ManifestError);
  {
    std::ofstream(tmp.path() / "garbage.json") << "{not json";
  }
  REQUIRE_THROWS_AS(run_manifest(tmp.path() / "garbage.json", simulated(), kNoEnv), ManifestError);
}

TEST_CASE("option precedence", "[scenario]") {
  json run = {{"clock", "system"}, {"seed", 3}};
  auto from_manifest = resolve_options({}, kNoEnv, run);
  REQUIRE(from_manifest.clock == "system");
  REQUIRE(from_manifest.seed == 3u);
  REQUIRE_FALSE(from_manifest.providers.has_value());

  auto env = env_of({{"CRS_CLOCK", "simulated"}, {"CRS_SEED", "11"}, {"CRS_PROVIDERS", "p.json"}});
  auto from_env = resolve_options({}, env, run);
  REQUIRE(from_env.clock == "simulated");
  REQUIRE(from_env.seed == 11u);
  REQUIRE(from_env.providers == "p.json");

  RunOptions flags;
  flags.clock = "system";
  flags.seed = 99;
  flags.providers = "live";
  auto from_flags = resolve_options(flags, env, run);
  REQUIRE(from_flags.clock == "system");
  REQUIRE(from_flags.seed == 99u);
  REQUIRE(from_flags.providers == "live");

  auto defaults = resolve_options({}, kNoEnv, json::object());
  REQUIRE(defaults.clock == "simulated");
  REQUIRE(defaults.seed.has_value());

  REQUIRE_THROWS_AS(resolve_options({}, env_of({{"CRS_SEED", "-4"}}), run), ManifestError);
  REQUIRE_THROWS_AS(resolve_options({}, env_of({{"CRS_CLOCK", "wall"}}), run), ManifestError);
}

TEST_CASE("provider scripts from the environment replace the manifest's", "[scenario]") {
  test::TempDir tmp;
  json scripts = test::load_fixture_json("scenario-basic.json")["providers"]["scripts"];
  {
    std::ofstream(tmp.path() / "scripts.json") << scripts.dump();
  }
  auto p = edited_manifest("scenario-basic.json", tmp.path(), [](json& m) {
    m["providers"]["scripts"] = json::object();
  });
  REQUIRE_THROWS_AS(run_manifest(p, simulated(), kNoEnv), ManifestError);
  auto out = run_manifest(p, simulated(), env_of({{"CRS_PROVIDERS", (tmp.path() / "scripts.json").string()}}));
  REQUIRE(out.ok);
  REQUIRE(out.report["score"]["total"].get<double>() == Catch::Approx(9.591583333333332).epsilon(1e-12));
}
