// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <fstream>
#include <sstream>

#include "crs/cli.hpp"
#include "test_support.hpp"

using namespace crs;

namespace {

struct Run {
  int rc = -1;
  std::string out;
  std::string err;
};

Run cli(std::vector<std::string> args, std::map<std::string, std::string> env = {}) {
  std::ostringstream out, err;
  EnvLookup lookup = [env](const std::string& k) -> std::optional<std::string> {
    auto it = env.find(k);
    if (it == env.end()) return std::nullopt;
    return it->second;
  };
  Run r;
  r.rc = run_cli(args, out, err, lookup);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string fixture(const std::string& rel) { return test::fixture_path(rel).string(); }

}  // namespace

TEST_CASE("usage errors exit with 2", "[cli]") {
  REQUIRE(cli({}).rc == kExitUsage);
  REQUIRE(cli({"frobnicate"}).rc == kExitUsage);
  REQUIRE(cli({"run"}).rc == kExitUsage);
  REQUIRE(cli({"run", fixture("scenario-basic.json"), "--clock=wall"}).rc == kExitUsage);
  REQUIRE(cli({"run", fixture("scenario-basic.json"), "--seed=-4"}).rc == kExitUsage);
  REQUIRE(cli({"run", "/nonexistent.json"}).rc == kExitUsage);
  REQUIRE(cli({"callgraph", "paths", "--graph", fixture("graphs/c-overflow.json")}).rc == kExitUsage);
  auto bad_env = cli({"run", fixture("scenario-basic.json")}, {{"CRS_SEED", "x"}});
  REQUIRE(bad_env.rc == kExitUsage);
  REQUIRE(bad_env.err.find("CRS_SEED") != std::string::npos);
  auto help = cli({"--help"});
  REQUIRE(help.rc == kExitOk);
  REQUIRE(help.out.find("callgraph") != std::string::npos);
}

TEST_CASE("run prints the report and is reproducible", "[cli]") {
  auto a = cli({"run", fixture("scenario-basic.json"), "--clock=simulated", "--seed=7"});
  auto b = cli({"run", fixture("scenario-basic.json"), "--clock=simulated", "--seed=7"});
  REQUIRE(a.rc == kExitOk);
  REQUIRE(a.out == b.out);
  auto report = json::parse(a.out);
  REQUIRE(report["score"]["total"].get<double>() == Catch::Approx(9.591583333333332).epsilon(1e-12));

  test::TempDir tmp;
  auto to_file = cli({"run", fixture("scenario-basic.json"), "--out", (tmp.path() / "r.json").string()});
  REQUIRE(to_file.rc == kExitOk);
  REQUIRE(to_file.out.empty());
  REQUIRE(test::read_text(tmp.path() / "r.json") == a.out);
}

TEST_CASE("a scenario whose checks fail exits with 1", "[cli]") {
  test::TempDir tmp;
  json m = test::load_fixture_json("scenario-sarif.json");
  m["expect"]["povs_accepted"] = 3;
  // Keep relative references resolvable by writing next to the fixtures' absolute paths.
  auto base = test::fixture_path("");
  for (auto& r : m["sarif_reports"]) r["file"] = (base / r["file"].get<std::string>()).string();
  for (const char* k : {"lab_target", "call_graph"}) {
    if (m.contains(k)) m[k] = (base / m[k].get<std::string>()).string();
  }
  if (m["task"].contains("commit_diff_file")) {
    m["task"]["commit_diff_file"] = (base / m["task"]["commit_diff_file"].get<std::string>()).string();
  }
  std::ofstream(tmp.path() / "m.json") << m.dump();
  auto r = cli({"run", (tmp.path() / "m.json").string()});
  REQUIRE(r.rc == kExitInternal);
  REQUIRE(r.err.find("scenario check failed: povs_accepted") != std::string::npos);
  REQUIRE_NOTHROW(json::parse(r.out));
}

TEST_CASE("score reads a ledger document", "[cli]") {
  auto run = cli({"run", fixture("scenario-basic.json")});
  test::TempDir tmp;
  std::ofstream(tmp.path() / "ledger.json") << json::parse(run.out)["ledger"].dump();
  auto r = cli({"score", (tmp.path() / "ledger.json").string()});
  REQUIRE(r.rc == kExitOk);
  REQUIRE(json::parse(r.out)["total"].get<double>() == Catch::Approx(9.591583333333332).epsilon(1e-12));

  std::ofstream(tmp.path() / "bad.json") << R"({"task_id": 5})";
  REQUIRE(cli({"score", (tmp.path() / "bad.json").string()}).rc == kExitUsage);
  REQUIRE(cli({"score", (tmp.path() / "missing.json").string()}).rc == kExitUsage);
}

TEST_CASE("callgraph subcommands", "[cli]") {
  auto g = fixture("graphs/c-overflow.json");
  auto reach = cli({"callgraph", "reachable", "--graph", g, "--harness", "fuzz_record"});
  REQUIRE(reach.rc == kExitOk);
  REQUIRE(json::parse(reach.out)["functions"].size() == 3);

  auto unknown = cli({"callgraph", "reachable", "--graph", g, "--harness", "nope"});
  REQUIRE(unknown.rc == kExitOk);
  REQUIRE(json::parse(unknown.out)["warning"] == true);
  REQUIRE(unknown.err.find("warning") != std::string::npos);

  auto paths = cli({"callgraph", "paths", "--graph", g, "--harness", "fuzz_record", "--target", "parse_header"});
  REQUIRE(paths.rc == kExitOk);
  auto doc = json::parse(paths.out);
  REQUIRE(doc["paths"].size() == 1);
  REQUIRE(doc["paths"][0]["functions"].size() == 3);
  REQUIRE(doc["paths"][0]["functions"][2]["name"] == "parse_header");

  auto missing = cli({"callgraph", "paths", "--graph", g, "--harness", "fuzz_record", "--target", "ghost"});
  REQUIRE(missing.rc == kExitOk);
  REQUIRE(json::parse(missing.out)["warning"] == true);

  auto meta = cli({"callgraph", "metadata", "--graph", g, "--name", "parse_record"});
  REQUIRE(meta.rc == kExitOk);
  REQUIRE(json::parse(meta.out)["functions"][0]["start_line"] == 12);

  REQUIRE(cli({"callgraph", "metadata", "--graph", "/nonexistent", "--name", "x"}).rc == kExitUsage);
}
