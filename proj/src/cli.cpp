// SPDX-License-Identifier: Apache-2.0
#include "crs/cli.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "crs/callgraph.hpp"
#include "crs/service.hpp"

namespace crs {

namespace {

// Writes the document to --out or to `out`.
int emit(const json& doc, const std::string& out_path, std::ostream& out, std::ostream& err) {
  std::string text = doc.dump(2) + "\n";
  if (out_path.empty()) {
    out << text;
    return kExitOk;
  }
  std::ofstream f(out_path, std::ios::binary);
  f << text;
  if (!f) {
    err << "error: cannot write " << out_path << "\n";
    return kExitInternal;
  }
  return kExitOk;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot read '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
}

CallGraph load_graph_arg(const std::string& path) {
  return load_graph(load_json_file(path));
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err, const EnvLookup& env) {
  CLI::App app{"Cyber reasoning system: vulnerability discovery and repair pipeline", "crs"};
  app.require_subcommand(1);
  std::string out_path;

  // run
  auto* run = app.add_subcommand("run", "Run a task manifest end to end and print the report");
  std::string manifest, clock, providers, workdir;
  std::uint64_t seed = 0;
  run->add_option("manifest", manifest, "Task manifest (JSON)")->required();
  run->add_option("--out", out_path, "Write the report here instead of stdout");
  run->add_option("--clock", clock, "system or simulated")->check(CLI::IsMember({"system", "simulated"}));
  auto* seed_opt = run->add_option("--seed", seed, "Seed for simulated fuzzing");
  run->add_option("--providers", providers, "Provider script document, or 'live'");
  run->add_option("--workdir", workdir, "Scratch directory (kept after the run)");

  // score
  auto* score = app.add_subcommand("score", "Score a ledger document");
  std::string ledger_path;
  score->add_option("ledger", ledger_path, "Ledger document (JSON)")->required();
  score->add_option("--out", out_path, "Write the result here instead of stdout");

  // callgraph
  auto* cg = app.add_subcommand("callgraph", "Query a call graph document");
  cg->require_subcommand(1);
  std::string graph_path, harness, target, file_hint, language = "C_CPP", name;
  auto* reach = cg->add_subcommand("reachable", "Functions reachable from a harness");
  reach->add_option("--graph", graph_path)->required();
  reach->add_option("--harness", harness)->required();
  reach->add_option("--out", out_path);
  auto* paths = cg->add_subcommand("paths", "Call paths from a harness to a function");
  paths->add_option("--graph", graph_path)->required();
  paths->add_option("--harness", harness)->required();
  paths->add_option("--target", target)->required();
  paths->add_option("--file", file_hint, "File of the target function");
  paths->add_option("--language", language, "C_CPP or Java (depth cap)")->check(CLI::IsMember({"C_CPP", "Java"}));
  paths->add_option("--out", out_path);
  auto* meta = cg->add_subcommand("metadata", "Records of a function by name");
  meta->add_option("--graph", graph_path)->required();
  meta->add_option("--name", name)->required();
  meta->add_option("--file", file_hint);
  meta->add_option("--out", out_path);

  // serve
  auto* serve = app.add_subcommand("serve", "Expose the services over HTTP");
  int port = 0;
  std::string host = "127.0.0.1";
  auto* port_opt = serve->add_option("--port", port, "Listen port (default: CRS_PORT or 8080)");
  serve->add_option("--host", host);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    if (app.get_subcommands().empty()) {
      err << app.help();
    }
    return kExitUsage;
  }

  try {
    if (*run) {
      RunOptions flags;
      if (!clock.empty()) flags.clock = clock;
      if (*seed_opt) flags.seed = seed;
      if (!providers.empty()) flags.providers = providers;
      if (!workdir.empty()) flags.workdir = fs::absolute(workdir);
      ScenarioOutcome outcome = run_manifest(manifest, flags, env);
      int rc = emit(outcome.report, out_path, out, err);
      if (rc != kExitOk) return rc;
      for (const auto& f : outcome.failures) err << "scenario check failed: " << f << "\n";
      return outcome.ok ? kExitOk : kExitInternal;
    }
    if (*score) {
      json doc = load_json_file(ledger_path);
      return emit(serialize(score_from_document(doc)), out_path, out, err);
    }
    if (*cg) {
      CallGraph graph = load_graph_arg(graph_path);
      if (*reach) {
        json doc{{"harness", harness}, {"functions", json::array()}, {"warning", false}};
        try {
          for (const auto& f : reachable(graph, harness)) doc["functions"].push_back(serialize(f));
        } catch (const UnknownHarness& e) {
          doc["warning"] = true;
          doc["message"] = e.what();
          err << "warning: " << e.what() << "\n";
        }
        return emit(doc, out_path, out, err);
      }
      if (*paths) {
        Language lang = language_from_string(language);
        auto candidates = function_metadata(graph, target,
                                            file_hint.empty() ? std::nullopt : std::optional<std::string>(file_hint));
        PathQueryResult result;
        if (candidates.empty()) {
          result.warning = true;
          result.message = "unknown target function '" + target + "'";
        } else {
          result = call_paths(graph, harness, candidates.front(), PathQueryLimits::for_language(lang));
        }
        if (result.warning) err << "warning: " << result.message << "\n";
        return emit(to_json_doc(result), out_path, out, err);
      }
      if (*meta) {
        json fns = json::array();
        for (const auto& f : function_metadata(graph, name,
                                               file_hint.empty() ? std::nullopt : std::optional<std::string>(file_hint))) {
          fns.push_back(serialize(f));
        }
        return emit(json{{"name", name}, {"functions", fns}}, out_path, out, err);
      }
    }
    if (*serve) {
      if (!*port_opt) {
        port = 8080;
        if (auto v = env("CRS_PORT")) {
          try {
            port = std::stoi(*v);
          } catch (const std::exception&) {
            err << "error: CRS_PORT is not a number\n";
            return kExitUsage;
          }
        }
      }
      LabCompetitionClient client;
      SystemClock sys;
      CrsService service(client, sys);
      err << "listening on " << host << ":" << port << "\n";
      return service.listen(host, port) ? kExitOk : kExitInternal;
    }
  } catch (const ManifestError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const InvariantError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}

}  // namespace crs
