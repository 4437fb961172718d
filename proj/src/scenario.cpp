// SPDX-License-Identifier: Apache-2.0
#include "crs/scenario.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "crs/lab.hpp"
#include "crs/providers.hpp"

namespace crs {

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    const char* v = std::getenv(name.c_str());
    if (!v || !*v) return std::nullopt;
    return std::string(v);
  };
}

namespace {

std::uint64_t parse_seed(const std::string& text, const std::string& where) {
  try {
    // stoull would wrap "-4" around instead of rejecting it.
    if (text.empty() || !std::isdigit(static_cast<unsigned char>(text[0]))) throw std::invalid_argument("sign");
    std::size_t used = 0;
    auto v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ManifestError(where + ": seed must be a non-negative integer, got '" + text + "'");
  }
}

json read_json(const fs::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ManifestError("cannot read " + what + " '" + path.string() + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ManifestError(what + " '" + path.string() + "': " + e.what());
  }
}

std::string read_text(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ManifestError("cannot read " + what + " '" + path.string() + "'");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

ScriptedOutcome outcome_from(const std::string& s) {
  if (s == "Passed") return ScriptedOutcome::Passed;
  if (s == "Failed") return ScriptedOutcome::Failed;
  if (s == "Transient") return ScriptedOutcome::Transient;
  throw ManifestError("competition: unknown outcome '" + s + "'");
}

ChallengeTask task_from(const json& doc, const fs::path& base, const LabTarget* target) {
  ChallengeTask t;
  t.task_id = doc.at("task_id").get<std::string>();
  t.mode = doc.at("mode").get<ChallengeMode>();
  t.language = doc.contains("language") ? doc["language"].get<Language>()
                                        : (target ? target->language : Language::C_CPP);
  t.project_name = doc.value("project_name", target ? target->project : std::string{});
  t.repo_root = doc.value("repo_root", "lab/" + (target ? target->name : t.task_id));
  if (doc.contains("harness_names")) {
    t.harness_names = doc["harness_names"].get<std::vector<std::string>>();
  } else if (target) {
    for (const auto& [name, _] : target->harnesses) t.harness_names.push_back(name);
  }
  double window_s = doc.at("time_window_s").get<double>();
  t.time_window = Duration{static_cast<std::int64_t>(std::llround(window_s * 1000))};
  t.received_at = timestamp_ms(doc.value("received_at_ms", std::int64_t{1'700'000'000'000}));
  if (doc.contains("commit_diff_file")) {
    t.commit_diff = read_text(base / doc["commit_diff_file"].get<std::string>(), "commit diff");
  } else if (doc.contains("commit_diff")) {
    t.commit_diff = doc["commit_diff"].get<std::string>();
  }
  if (doc.contains("base_state_ref")) t.base_state_ref = doc["base_state_ref"].get<std::string>();
  return t;
}

fs::path fresh_workdir() {
  static std::atomic<int> counter{0};
  fs::path p = fs::temp_directory_path() /
               ("crs-run-" + std::to_string(::getpid()) + "-" + std::to_string(counter.fetch_add(1)));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Removes the scratch directory unless the caller supplied it.
struct ScratchGuard {
  fs::path path;
  bool owned = false;
  ~ScratchGuard() {
    if (owned) {
      std::error_code ec;
      fs::remove_all(path, ec);
    }
  }
};

std::size_t count_status(const json& list, const std::string& status) {
  std::size_t n = 0;
  for (const auto& e : list) {
    if (e.value("status", std::string{}) == status) ++n;
  }
  return n;
}

}  // namespace

RunOptions resolve_options(const RunOptions& flags, const EnvLookup& env, const json& run) {
  RunOptions o;
  o.workdir = flags.workdir;
  if (flags.clock) {
    o.clock = flags.clock;
  } else if (auto v = env("CRS_CLOCK")) {
    o.clock = v;
  } else if (run.is_object() && run.contains("clock")) {
    o.clock = run["clock"].get<std::string>();
  } else {
    o.clock = "simulated";
  }
  if (*o.clock != "system" && *o.clock != "simulated") {
    throw ManifestError("clock must be 'system' or 'simulated', got '" + *o.clock + "'");
  }
  if (flags.seed) {
    o.seed = flags.seed;
  } else if (auto v = env("CRS_SEED")) {
    o.seed = parse_seed(*v, "CRS_SEED");
  } else if (run.is_object() && run.contains("seed")) {
    o.seed = run["seed"].get<std::uint64_t>();
  } else {
    o.seed = 1;
  }
  if (flags.providers) {
    o.providers = flags.providers;
  } else if (auto v = env("CRS_PROVIDERS")) {
    o.providers = v;
  }
  return o;
}

std::vector<std::string> check_expectations(const json& expect, const json& report) {
  std::vector<std::string> failures;
  if (!expect.is_object()) return failures;
  auto want = [&](const std::string& what, const json& expected, const json& actual) {
    if (expected != actual) {
      failures.push_back(what + ": expected " + expected.dump() + ", got " + actual.dump());
    }
  };
  for (const auto& [key, value] : expect.items()) {
    if (key == "povs_accepted") {
      want(key, value, count_status(report.value("povs", json::array()), "Passed"));
    } else if (key == "patches_accepted") {
      want(key, value, count_status(report.value("patches", json::array()), "Passed"));
    } else if (key == "xpatches_submitted") {
      std::size_t n = 0;
      for (const auto& p : report.value("patches", json::array())) n += p.value("is_xpatch", false) ? 1 : 0;
      want(key, value, n);
    } else if (key == "bundle_members") {
      json members = json::array();
      for (const auto& b : report.value("bundles", json::array())) {
        int m = 0;
        for (const char* f : {"pov_id", "patch_id", "sarif_id"}) m += b.contains(f) && !b[f].is_null() ? 1 : 0;
        members.push_back(m);
      }
      want(key, value, members);
    } else if (key == "pov_iteration") {
      json found = nullptr;
      for (const auto& r : report.value("strategy_runs", json::array())) {
        if (!r.contains("result") || !r["result"].contains("pov") || r["result"]["pov"].is_null()) continue;
        const auto& d = r["result"]["decision"];
        if (d.is_object() && d.value("decision", std::string{}) == "Accepted") {
          found = r["result"]["iterations"];
          break;
        }
      }
      want(key, value, found);
    } else if (key == "sarif_verdicts") {
      for (const auto& [id, verdict] : value.items()) {
        json actual = nullptr;
        for (const auto& s : report.value("sarif", json::array())) {
          if (s.value("sarif_id", std::string{}) == id) actual = s["verdict"];
        }
        want("sarif_verdicts." + id, verdict, actual);
      }
    } else if (key == "errors") {
      want(key, value, report.value("errors", json::array()).size());
    } else {
      failures.push_back("unknown expectation '" + key + "'");
    }
  }
  return failures;
}

ScenarioOutcome run_manifest(const fs::path& manifest_path, const RunOptions& flags, const EnvLookup& env) {
  if (!fs::is_regular_file(manifest_path)) {
    throw ManifestError("manifest '" + manifest_path.string() + "' not found");
  }
  json m = read_json(manifest_path, "manifest");
  const fs::path base = manifest_path.parent_path();
  RunOptions opts = resolve_options(flags, env, m.value("run", json::object()));
  const bool simulated = *opts.clock == "simulated";

  try {
    // Lab target and call graph.
    std::optional<LabTarget> target;
    if (m.contains("lab_target")) {
      try {
        target = load_lab_target(base / m["lab_target"].get<std::string>());
      } catch (const ParseError& e) {
        throw ManifestError(e.what());
      }
    }
    ChallengeTask task = task_from(m.at("task"), base, target ? &*target : nullptr);
    try {
      validate(task);
    } catch (const InvariantError& e) {
      throw ManifestError(std::string("task: ") + e.what());
    }
    std::optional<CallGraph> graph;
    if (m.contains("call_graph")) {
      try {
        graph = load_graph_file((base / m["call_graph"].get<std::string>()).string());
      } catch (const Error& e) {
        throw ManifestError(std::string("call graph: ") + e.what());
      }
    }

    // Clock.
    SimulatedClock sim_clock(task.received_at);
    SystemClock sys_clock;
    Clock& clock = simulated ? static_cast<Clock&>(sim_clock) : sys_clock;
    if (!simulated) task.received_at = std::chrono::time_point_cast<Duration>(clock.now());

    // Providers.
    const json prov = m.value("providers", json::object());
    ModelPriorityList priority = ModelPriorityList::defaults();
    if (prov.contains("priority")) priority.names = prov["priority"].get<std::vector<std::string>>();
    try {
      validate(priority);
    } catch (const InvariantError& e) {
      throw ManifestError(std::string("providers.priority: ") + e.what());
    }
    ProviderRegistry registry;
    std::vector<std::shared_ptr<ScriptedProvider>> scripted;
    if (opts.providers && *opts.providers == "live") {
      std::vector<HttpProviderConfig> configs;
      if (prov.contains("live")) {
        for (const auto& c : prov["live"]) configs.push_back(http_provider_config_from_json(c));
      } else {
        configs = default_http_providers();
      }
      for (auto& c : configs) registry.add(std::make_shared<HttpProvider>(std::move(c)));
    } else {
      json scripts = prov.value("scripts", json::object());
      if (opts.providers) scripts = read_json(*opts.providers, "provider scripts");
      if (!scripts.is_object()) throw ManifestError("provider scripts must map names to scripts");
      for (const auto& [name, s] : scripts.items()) {
        json doc = s.is_string() ? read_json(base / s.get<std::string>(), "script for " + name) : s;
        try {
          auto p = register_scripted_provider(name, parse_script(doc), &clock);
          scripted.push_back(p);
          registry.add(p);
        } catch (const Error& e) {
          throw ManifestError("script for " + name + ": " + e.what());
        }
      }
    }
    auto handle = [&](const std::string& name) -> ProviderHandle* {
      auto p = registry.find(name);
      if (!p) throw ManifestError("provider '" + name + "' has no script or configuration");
      return p.get();
    };
    Router router(registry, priority);
    std::vector<ProviderHandle*> evaluators, dedup;
    for (const auto& n : prov.value("evaluators", std::vector<std::string>{})) evaluators.push_back(handle(n));
    for (const auto& n : prov.value("dedup_evaluators", std::vector<std::string>{})) dedup.push_back(handle(n));
    ProviderHandle* ranking = nullptr;
    if (prov.contains("ranking_model") && !prov["ranking_model"].is_null()) {
      ranking = handle(prov["ranking_model"].get<std::string>());
    }
    ProviderHandle* sarif_matcher = nullptr;
    if (prov.contains("sarif_matcher") && !prov["sarif_matcher"].is_null()) {
      sarif_matcher = handle(prov["sarif_matcher"].get<std::string>());
    }

    // Competition client and submission service.
    LabCompetitionClient client;
    const json comp = m.value("competition", json::object());
    const std::pair<const char*, LabCompetitionClient::Kind> kinds[] = {
        {"pov", LabCompetitionClient::Pov},
        {"patch", LabCompetitionClient::Patch},
        {"sarif", LabCompetitionClient::Sarif},
        {"bundle", LabCompetitionClient::BundleKind}};
    for (const auto& [key, kind] : kinds) {
      if (!comp.contains(key)) continue;
      std::vector<ScriptedOutcome> outcomes;
      for (const auto& o : comp[key]) outcomes.push_back(outcome_from(o.get<std::string>()));
      client.script(kind, outcomes);
    }
    SubmissionService submissions(client, clock, {}, dedup, sarif_matcher);

    // Scratch space.
    ScratchGuard scratch{opts.workdir ? *opts.workdir : fresh_workdir(), !opts.workdir};
    fs::create_directories(scratch.path);
    fs::path repo = scratch.path / "repo";
    if (target) materialize(*target, repo);
    WorkdirFactory workdirs(scratch.path / "work");
    CorpusManager corpus(scratch.path / "corpus", clock);
    IdGenerator ids;

    SourceReader sources = [repo](const std::string& file) -> std::optional<std::string> {
      std::ifstream in(repo / file, std::ios::binary);
      if (!in) return std::nullopt;
      std::ostringstream s;
      s << in.rdbuf();
      return s.str();
    };
    SarifAssessor assessor(&submissions, evaluators, sarif_matcher, sources);

    std::optional<LabHarnessRunner> runner;
    std::optional<LabCoverageTracer> coverage;
    std::optional<LabBuildHandle> build;
    std::optional<LabTestRunner> tests;
    std::optional<LabFuzzRunner> fuzz;
    LabScriptExecutor executor;
    SamplePatchCatalog catalog = SamplePatchCatalog::defaults();

    OrchestratorServices services;
    services.router = &router;
    services.evaluators = evaluators;
    services.ranking_model = ranking;
    services.graph = graph ? &*graph : nullptr;
    services.executor = &executor;
    services.submissions = &submissions;
    services.sarif = &assessor;
    services.corpus = &corpus;
    services.clock = &clock;
    services.ids = &ids;
    services.workdirs = &workdirs;
    services.catalog = &catalog;
    services.repo_root = repo;
    if (target) {
      runner.emplace(*target, repo);
      coverage.emplace(*target);
      build.emplace(*target);
      tests.emplace(*target);
      fuzz.emplace(*target, &clock);
      services.runner = &*runner;
      services.coverage = &*coverage;
      services.build = &*build;
      services.tests = &*tests;
      services.fuzz = &*fuzz;
      services.project_markers = target->signature_markers;
      for (const auto& [name, h] : target->harnesses) {
        auto it = target->source_files.find(h.file);
        if (it != target->source_files.end()) services.harness_sources[name] = it->second;
      }
    }

    // Orchestrator configuration.
    OrchestratorConfig config;
    config.parallel = !simulated;
    config.seed = *opts.seed;
    if (m.contains("policy_file")) {
      config.policy = load_policy_file(base / m["policy_file"].get<std::string>());
    }
    if (m.contains("policy")) config.policy = apply_policy_overrides(config.policy, m["policy"]);
    const json orch = m.value("orchestrator", json::object());
    config.workers = orch.value("workers", std::size_t{2});
    if (orch.contains("roster")) config.roster = orch["roster"].get<std::vector<std::string>>();
    config.traditional_fuzzer = orch.value("traditional_fuzzer", true);
    config.fuzz_slice = Duration{static_cast<std::int64_t>(orch.value("fuzz_slice_s", 60.0) * 1000)};
    config.patch_processes = orch.value("patch_processes", 3);
    if (orch.contains("xpatch")) {
      const auto& x = orch["xpatch"];
      config.xpatch.trigger_fraction = x.value("trigger_fraction", config.xpatch.trigger_fraction);
      config.xpatch.top_k = x.value("top_k", config.xpatch.top_k);
      config.xpatch.score_threshold = x.value("score_threshold", config.xpatch.score_threshold);
      config.xpatch.fuzz_validation = Duration{x.value("fuzz_validation_s", std::int64_t{60}) * 1000};
      config.xpatch.max_submissions = x.value("max_submissions", config.xpatch.max_submissions);
      config.xpatch.fuzz_seed = x.value("fuzz_seed", config.xpatch.fuzz_seed);
    }
    for (const auto& r : m.value("sarif_reports", json::array())) {
      std::string id = r.at("sarif_id").get<std::string>();
      json doc = read_json(base / r.at("file").get<std::string>(), "SARIF report");
      ScheduledSarif s;
      s.at = Duration{static_cast<std::int64_t>(std::llround(r.value("at_s", 0.0) * 1000))};
      try {
        s.record = parse_sarif(doc, task.task_id, id);
      } catch (const ParseError& e) {
        throw ManifestError("SARIF report " + id + ": " + e.what());
      }
      config.sarif_reports.push_back(std::move(s));
    }

    ScenarioOutcome outcome;
    outcome.report = orchestrate(task, services, config);

    json scripts = json::object();
    for (const auto& p : scripted) {
      scripts[p->name()] = {{"calls", p->calls()}, {"remaining", p->remaining()}, {"over_consumed", p->over_consumed()}};
      if (p->remaining() != 0) {
        outcome.failures.push_back("script for " + p->name() + " has " + std::to_string(p->remaining()) +
                                   " unconsumed entries");
      }
      if (p->over_consumed() != 0) {
        outcome.failures.push_back("script for " + p->name() + " was called " +
                                   std::to_string(p->over_consumed()) + " times past its end");
      }
    }
    auto expect_failures = check_expectations(m.value("expect", json::object()), outcome.report);
    outcome.failures.insert(outcome.failures.end(), expect_failures.begin(), expect_failures.end());
    outcome.ok = outcome.failures.empty();
    outcome.report["scenario"] = {{"manifest", manifest_path.filename().string()},
                                  {"clock", *opts.clock},
                                  {"seed", *opts.seed},
                                  {"router_calls", router.call_count()},
                                  {"scripts", scripts},
                                  {"failures", outcome.failures},
                                  {"ok", outcome.ok}};
    return outcome;
  } catch (const json::exception& e) {
    throw ManifestError(std::string("manifest: ") + e.what());
  } catch (const ConfigError& e) {
    if (dynamic_cast<const ManifestError*>(&e)) throw;
    throw ManifestError(e.what());
  }
}

}  // namespace crs
