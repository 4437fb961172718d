// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "crs/service.hpp"

#include <fstream>
#include <regex>

#include "httplib.h"

namespace crs {

namespace {

ServiceResponse error_response(int status, const std::string& message) {
  return {status, json{{"error", message}}};
}

json parse_body(const std::string& body) {
  try {
    return json::parse(body);
  } catch (const json::exception& e) {
    throw ParseError(std::string("request body: ") + e.what());
  }
}

std::string query_param(const ServiceRequest& r, const std::string& key, bool required = true) {
  auto it = r.query.find(key);
  if (it == r.query.end() || it->second.empty()) {
    if (required) throw ParseError("missing query parameter '" + key + "'");
    return {};
  }
  return it->second;
}

json functions_doc(const std::vector<FunctionRecord>& fns) {
  json out = json::array();
  for (const auto& f : fns) out.push_back(serialize(f));
  return out;
}

}  // namespace

CrsService::CrsService(CompetitionClient& client, Clock& clock, std::vector<ProviderHandle*> evaluators)
    : client_(client),
      clock_(clock),
      submissions_(client, clock),
      assessor_(&submissions_, std::move(evaluators), nullptr, nullptr) {}

CrsService::~CrsService() {
  stop();
  for (auto& t : job_threads_) {
    if (t.joinable()) t.join();
  }
}

ServiceResponse CrsService::handle(const ServiceRequest& request) {
  try {
    return route(request);
  } catch (const ParseError& e) {
    return error_response(400, e.what());
  } catch (const InvariantError& e) {
    return error_response(400, e.what());
  } catch (const ConfigError& e) {
    return error_response(400, e.what());
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::exception& e) {
    return error_response(500, e.what());
  }
}

ServiceResponse CrsService::route(const ServiceRequest& r) {
  static const std::regex task_scoped(R"(^/(bundles|ledger|score)/([^/]+)$)");
  static const std::regex task_report(R"(^/tasks/([^/]+)/report$)");
  std::smatch m;
  const bool get = r.method == "GET";
  const bool post = r.method == "POST";

  if (post && r.path == "/tasks/register") {
    auto task = deserialize<ChallengeTask>(parse_body(r.body));
    validate(task);
    submissions_.register_task(task);
    return {200, json{{"task_id", task.task_id}}};
  }
  if (post && r.path == "/povs") {
    auto pov = deserialize<PovSubmission>(parse_body(r.body));
    return {200, to_json_doc(submissions_.submit_pov(std::move(pov)))};
  }
  if (post && r.path == "/patches") {
    auto patch = deserialize<PatchSubmission>(parse_body(r.body));
    return {200, to_json_doc(submissions_.submit_patch(std::move(patch)))};
  }
  if (post && r.path == "/sarif-assessments") {
    auto rec = deserialize<SarifRecord>(parse_body(r.body));
    return {200, to_json_doc(submissions_.submit_sarif_assessment(std::move(rec)))};
  }
  if (get && std::regex_match(r.path, m, task_scoped)) {
    std::string kind = m[1], task = m[2];
    if (kind == "bundles") {
      json out = json::array();
      for (const auto& b : submissions_.bundles(task)) out.push_back(serialize(b));
      return {200, out};
    }
    try {
      if (kind == "ledger") return {200, submissions_.ledger_doc(task)};
      return {200, serialize(submissions_.score(task))};
    } catch (const Error& e) {
      return error_response(404, e.what());
    }
  }
  if (post && r.path == "/graphs") {
    auto graph = std::make_shared<const CallGraph>(load_graph(parse_body(r.body)));
    std::lock_guard<std::mutex> lock(mu_);
    std::string id = "graph-" + std::to_string(next_graph_++);
    graphs_[id] = graph;
    return {200, json{{"graph_id", id}, {"functions", graph->size()}}};
  }
  auto graph_for = [&](const std::string& id) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = graphs_.find(id);
    if (it == graphs_.end()) throw ParseError("unknown graph '" + id + "'");
    return it->second;
  };
  if (get && r.path == "/functions") {
    auto g = graph_for(query_param(r, "graph"));
    std::string file = query_param(r, "file", false);
    return {200, functions_doc(function_metadata(*g, query_param(r, "name"),
                                                 file.empty() ? std::nullopt : std::optional<std::string>(file)))};
  }
  if (get && r.path == "/reachable") {
    auto g = graph_for(query_param(r, "graph"));
    std::string harness = query_param(r, "harness");
    try {
      return {200, json{{"functions", functions_doc(reachable(*g, harness))}, {"warning", false}}};
    } catch (const UnknownHarness& e) {
      return {200, json{{"functions", json::array()}, {"warning", true}, {"message", e.what()}}};
    }
  }
  if (post && r.path == "/callpaths:batch") {
    json body = parse_body(r.body);
    auto g = graph_for(body.at("graph_id").get<std::string>());
    std::vector<PathQuery> queries;
    for (const auto& q : body.at("queries")) {
      PathQuery pq;
      pq.harness = q.at("harness").get<std::string>();
      if (q.at("target").is_string()) {
        auto found = function_metadata(*g, q["target"].get<std::string>());
        if (!found.empty()) pq.target = found.front();
        else pq.target.name = q["target"].get<std::string>();
      } else {
        pq.target = deserialize<FunctionRecord>(q["target"]);
      }
      queries.push_back(std::move(pq));
    }
    Language lang = body.contains("language") ? body["language"].get<Language>() : Language::C_CPP;
    QueryBudget budget;
    budget.clock = &clock_;
    json out = json::array();
    for (const auto& res : call_paths_batch(*g, queries, PathQueryLimits::for_language(lang), kDefaultBatchSize, budget)) {
      out.push_back(to_json_doc(res));
    }
    return {200, out};
  }
  if (post && r.path == "/sarif") {
    auto rec = parse_sarif(parse_body(r.body), query_param(r, "task_id"), query_param(r, "sarif_id"));
    std::shared_ptr<const CallGraph> g;
    std::string graph_id = query_param(r, "graph", false);
    if (!graph_id.empty()) g = graph_for(graph_id);
    std::vector<std::string> harnesses;
    if (g) {
      for (const auto& [h, _] : g->entrypoints()) harnesses.push_back(h);
    }
    auto out = assessor_.ingest(rec, g.get(), harnesses);
    return {200, json{{"record", serialize(out.record)},
                      {"consensus", to_string(out.consensus.verdict)},
                      {"decision", out.decision ? to_json_doc(*out.decision) : json(nullptr)},
                      {"broadcast", out.broadcast ? *out.broadcast : json(nullptr)}}};
  }
  if (post && r.path == "/tasks") return start_task(parse_body(r.body));
  if (get && std::regex_match(r.path, m, task_report)) {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = jobs_.find(m[1]);
    if (it == jobs_.end()) return error_response(404, "unknown task '" + m[1].str() + "'");
    const auto& job = *it->second;
    if (job.state == "running") return {202, json{{"state", "running"}}};
    if (job.state == "failed") return {500, json{{"state", "failed"}, {"error", job.error}}};
    return {200, job.report};
  }
  return error_response(404, "no route for " + r.method + " " + r.path);
}

ServiceResponse CrsService::start_task(const json& body) {
  fs::path manifest = body.at("manifest").get<std::string>();
  json doc;
  {
    std::ifstream in(manifest);
    if (!in) return error_response(400, "cannot read manifest '" + manifest.string() + "'");
    doc = json::parse(in);
  }
  std::string id = doc.at("task").at("task_id").get<std::string>();
  RunOptions flags;
  if (body.contains("seed")) flags.seed = body["seed"].get<std::uint64_t>();
  if (body.contains("clock")) flags.clock = body["clock"].get<std::string>();
  if (body.contains("providers")) flags.providers = body["providers"].get<std::string>();
  auto job = std::make_shared<TaskJob>();
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (jobs_.count(id) && jobs_[id]->state == "running") {
      return error_response(409, "task '" + id + "' is already running");
    }
    jobs_[id] = job;
    job_threads_.emplace_back([this, job, manifest, flags] {
      json report;
      std::string error;
      try {
        report = run_manifest(manifest, flags).report;
      } catch (const std::exception& e) {
        error = e.what();
      }
      std::lock_guard<std::mutex> lock(mu_);
      job->report = std::move(report);
      job->error = error;
      job->state = error.empty() ? "done" : "failed";
    });
  }
  return {202, json{{"task_id", id}, {"state", "running"}}};
}

bool CrsService::listen(const std::string& host, int port) {
  auto* server = new httplib::Server();
  {
    std::lock_guard<std::mutex> lock(mu_);
    server_ = server;
  }
  auto bridge = [this](const char* method) {
    return [this, method](const httplib::Request& req, httplib::Response& res) {
      ServiceRequest r;
      r.method = method;
      r.path = req.path;
      r.body = req.body;
      for (const auto& [k, v] : req.params) r.query[k] = v;
      ServiceResponse out = handle(r);
      res.status = out.status;
      res.set_content(out.body.dump(), "application/json");
    };
  };
  server->Get(".*", bridge("GET"));
  server->Post(".*", bridge("POST"));
  bool ok = server->listen(host, port);
  {
    std::lock_guard<std::mutex> lock(mu_);
    server_ = nullptr;
  }
  delete server;
  return ok;
}

void CrsService::stop() {
  std::lock_guard<std::mutex> lock(mu_);
  if (server_) static_cast<httplib::Server*>(server_)->stop();
}

}  // namespace crs
