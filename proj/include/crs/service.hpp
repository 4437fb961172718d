// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP front of the submission, call-graph, SARIF and coordinator services.
//
//   POST /povs  /patches  /sarif-assessments        domain serial forms
//   GET  /bundles/{task}  /ledger/{task}  /score/{task}
//   POST /tasks/register                            ChallengeTask
//   POST /graphs                                    graph document -> {"graph_id"}
//   GET  /functions?graph=&name=&file=
//   GET  /reachable?graph=&harness=
//   POST /callpaths:batch                           {"graph_id", "queries": [...]}
//   POST /sarif?task_id=&sarif_id=                  SARIF document
//   POST /tasks                                     {"manifest": path, "seed"?, "clock"?}
//   GET  /tasks/{id}/report

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "crs/callgraph.hpp"
#include "crs/sarif.hpp"
#include "crs/scenario.hpp"
#include "crs/submission.hpp"

namespace crs {

struct ServiceRequest {
  std::string method;  // "GET" | "POST"
  std::string path;
  std::map<std::string, std::string> query;
  std::string body;
};

struct ServiceResponse {
  int status = 200;
  json body;
};

class CrsService {
 public:
  CrsService(CompetitionClient& client, Clock& clock, std::vector<ProviderHandle*> evaluators = {});
  ~CrsService();

  ServiceResponse handle(const ServiceRequest& request);

  // Blocks serving on host:port until stop() is called.
  bool listen(const std::string& host, int port);
  void stop();

 private:
  ServiceResponse route(const ServiceRequest& r);
  ServiceResponse start_task(const json& body);

  CompetitionClient& client_;
  Clock& clock_;
  SubmissionService submissions_;
  SarifAssessor assessor_;

  std::mutex mu_;
  std::map<std::string, std::shared_ptr<const CallGraph>> graphs_;
  std::uint64_t next_graph_ = 1;
  struct TaskJob {
    std::string state = "running";  // running | done | failed
    json report;
    std::string error;
  };
  std::map<std::string, std::shared_ptr<TaskJob>> jobs_;
  std::vector<std::thread> job_threads_;
  void* server_ = nullptr;  // httplib::Server, kept out of the header
};

}  // namespace crs
