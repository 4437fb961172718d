// SPDX-License-Identifier: Apache-2.0
#pragma once

// SARIF intake and assessment: parsing, reachability, three-evaluator
// consensus with deferral, and confirmation when a matching POV arrives.

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "crs/callgraph.hpp"
#include "crs/router.hpp"
#include "crs/submission.hpp"

namespace crs {

// First result of the first run. Throws ParseError for documents without
// runs/results or with malformed locations.
SarifRecord parse_sarif(const json& doc, const std::string& task_id, const std::string& sarif_id);
// Every result of every run, ids "<sarif_id>-<n>" when there are several.
std::vector<SarifRecord> parse_sarif_all(const json& doc, const std::string& task_id,
                                         const std::string& sarif_id);

enum class CheckKind { FalsePositiveCheck, TruePositiveCheck };
enum class ConsensusVerdict { TruePositive, FalsePositive, Inconclusive };

std::string to_string(CheckKind k);
std::string to_string(ConsensusVerdict v);

struct Vote {
  std::string evaluator;
  std::optional<bool> answer;  // nullopt: the evaluator abstained (error or unclear reply)
  CheckKind check = CheckKind::FalsePositiveCheck;
};

struct ConsensusResult {
  ConsensusVerdict verdict = ConsensusVerdict::Inconclusive;
  std::vector<Vote> votes;
  bool reachable = false;
};

// TruePositive iff at least two evaluators affirm the true-positive check and
// fewer than two affirm the false-positive check; FalsePositive symmetrically;
// anything else, including two affirmed majorities, is Inconclusive.
ConsensusVerdict consensus_from_votes(const std::vector<Vote>& votes);

// Returns the text of a repository file, or nullopt.
using SourceReader = std::function<std::optional<std::string>(const std::string& file)>;

// Reported lines +-20, at most 200 lines over all locations.
std::string source_excerpts(const SarifRecord& record, const SourceReader& sources);

// Some affected function (or a function enclosing a location) is reachable
// from one of the harnesses.
bool sarif_reachable(const SarifRecord& record, const CallGraph& graph,
                     const std::vector<std::string>& harnesses);

ConsensusResult assess(const SarifRecord& record, const CallGraph* graph,
                       const std::vector<std::string>& harnesses,
                       const std::vector<ProviderHandle*>& evaluators, const SourceReader& sources);

// Pending records that match the POV, in input order.
std::vector<SarifRecord> on_pov_accepted(const PovSubmission& pov,
                                         const std::vector<SarifRecord>& pending,
                                         ProviderHandle* matcher);

// Broadcast document for POV generation guided by a SARIF report, or nullopt
// when the record is a false positive or already has a POV.
std::optional<json> forward_for_guidance(const SarifRecord& record, bool pov_exists);

// Prompt text for the sarif_POV0 strategy.
std::string render_sarif_hint(const SarifRecord& record);

struct AssessmentOutcome {
  SarifRecord record;  // verdict updated
  ConsensusResult consensus;
  std::optional<Decision> decision;   // final verdicts only
  std::optional<json> broadcast;
};

// Per-task assessor state. Final verdicts are submitted once; Deferred records
// wait for a matching POV.
class SarifAssessor {
 public:
  SarifAssessor(SubmissionService* submissions, std::vector<ProviderHandle*> evaluators,
                ProviderHandle* matcher, SourceReader sources);

  AssessmentOutcome ingest(const SarifRecord& record, const CallGraph* graph,
                           const std::vector<std::string>& harnesses);

  // Confirms matching Deferred records and returns the confirmations that
  // were newly submitted. TruePositive records already went out and join the
  // bundle on the submission side.
  std::vector<SarifRecord> pov_accepted(const PovSubmission& pov);

  std::vector<SarifRecord> records(const std::string& task_id) const;
  std::optional<SarifRecord> record(const std::string& sarif_id) const;

 private:
  SubmissionService* submissions_;
  std::vector<ProviderHandle*> evaluators_;
  ProviderHandle* matcher_;
  SourceReader sources_;
  mutable std::mutex mu_;
  std::map<std::string, SarifRecord> records_;  // by sarif_id
  std::vector<std::string> order_;
};

}  // namespace crs
