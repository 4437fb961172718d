// SPDX-License-Identifier: Apache-2.0
#pragma once

// Submission service: POV and patch deduplication, SARIF-to-POV matching,
// bundle maintenance, the accuracy ledger and the competition-client boundary.
//
// Decisions for one task run on that task's own worker thread in arrival
// order; callers block until their decision is made. Readers take snapshots.

#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "crs/domain.hpp"
#include "crs/router.hpp"
#include "crs/scoring.hpp"

namespace crs {

std::size_t levenshtein(std::string_view a, std::string_view b);
// min(levenshtein(a, b), limit); banded, O(limit * max(|a|, |b|)).
std::size_t levenshtein_capped(std::string_view a, std::string_view b, std::size_t limit);

// True iff at least two of the evaluators answer that the reports share a root
// cause. An evaluator error or unparseable answer is a "no" vote.
bool judge_pov_equivalence(const std::string& report_a, const std::string& report_b,
                           const std::vector<ProviderHandle*>& evaluators);

// Stage 1: some SARIF location (file suffix, line within [start, end]) equals a
// frame of the POV crash report. Stage 2: the evaluator compares descriptions.
bool sarif_location_in_report(const SarifRecord& sarif, const PovSubmission& pov);
bool match_sarif_to_pov(const SarifRecord& sarif, const PovSubmission& pov,
                        ProviderHandle* evaluator);

// ---------------------------------------------------------------------------
// Competition client

class TransientError : public Error {
 public:
  using Error::Error;
};

struct ClientResponse {
  SubmissionStatus status = SubmissionStatus::Passed;  // Passed or Failed
  std::string external_id;
};

// Implementations are idempotent per submission id; transport failures throw
// TransientError.
class CompetitionClient {
 public:
  virtual ~CompetitionClient() = default;
  virtual ClientResponse submit_pov(const PovSubmission& pov) = 0;
  virtual ClientResponse submit_patch(const PatchSubmission& patch) = 0;
  virtual ClientResponse submit_sarif_assessment(const SarifRecord& record) = 0;
  virtual ClientResponse submit_bundle(const std::string& task_id, const Bundle& bundle) = 0;
};

enum class ScriptedOutcome { Passed, Failed, Transient };

// In-memory client answering from per-kind outcome scripts (Passed when a
// script runs dry). Repeated ids get the first answer again.
class LabCompetitionClient final : public CompetitionClient {
 public:
  enum Kind { Pov = 0, Patch = 1, Sarif = 2, BundleKind = 3 };

  void script(Kind kind, std::vector<ScriptedOutcome> outcomes);

  ClientResponse submit_pov(const PovSubmission& pov) override;
  ClientResponse submit_patch(const PatchSubmission& patch) override;
  ClientResponse submit_sarif_assessment(const SarifRecord& record) override;
  ClientResponse submit_bundle(const std::string& task_id, const Bundle& bundle) override;

  std::size_t calls(Kind kind) const;

 private:
  ClientResponse answer(Kind kind, const std::string& key);

  mutable std::mutex mu_;
  std::deque<ScriptedOutcome> scripts_[4];
  std::size_t calls_[4] = {0, 0, 0, 0};
  std::map<std::string, ClientResponse> answered_;
  std::uint64_t next_id_ = 1;
};

// REST client: POST {base}/v1/task/{task_id}/{pov|patch|sarif|bundle}/ with the
// domain serial form; expects {"status": "passed"|"failed", "id": "..."}.
class HttpCompetitionClient final : public CompetitionClient {
 public:
  HttpCompetitionClient(std::string host, int port, std::string api_key = {});

  ClientResponse submit_pov(const PovSubmission& pov) override;
  ClientResponse submit_patch(const PatchSubmission& patch) override;
  ClientResponse submit_sarif_assessment(const SarifRecord& record) override;
  ClientResponse submit_bundle(const std::string& task_id, const Bundle& bundle) override;

 private:
  ClientResponse post(const std::string& path, const json& body);

  std::string host_;
  int port_;
  std::string api_key_;
};

// ---------------------------------------------------------------------------
// Decisions and ledger

struct Decision {
  enum class Kind { Accepted, Failed, Duplicate, Rejected };
  Kind kind = Kind::Rejected;
  std::string external_id;  // Accepted / Failed
  std::string of_id;        // Duplicate: the earlier submission
  std::string reason;

  bool accepted() const { return kind == Kind::Accepted; }
};

std::string to_string(Decision::Kind k);
json to_json_doc(const Decision& d);

enum class BundleEvent { PovPassed, PatchPassed, SarifConfirmed };

struct BundleMutation {
  enum class Kind { Created, Extended };
  Kind kind = Kind::Created;
  Bundle bundle;
};

// Bundle bookkeeping for one task. A vulnerability whose first passed POV has
// no partner yet is held as a pending single-member entry and is not exported.
class BundleBook {
 public:
  using SarifMatcher = std::function<bool(const SarifRecord&, const PovSubmission&)>;

  BundleBook(std::string task_id, IdGenerator* ids) : task_id_(std::move(task_id)), ids_(ids) {}

  std::vector<BundleMutation> pov_passed(const PovSubmission& pov, const SarifMatcher& match);
  std::vector<BundleMutation> patch_passed(const PatchSubmission& patch);
  std::vector<BundleMutation> sarif_confirmed(const SarifRecord& sarif, const SarifMatcher& match);

  std::vector<Bundle> bundles() const;  // only entries with two or more members

 private:
  struct Entry {
    Bundle bundle;  // bundle_id empty while pending
    PovSubmission pov;
  };
  BundleMutation promote(Entry& e, bool was_exported);

  std::string task_id_;
  IdGenerator* ids_;
  std::vector<Entry> entries_;
  std::vector<SarifRecord> unbundled_sarifs_;
};

struct ScoredItem {
  ScoreKind kind = ScoreKind::POV;
  std::string id;
  Timestamp at{};
  bool passed = false;
};

struct LedgerSnapshot {
  std::string task_id;
  std::map<std::string, std::vector<std::string>> accepted_povs;     // signature key -> ids
  std::map<std::string, std::vector<std::string>> accepted_patches;  // signature key -> ids
  std::map<std::string, int> patch_count;                            // forwarded, per signature
  int xpatch_count = 0;
  std::uint64_t acc = 0;
  std::uint64_t inacc = 0;
  std::vector<ScoredItem> items;
};

struct SubmissionConfig {
  std::size_t levenshtein_threshold = 10;
  Duration patch_window = seconds(3);
  int max_patches_per_signature = 5;
  int max_xpatches_per_task = 3;
  int transient_retries = 3;
  Duration backoff_base = seconds(1);
};

// Score components of a ledger: each passed item contributes its base points
// scaled by tau at its submission time.
ScoreComponents score_ledger(const LedgerSnapshot& ledger, Timestamp received_at,
                             Duration time_window);

// The document `crs score` consumes.
json ledger_document(const LedgerSnapshot& ledger, Timestamp received_at, Duration time_window);
ScoreComponents score_from_document(const json& doc);

class SubmissionService {
 public:
  SubmissionService(CompetitionClient& client, Clock& clock, SubmissionConfig config = {},
                    std::vector<ProviderHandle*> dedup_evaluators = {},
                    ProviderHandle* sarif_matcher = nullptr);
  ~SubmissionService();
  SubmissionService(const SubmissionService&) = delete;
  SubmissionService& operator=(const SubmissionService&) = delete;

  void register_task(const ChallengeTask& task);

  Decision submit_pov(PovSubmission pov);
  Decision submit_patch(PatchSubmission patch);
  // record.verdict must be TruePositive or FalsePositive. A record is assessed
  // at most once; later calls return the first decision.
  Decision submit_sarif_assessment(SarifRecord record);

  std::vector<Bundle> bundles(const std::string& task_id) const;
  LedgerSnapshot ledger(const std::string& task_id) const;
  ScoreComponents score(const std::string& task_id) const;
  json ledger_doc(const std::string& task_id) const;

  std::vector<PovSubmission> povs(const std::string& task_id) const;     // every decided POV
  std::vector<PatchSubmission> patches(const std::string& task_id) const;
  std::vector<PovSubmission> accepted_povs(const std::string& task_id) const;
  bool has_accepted_pov(const std::string& task_id) const;
  std::optional<SarifVerdict> sarif_verdict(const std::string& task_id,
                                            const std::string& sarif_id) const;

 private:
  struct TaskState;
  TaskState& state_for(const std::string& task_id);
  const TaskState* find_state(const std::string& task_id) const;
  // Runs `fn` on the task's decision thread and waits for it.
  Decision run_serialized(TaskState& st, std::function<Decision()> fn);

  template <typename Call>
  std::optional<ClientResponse> call_client(Call&& call);

  Decision decide_pov(TaskState& st, PovSubmission pov);
  Decision decide_patch(TaskState& st, PatchSubmission patch);
  Decision decide_sarif(TaskState& st, SarifRecord record);
  void apply_mutations(TaskState& st, const std::vector<BundleMutation>& mutations);

  CompetitionClient& client_;
  Clock& clock_;
  SubmissionConfig config_;
  std::vector<ProviderHandle*> evaluators_;
  ProviderHandle* sarif_matcher_;
  IdGenerator ids_;

  mutable std::mutex mu_;  // guards tasks_ and the contents of every TaskState
  std::map<std::string, std::unique_ptr<TaskState>> tasks_;
};

}  // namespace crs
