// SPDX-License-Identifier: Apache-2.0
#pragma once

// Task lifecycle: decomposition into fuzzer targets, worker dispatch, budget
// policies, the shared corpus and its TTL sweeper, and the orchestration loop
// that ties POV strategies, patching, SARIF assessment and XPatch together.

#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "crs/callgraph.hpp"
#include "crs/handles.hpp"
#include "crs/patch_engine.hpp"
#include "crs/pov_engine.hpp"
#include "crs/router.hpp"
#include "crs/sarif.hpp"
#include "crs/submission.hpp"

namespace crs {

struct BudgetPolicy {
  Duration llm_fuzz_cap = minutes(60);
  Duration llm_fuzz_cap_after_pov_elsewhere = minutes(45);
  std::size_t msan_harness_threshold = 10;
  Duration corpus_ttl = minutes(10);
  Duration sweep_period = seconds(60);
  // Operator switches on top of the fixed pruning rules.
  std::set<Sanitizer> disabled_sanitizers;

  Duration fuzzer_half_time(const ChallengeTask& task) const { return task.time_window / 2; }
};

// Reduced cap <= full cap, positive durations.
void validate(const BudgetPolicy& p);

// Overrides: {"llm_fuzz_cap_min", "llm_fuzz_cap_after_pov_elsewhere_min",
// "msan_harness_threshold", "corpus_ttl_s", "sweep_period_s",
// "disabled_sanitizers": [...]}. Unknown keys throw ConfigError.
BudgetPolicy apply_policy_overrides(BudgetPolicy base, const json& overrides);
BudgetPolicy load_policy_file(const fs::path& path, BudgetPolicy base = {});

// Harnesses x sanitizers after pruning: UndefinedBehavior always dropped,
// Memory dropped above the harness threshold, Java gets Jazzer only.
// Throws ConfigError when nothing is left.
std::vector<FuzzerTarget> decompose(const ChallengeTask& task, const BudgetPolicy& policy);

enum class Stage { PovGeneration, PatchGeneration };

struct RosterEntry {
  std::string name;
  ChallengeMode mode;  // SarifAssessment marks the report-based strategies
  bool c_cpp = true;
  bool java = true;
  Stage stage = Stage::PovGeneration;
};

// The LLM strategy table (the unharnessed fuzzer-generation strategy is not part of it).
const std::vector<RosterEntry>& strategy_table();

// Names applicable to a task, table order. Report-based strategies are
// included for every mode that receives SARIF broadcasts.
std::vector<std::string> roster_for(ChallengeMode mode, Language language);

struct WorkerAssignment {
  std::size_t worker = 0;
  std::vector<FuzzerTarget> targets;  // references only: harness name and sanitizer
  std::vector<std::string> roster;
};

json to_json_doc(const WorkerAssignment& a);

// Round-robin; workers left without targets get no assignment. Throws
// ConfigError for an empty pool.
std::vector<WorkerAssignment> dispatch(const std::vector<FuzzerTarget>& targets,
                                       std::size_t worker_count, const ChallengeTask& task);

struct TaskBudgetState {
  std::set<FuzzerTarget> targets_with_pov;
};

Duration llm_budget(const FuzzerTarget& target, const TaskBudgetState& state,
                    const BudgetPolicy& policy);

enum class FuzzerDecision { Continue, Stop };
std::string to_string(FuzzerDecision d);

struct FuzzerState {
  bool povs_found = false;
  Duration elapsed{0};
  bool multi_fuzzer_on_vm = false;
};

FuzzerDecision fuzzer_stop_decision(const FuzzerState& state, Duration half_time);

// ---------------------------------------------------------------------------
// Shared corpus

struct CorpusEntry {
  fs::path path;
  Timestamp created_at{};
};

// Entry names are "<created_ms>-<seq>-<hash8>.bin"; the creation time lives in
// the name so that the sweeper works under simulated clocks. Nullopt for
// anything else (temporary files included).
std::optional<CorpusEntry> corpus_entry_from_path(const fs::path& path);
std::vector<CorpusEntry> list_corpus(const fs::path& dir);

// Removes entries older than ttl (strictly). Failures are logged and skipped.
std::vector<fs::path> corpus_sweep(const fs::path& dir, Timestamp now, Duration ttl = minutes(10));

// One directory per fuzzer target; deposits are written to a temporary name
// and renamed into place.
class CorpusManager final : public CorpusSink {
 public:
  CorpusManager(fs::path root, Clock& clock);

  void deposit(const FuzzerTarget& target, const Bytes& input) override;
  fs::path dir_for(const FuzzerTarget& target) const;
  std::vector<Bytes> entries(const FuzzerTarget& target) const;
  std::vector<fs::path> sweep(Duration ttl);

  std::size_t deposited() const;
  std::size_t swept() const;

 private:
  fs::path root_;
  Clock& clock_;
  mutable std::mutex mu_;
  std::uint64_t seq_ = 0;
  std::size_t deposited_ = 0;
  std::size_t swept_ = 0;
};

// ---------------------------------------------------------------------------
// Worker channel

struct WorkerMessage {
  enum class Kind { SarifGuidance, Stop };
  Kind kind = Kind::SarifGuidance;
  json body;
};

template <typename T>
class Channel {
 public:
  void push(T v) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      q_.push_back(std::move(v));
    }
    cv_.notify_one();
  }
  std::optional<T> try_pop() {
    std::lock_guard<std::mutex> lock(mu_);
    if (q_.empty()) return std::nullopt;
    T v = std::move(q_.front());
    q_.pop_front();
    return v;
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> q_;
};

// ---------------------------------------------------------------------------
// Orchestration

struct ScheduledSarif {
  Duration at{0};  // offset from task receipt
  SarifRecord record;
};

struct OrchestratorServices {
  Router* router = nullptr;
  std::vector<ProviderHandle*> evaluators;  // SARIF consensus
  ProviderHandle* ranking_model = nullptr;  // full-scan ranking and identification
  const CallGraph* graph = nullptr;
  HarnessRunner* runner = nullptr;
  CoverageTracer* coverage = nullptr;
  ScriptExecutor* executor = nullptr;
  BuildHandle* build = nullptr;
  TestRunner* tests = nullptr;
  FuzzRunner* fuzz = nullptr;
  SubmissionService* submissions = nullptr;
  SarifAssessor* sarif = nullptr;
  CorpusManager* corpus = nullptr;
  Clock* clock = nullptr;
  IdGenerator* ids = nullptr;
  WorkdirFactory* workdirs = nullptr;
  const SamplePatchCatalog* catalog = nullptr;
  fs::path repo_root;
  std::vector<std::string> project_markers;
  std::map<std::string, std::string> harness_sources;  // harness -> source text
};

struct OrchestratorConfig {
  BudgetPolicy policy;
  std::size_t workers = 2;
  std::optional<std::vector<std::string>> roster;  // overrides the table
  bool parallel = true;  // simulated runs use false
  std::uint64_t seed = 1;
  bool traditional_fuzzer = true;
  Duration fuzz_slice = seconds(60);
  int patch_processes = 3;
  XPatchConfig xpatch;
  std::vector<ScheduledSarif> sarif_reports;
};

// Runs the whole task and returns the report document:
//   task, targets, assignments, strategy_runs, fuzzer, povs, patches, sarif,
//   bundles, ledger, score, corpus, errors, finished_at.
// Per-target failures are recorded under "errors" and do not stop other targets.
json orchestrate(const ChallengeTask& task, OrchestratorServices& services,
                 const OrchestratorConfig& config);

}  // namespace crs
