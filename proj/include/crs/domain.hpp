// SPDX-License-Identifier: Apache-2.0
#pragma once

// Core vocabulary shared by every service: tasks, fuzzer targets, crash
// signatures, submissions, SARIF records, bundles, score inputs and the call
// graph. Each type has a `validate` overload that throws InvariantError and a
// JSON serial form whose field names match the struct members.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "crs/core.hpp"
#include "json.hpp"

namespace crs {

using json = nlohmann::json;

enum class ChallengeMode { DeltaScan, FullScan, SarifAssessment };
enum class Language { C_CPP, Java };
enum class Sanitizer { Address, Memory, UndefinedBehavior, Jazzer };
enum class SignatureKind { Location, Heuristic };
enum class SubmissionStatus { Pending, Passed, Failed, Duplicate };
enum class TriState { Unknown, Pass, Fail };
enum class SarifVerdict { Undecided, TruePositive, FalsePositive, Deferred };

std::string to_string(ChallengeMode m);
std::string to_string(Language l);
std::string to_string(Sanitizer s);
std::string to_string(SubmissionStatus s);
std::string to_string(TriState t);
std::string to_string(SarifVerdict v);
Sanitizer sanitizer_from_string(const std::string& s);
Language language_from_string(const std::string& s);

struct ChallengeTask {
  std::string task_id;
  ChallengeMode mode = ChallengeMode::DeltaScan;
  std::string project_name;
  std::string repo_root;
  std::optional<std::string> base_state_ref;
  std::optional<std::string> commit_diff;
  std::vector<std::string> harness_names;
  Language language = Language::C_CPP;
  Duration time_window{0};
  Timestamp received_at{};

  bool operator==(const ChallengeTask&) const = default;
};

struct FuzzerTarget {
  std::string harness_name;
  Sanitizer sanitizer = Sanitizer::Address;
  std::string task_id;

  bool operator==(const FuzzerTarget&) const = default;
  auto operator<=>(const FuzzerTarget&) const = default;
};

struct CrashSignature {
  SignatureKind kind = SignatureKind::Location;
  std::optional<std::string> file;
  std::optional<int> line;
  Sanitizer sanitizer = Sanitizer::Address;
  std::optional<std::string> fallback_digest;

  static CrashSignature location(std::string file, int line, Sanitizer san) {
    return {SignatureKind::Location, std::move(file), line, san, std::nullopt};
  }
  static CrashSignature heuristic(std::string digest, Sanitizer san) {
    return {SignatureKind::Heuristic, std::nullopt, std::nullopt, san, std::move(digest)};
  }

  // Equality looks only at the fields relevant to `kind`.
  bool operator==(const CrashSignature& o) const;
  // Stable string identity usable as a map key; equal signatures share a key.
  std::string key() const;
};

struct PovSubmission {
  std::string pov_id;
  std::string task_id;
  FuzzerTarget target;
  Bytes input_blob;
  std::string crash_report;
  CrashSignature signature;
  SubmissionStatus status = SubmissionStatus::Pending;
  Timestamp submitted_at{};
  std::string originating_strategy;

  bool operator==(const PovSubmission&) const = default;
};

struct ValidationRecord {
  TriState applies = TriState::Unknown;
  TriState compiles = TriState::Unknown;
  TriState povs_blocked = TriState::Unknown;
  TriState tests_pass = TriState::Unknown;

  bool valid() const {
    return applies == TriState::Pass && compiles == TriState::Pass &&
           povs_blocked == TriState::Pass && tests_pass == TriState::Pass;
  }
  bool operator==(const ValidationRecord&) const = default;
};

struct PatchSubmission {
  std::string patch_id;
  std::string task_id;
  std::string diff_text;
  std::optional<CrashSignature> pov_signature;
  bool is_xpatch = false;
  SubmissionStatus status = SubmissionStatus::Pending;
  Timestamp submitted_at{};
  ValidationRecord validation;

  bool operator==(const PatchSubmission&) const = default;
};

struct AffectedFunction {
  std::string function_name;
  std::string file;
  bool operator==(const AffectedFunction&) const = default;
};

struct SourceLocation {
  std::string file;
  int start_line = 0;
  int end_line = 0;
  bool operator==(const SourceLocation&) const = default;
};

struct SarifRecord {
  std::string sarif_id;
  std::string task_id;
  std::vector<AffectedFunction> affected_functions;
  std::vector<std::string> cwe_ids;
  std::vector<SourceLocation> locations;
  std::optional<std::string> severity;
  std::optional<std::vector<std::string>> stack_trace;
  SarifVerdict verdict = SarifVerdict::Undecided;
  // Free-text description from the report, used by evaluator comparisons.
  std::string description;

  bool operator==(const SarifRecord&) const = default;
};

struct Bundle {
  std::string bundle_id;
  CrashSignature canonical_signature;
  std::optional<std::string> pov_id;
  std::optional<std::string> patch_id;
  std::optional<std::string> sarif_id;

  int member_count() const {
    return static_cast<int>(pov_id.has_value()) + static_cast<int>(patch_id.has_value()) +
           static_cast<int>(sarif_id.has_value());
  }
  bool operator==(const Bundle&) const = default;
};

struct ScoreInputs {
  std::uint64_t acc = 0;
  std::uint64_t inacc = 0;
  Duration time_rem{0};
  Duration time_window{0};
  bool operator==(const ScoreInputs&) const = default;
};

struct ScoreComponents {
  double vds = 0;
  double prs = 0;
  double sas = 0;
  double bdl = 0;
  double am = 1.0;
  double total = 0;
  bool operator==(const ScoreComponents&) const = default;
};

struct FunctionRecord {
  std::string name;
  std::string file;
  int start_line = 1;
  int end_line = 1;
  std::optional<std::string> source;
  std::optional<std::vector<std::string>> parameters;

  bool same_identity(const FunctionRecord& o) const {
    return name == o.name && file == o.file && start_line == o.start_line;
  }
  bool operator==(const FunctionRecord&) const = default;
};

// Immutable after construction; the constructor validates indices and builds
// ascending successor lists.
class CallGraph {
 public:
  CallGraph() = default;
  CallGraph(std::vector<FunctionRecord> functions,
            std::vector<std::pair<std::size_t, std::size_t>> edges,
            std::map<std::string, std::size_t> entrypoints,
            std::set<std::string> unresolved_harnesses = {});

  const std::vector<FunctionRecord>& functions() const { return functions_; }
  const std::vector<std::pair<std::size_t, std::size_t>>& edges() const { return edges_; }
  const std::map<std::string, std::size_t>& entrypoints() const { return entrypoints_; }
  const std::set<std::string>& unresolved_harnesses() const { return unresolved_; }
  const std::vector<std::size_t>& successors(std::size_t node) const { return succ_[node]; }
  std::size_t size() const { return functions_.size(); }
  bool has_edge(std::size_t from, std::size_t to) const;
  std::optional<std::size_t> index_of(const FunctionRecord& f) const;

  bool operator==(const CallGraph& o) const {
    return functions_ == o.functions_ && edges_ == o.edges_ && entrypoints_ == o.entrypoints_ &&
           unresolved_ == o.unresolved_;
  }

 private:
  std::vector<FunctionRecord> functions_;
  std::vector<std::pair<std::size_t, std::size_t>> edges_;
  std::map<std::string, std::size_t> entrypoints_;
  std::set<std::string> unresolved_;
  std::vector<std::vector<std::size_t>> succ_;
};

struct CallPath {
  std::vector<FunctionRecord> functions;
  bool operator==(const CallPath&) const = default;
};

// Pending -> {Passed, Failed, Duplicate}; anything else throws.
SubmissionStatus checked_transition(SubmissionStatus from, SubmissionStatus to);
PovSubmission with_status(PovSubmission pov, SubmissionStatus to);
PatchSubmission with_status(PatchSubmission patch, SubmissionStatus to);

void validate(const ChallengeTask& v);
void validate(const FuzzerTarget& v, Language task_language);
void validate(const CrashSignature& v);
void validate(const PovSubmission& v);
void validate(const PatchSubmission& v);
void validate(const SarifRecord& v);
void validate(const Bundle& v);
void validate(const ScoreInputs& v);
void validate(const ScoreComponents& v);
void validate(const FunctionRecord& v);
void validate(const CallPath& v, const CallGraph& graph);

void to_json(json& j, const ChallengeTask& v);
void from_json(const json& j, ChallengeTask& v);
void to_json(json& j, const FuzzerTarget& v);
void from_json(const json& j, FuzzerTarget& v);
void to_json(json& j, const CrashSignature& v);
void from_json(const json& j, CrashSignature& v);
void to_json(json& j, const PovSubmission& v);
void from_json(const json& j, PovSubmission& v);
void to_json(json& j, const ValidationRecord& v);
void from_json(const json& j, ValidationRecord& v);
void to_json(json& j, const PatchSubmission& v);
void from_json(const json& j, PatchSubmission& v);
void to_json(json& j, const AffectedFunction& v);
void from_json(const json& j, AffectedFunction& v);
void to_json(json& j, const SourceLocation& v);
void from_json(const json& j, SourceLocation& v);
void to_json(json& j, const SarifRecord& v);
void from_json(const json& j, SarifRecord& v);
void to_json(json& j, const Bundle& v);
void from_json(const json& j, Bundle& v);
void to_json(json& j, const ScoreInputs& v);
void from_json(const json& j, ScoreInputs& v);
void to_json(json& j, const ScoreComponents& v);
void from_json(const json& j, ScoreComponents& v);
void to_json(json& j, const FunctionRecord& v);
void from_json(const json& j, FunctionRecord& v);
void to_json(json& j, const CallGraph& v);
void from_json(const json& j, CallGraph& v);
void to_json(json& j, const CallPath& v);
void from_json(const json& j, CallPath& v);

// Enum serial forms are the enumerator names; unknown names throw ParseError.
#define CRS_DECLARE_ENUM_JSON(E)      \
  void to_json(json& j, const E& v);  \
  void from_json(const json& j, E& v);
CRS_DECLARE_ENUM_JSON(ChallengeMode)
CRS_DECLARE_ENUM_JSON(Language)
CRS_DECLARE_ENUM_JSON(Sanitizer)
CRS_DECLARE_ENUM_JSON(SignatureKind)
CRS_DECLARE_ENUM_JSON(SubmissionStatus)
CRS_DECLARE_ENUM_JSON(TriState)
CRS_DECLARE_ENUM_JSON(SarifVerdict)
#undef CRS_DECLARE_ENUM_JSON

// Serializes any domain value; `deserialize<T>` is its inverse.
template <typename T>
json serialize(const T& value) {
  return json(value);
}
template <typename T>
T deserialize(const json& doc) {
  return doc.get<T>();
}

}  // namespace crs
