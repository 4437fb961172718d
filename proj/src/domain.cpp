// SPDX-License-Identifier: Apache-2.0
#include "crs/domain.hpp"

#include <algorithm>
#include <cmath>

#include "crs/diff.hpp"

namespace crs {

namespace {

template <typename E, std::size_t N>
const char* enum_name(E v, const std::pair<E, const char*> (&table)[N]) {
  for (const auto& [e, name] : table) {
    if (e == v) return name;
  }
  return "?";
}

template <typename E, std::size_t N>
E enum_value(const std::string& s, const std::pair<E, const char*> (&table)[N],
             const char* type_name) {
  for (const auto& [e, name] : table) {
    if (s == name) return e;
  }
  throw ParseError(std::string("unknown ") + type_name + " '" + s + "'");
}

constexpr std::pair<ChallengeMode, const char*> kModes[] = {
    {ChallengeMode::DeltaScan, "DeltaScan"},
    {ChallengeMode::FullScan, "FullScan"},
    {ChallengeMode::SarifAssessment, "SarifAssessment"}};
constexpr std::pair<Language, const char*> kLanguages[] = {{Language::C_CPP, "C_CPP"},
                                                           {Language::Java, "Java"}};
constexpr std::pair<Sanitizer, const char*> kSanitizers[] = {
    {Sanitizer::Address, "Address"},
    {Sanitizer::Memory, "Memory"},
    {Sanitizer::UndefinedBehavior, "UndefinedBehavior"},
    {Sanitizer::Jazzer, "Jazzer"}};
constexpr std::pair<SignatureKind, const char*> kSignatureKinds[] = {
    {SignatureKind::Location, "Location"}, {SignatureKind::Heuristic, "Heuristic"}};
constexpr std::pair<SubmissionStatus, const char*> kStatuses[] = {
    {SubmissionStatus::Pending, "Pending"},
    {SubmissionStatus::Passed, "Passed"},
    {SubmissionStatus::Failed, "Failed"},
    {SubmissionStatus::Duplicate, "Duplicate"}};
constexpr std::pair<TriState, const char*> kTriStates[] = {
    {TriState::Unknown, "Unknown"}, {TriState::Pass, "Pass"}, {TriState::Fail, "Fail"}};
constexpr std::pair<SarifVerdict, const char*> kVerdicts[] = {
    {SarifVerdict::Undecided, "Undecided"},
    {SarifVerdict::TruePositive, "TruePositive"},
    {SarifVerdict::FalsePositive, "FalsePositive"},
    {SarifVerdict::Deferred, "Deferred"}};

void require(bool cond, const std::string& what) {
  if (!cond) throw InvariantError(what);
}

template <typename T>
void put_optional(json& j, const char* key, const std::optional<T>& v) {
  if (v) {
    j[key] = *v;
  } else {
    j[key] = nullptr;
  }
}

template <typename T>
void get_optional(const json& j, const char* key, std::optional<T>& out) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) {
    out.reset();
  } else {
    out = it->get<T>();
  }
}

const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw ParseError(std::string("expected object holding '") + key + "'");
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(std::string("missing field '") + key + "'");
  return *it;
}

}  // namespace

#define CRS_DEFINE_ENUM_JSON(E, TABLE, NAME)                                         \
  std::string to_string(E v) { return enum_name(v, TABLE); }                         \
  void to_json(json& j, const E& v) { j = enum_name(v, TABLE); }                     \
  void from_json(const json& j, E& v) {                                              \
    if (!j.is_string()) throw ParseError(std::string(NAME) + " must be a string");   \
    v = enum_value(j.get<std::string>(), TABLE, NAME);                               \
  }

CRS_DEFINE_ENUM_JSON(ChallengeMode, kModes, "mode")
CRS_DEFINE_ENUM_JSON(Language, kLanguages, "language")
CRS_DEFINE_ENUM_JSON(Sanitizer, kSanitizers, "sanitizer")
CRS_DEFINE_ENUM_JSON(SubmissionStatus, kStatuses, "status")
CRS_DEFINE_ENUM_JSON(TriState, kTriStates, "tri-state")
CRS_DEFINE_ENUM_JSON(SarifVerdict, kVerdicts, "verdict")
#undef CRS_DEFINE_ENUM_JSON

void to_json(json& j, const SignatureKind& v) { j = enum_name(v, kSignatureKinds); }
void from_json(const json& j, SignatureKind& v) {
  if (!j.is_string()) throw ParseError("kind must be a string");
  v = enum_value(j.get<std::string>(), kSignatureKinds, "signature kind");
}

Sanitizer sanitizer_from_string(const std::string& s) {
  return enum_value(s, kSanitizers, "sanitizer");
}
Language language_from_string(const std::string& s) {
  return enum_value(s, kLanguages, "language");
}

bool CrashSignature::operator==(const CrashSignature& o) const {
  if (kind != o.kind || sanitizer != o.sanitizer) return false;
  if (kind == SignatureKind::Location) return file == o.file && line == o.line;
  return fallback_digest == o.fallback_digest;
}

std::string CrashSignature::key() const {
  if (kind == SignatureKind::Location) {
    return "loc:" + file.value_or("") + ":" + std::to_string(line.value_or(0)) + ":" +
           to_string(sanitizer);
  }
  return "heur:" + fallback_digest.value_or("") + ":" + to_string(sanitizer);
}

CallGraph::CallGraph(std::vector<FunctionRecord> functions,
                     std::vector<std::pair<std::size_t, std::size_t>> edges,
                     std::map<std::string, std::size_t> entrypoints,
                     std::set<std::string> unresolved_harnesses)
    : functions_(std::move(functions)),
      edges_(std::move(edges)),
      entrypoints_(std::move(entrypoints)),
      unresolved_(std::move(unresolved_harnesses)),
      succ_(functions_.size()) {
  for (const auto& f : functions_) validate(f);
  for (const auto& [from, to] : edges_) {
    if (from >= functions_.size() || to >= functions_.size()) {
      throw InvariantError("dangling edge [" + std::to_string(from) + ", " + std::to_string(to) +
                           "] in graph of " + std::to_string(functions_.size()) + " functions");
    }
    succ_[from].push_back(to);
  }
  for (auto& s : succ_) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  for (const auto& [harness, idx] : entrypoints_) {
    if (idx >= functions_.size()) {
      throw InvariantError("entrypoint of harness '" + harness + "' references index " +
                           std::to_string(idx) + " outside the function table");
    }
    if (unresolved_.count(harness)) {
      throw InvariantError("harness '" + harness + "' is both resolved and unresolved");
    }
  }
  for (std::size_t i = 0; i < functions_.size(); ++i) {
    for (std::size_t k = i + 1; k < functions_.size(); ++k) {
      if (functions_[i].same_identity(functions_[k])) {
        throw InvariantError("duplicate function record " + functions_[i].name + " in " +
                             functions_[i].file);
      }
    }
  }
}

bool CallGraph::has_edge(std::size_t from, std::size_t to) const {
  if (from >= succ_.size()) return false;
  return std::binary_search(succ_[from].begin(), succ_[from].end(), to);
}

std::optional<std::size_t> CallGraph::index_of(const FunctionRecord& f) const {
  for (std::size_t i = 0; i < functions_.size(); ++i) {
    if (functions_[i].same_identity(f)) return i;
  }
  return std::nullopt;
}

SubmissionStatus checked_transition(SubmissionStatus from, SubmissionStatus to) {
  if (from != SubmissionStatus::Pending || to == SubmissionStatus::Pending) {
    throw InvariantError("illegal status transition " + to_string(from) + " -> " + to_string(to));
  }
  return to;
}

PovSubmission with_status(PovSubmission pov, SubmissionStatus to) {
  pov.status = checked_transition(pov.status, to);
  return pov;
}

PatchSubmission with_status(PatchSubmission patch, SubmissionStatus to) {
  patch.status = checked_transition(patch.status, to);
  return patch;
}

void validate(const ChallengeTask& v) {
  require(!v.task_id.empty(), "task_id must be non-empty");
  require(v.time_window.count() > 0, "time_window must be positive");
  if (v.mode == ChallengeMode::DeltaScan) {
    require(v.commit_diff.has_value(), "delta-scan task requires commit_diff");
  }
  if (v.mode != ChallengeMode::SarifAssessment) {
    require(!v.harness_names.empty(), "scored task requires at least one harness");
  }
}

void validate(const FuzzerTarget& v, Language task_language) {
  require(!v.harness_name.empty(), "harness_name must be non-empty");
  bool jazzer = v.sanitizer == Sanitizer::Jazzer;
  require(jazzer == (task_language == Language::Java),
          "Jazzer sanitizer iff the task language is Java");
}

void validate(const CrashSignature& v) {
  if (v.kind == SignatureKind::Location) {
    require(v.file.has_value() && !v.file->empty(), "location signature requires file");
    require(v.line.has_value() && *v.line > 0, "location signature requires a positive line");
  } else {
    require(v.fallback_digest.has_value() && !v.fallback_digest->empty(),
            "heuristic signature requires fallback_digest");
  }
}

void validate(const PovSubmission& v) {
  require(!v.pov_id.empty(), "pov_id must be non-empty");
  require(!v.input_blob.empty(), "input_blob must be non-empty");
  require(v.target.task_id == v.task_id, "POV target belongs to a different task");
  validate(v.signature);
}

void validate(const PatchSubmission& v) {
  require(!v.patch_id.empty(), "patch_id must be non-empty");
  if (v.is_xpatch) require(!v.pov_signature.has_value(), "XPatch must not carry pov_signature");
  UnifiedDiff parsed;
  try {
    parsed = parse_unified_diff(v.diff_text);
  } catch (const ParseError& e) {
    throw InvariantError(std::string("diff_text is not a unified diff: ") + e.what());
  }
  require(!parsed.files.empty(), "diff_text contains no file changes");
  if (v.pov_signature) validate(*v.pov_signature);
}

void validate(const SarifRecord& v) {
  require(!v.affected_functions.empty() || !v.locations.empty(),
          "SARIF record needs affected functions or locations");
  for (const auto& loc : v.locations) {
    require(!loc.file.empty(), "SARIF location without file");
    require(loc.start_line <= loc.end_line || loc.end_line == 0, "SARIF location end < start");
  }
}

void validate(const Bundle& v) {
  require(v.member_count() >= 2, "bundle needs at least two members");
  validate(v.canonical_signature);
}

void validate(const ScoreInputs& v) {
  require(v.time_window.count() > 0, "time_window must be positive");
  require(v.time_rem.count() >= 0 && v.time_rem <= v.time_window,
          "time_rem must lie within [0, time_window]");
}

void validate(const ScoreComponents& v) {
  for (double c : {v.vds, v.prs, v.sas, v.bdl}) {
    require(c >= 0 && std::isfinite(c), "score components must be non-negative");
  }
  require(v.am >= 0.75 && v.am <= 1.0, "accuracy multiplier must lie in [0.75, 1]");
  double expect = v.am * (v.vds + v.prs + v.sas + v.bdl);
  require(std::fabs(v.total - expect) <= 1e-9 * std::max(1.0, std::fabs(expect)),
          "total must equal am * (vds + prs + sas + bdl)");
}

void validate(const FunctionRecord& v) {
  require(!v.name.empty(), "function name must be non-empty");
  require(v.start_line >= 1 && v.end_line >= 1, "function lines must be positive");
  require(v.start_line <= v.end_line, "function start_line exceeds end_line");
}

void validate(const CallPath& v, const CallGraph& graph) {
  require(!v.functions.empty(), "call path must contain at least one function");
  std::vector<std::size_t> idx;
  for (const auto& f : v.functions) {
    auto i = graph.index_of(f);
    require(i.has_value(), "call path references unknown function " + f.name);
    idx.push_back(*i);
  }
  for (std::size_t k = 0; k + 1 < idx.size(); ++k) {
    require(graph.has_edge(idx[k], idx[k + 1]), "call path step is not a graph edge");
  }
  for (std::size_t k = 1; k + 1 < idx.size(); ++k) {
    require(idx[k] != idx.front() && idx[k] != idx.back(),
            "intermediate call path node equals the source or target");
  }
}

// ---------------------------------------------------------------------------
// JSON

void to_json(json& j, const ChallengeTask& v) {
  j = json{{"task_id", v.task_id},
           {"mode", v.mode},
           {"project_name", v.project_name},
           {"repo_root", v.repo_root},
           {"harness_names", v.harness_names},
           {"language", v.language},
           {"time_window", to_ms(v.time_window)},
           {"received_at", to_ms(v.received_at)}};
  put_optional(j, "base_state_ref", v.base_state_ref);
  put_optional(j, "commit_diff", v.commit_diff);
}

void from_json(const json& j, ChallengeTask& v) {
  v.task_id = field(j, "task_id").get<std::string>();
  v.mode = field(j, "mode").get<ChallengeMode>();
  v.project_name = j.value("project_name", "");
  v.repo_root = j.value("repo_root", "");
  v.harness_names = j.value("harness_names", std::vector<std::string>{});
  v.language = field(j, "language").get<Language>();
  v.time_window = Duration{field(j, "time_window").get<std::int64_t>()};
  v.received_at = timestamp_ms(j.value("received_at", std::int64_t{0}));
  get_optional(j, "base_state_ref", v.base_state_ref);
  get_optional(j, "commit_diff", v.commit_diff);
}

void to_json(json& j, const FuzzerTarget& v) {
  j = json{{"harness_name", v.harness_name}, {"sanitizer", v.sanitizer}, {"task_id", v.task_id}};
}

void from_json(const json& j, FuzzerTarget& v) {
  v.harness_name = field(j, "harness_name").get<std::string>();
  v.sanitizer = field(j, "sanitizer").get<Sanitizer>();
  v.task_id = j.value("task_id", "");
}

void to_json(json& j, const CrashSignature& v) {
  j = json{{"kind", v.kind}, {"sanitizer", v.sanitizer}};
  put_optional(j, "file", v.file);
  put_optional(j, "line", v.line);
  put_optional(j, "fallback_digest", v.fallback_digest);
}

void from_json(const json& j, CrashSignature& v) {
  v.kind = field(j, "kind").get<SignatureKind>();
  v.sanitizer = field(j, "sanitizer").get<Sanitizer>();
  get_optional(j, "file", v.file);
  get_optional(j, "line", v.line);
  get_optional(j, "fallback_digest", v.fallback_digest);
}

void to_json(json& j, const PovSubmission& v) {
  j = json{{"pov_id", v.pov_id},
           {"task_id", v.task_id},
           {"target", v.target},
           {"input_blob", hex_encode(v.input_blob)},
           {"crash_report", v.crash_report},
           {"signature", v.signature},
           {"status", v.status},
           {"submitted_at", to_ms(v.submitted_at)},
           {"originating_strategy", v.originating_strategy}};
}

void from_json(const json& j, PovSubmission& v) {
  v.pov_id = field(j, "pov_id").get<std::string>();
  v.task_id = field(j, "task_id").get<std::string>();
  v.target = field(j, "target").get<FuzzerTarget>();
  v.input_blob = hex_decode(field(j, "input_blob").get<std::string>());
  v.crash_report = j.value("crash_report", "");
  v.signature = field(j, "signature").get<CrashSignature>();
  v.status = j.contains("status") ? j.at("status").get<SubmissionStatus>()
                                  : SubmissionStatus::Pending;
  v.submitted_at = timestamp_ms(j.value("submitted_at", std::int64_t{0}));
  v.originating_strategy = j.value("originating_strategy", "");
}

void to_json(json& j, const ValidationRecord& v) {
  j = json{{"applies", v.applies},
           {"compiles", v.compiles},
           {"povs_blocked", v.povs_blocked},
           {"tests_pass", v.tests_pass}};
}

void from_json(const json& j, ValidationRecord& v) {
  v.applies = j.value("applies", TriState::Unknown);
  v.compiles = j.value("compiles", TriState::Unknown);
  v.povs_blocked = j.value("povs_blocked", TriState::Unknown);
  v.tests_pass = j.value("tests_pass", TriState::Unknown);
}

void to_json(json& j, const PatchSubmission& v) {
  j = json{{"patch_id", v.patch_id},
           {"task_id", v.task_id},
           {"diff_text", v.diff_text},
           {"is_xpatch", v.is_xpatch},
           {"status", v.status},
           {"submitted_at", to_ms(v.submitted_at)},
           {"validation", v.validation}};
  put_optional(j, "pov_signature", v.pov_signature);
}

void from_json(const json& j, PatchSubmission& v) {
  v.patch_id = field(j, "patch_id").get<std::string>();
  v.task_id = field(j, "task_id").get<std::string>();
  v.diff_text = field(j, "diff_text").get<std::string>();
  v.is_xpatch = j.value("is_xpatch", false);
  v.status = j.contains("status") ? j.at("status").get<SubmissionStatus>()
                                  : SubmissionStatus::Pending;
  v.submitted_at = timestamp_ms(j.value("submitted_at", std::int64_t{0}));
  v.validation = j.contains("validation") ? j.at("validation").get<ValidationRecord>()
                                          : ValidationRecord{};
  get_optional(j, "pov_signature", v.pov_signature);
}

void to_json(json& j, const AffectedFunction& v) {
  j = json{{"function_name", v.function_name}, {"file", v.file}};
}
void from_json(const json& j, AffectedFunction& v) {
  v.function_name = field(j, "function_name").get<std::string>();
  v.file = j.value("file", "");
}

void to_json(json& j, const SourceLocation& v) {
  j = json{{"file", v.file}, {"start_line", v.start_line}, {"end_line", v.end_line}};
}
void from_json(const json& j, SourceLocation& v) {
  v.file = field(j, "file").get<std::string>();
  v.start_line = field(j, "start_line").get<int>();
  v.end_line = j.value("end_line", v.start_line);
}

void to_json(json& j, const SarifRecord& v) {
  j = json{{"sarif_id", v.sarif_id},
           {"task_id", v.task_id},
           {"affected_functions", v.affected_functions},
           {"cwe_ids", v.cwe_ids},
           {"locations", v.locations},
           {"verdict", v.verdict},
           {"description", v.description}};
  put_optional(j, "severity", v.severity);
  put_optional(j, "stack_trace", v.stack_trace);
}

void from_json(const json& j, SarifRecord& v) {
  v.sarif_id = field(j, "sarif_id").get<std::string>();
  v.task_id = j.value("task_id", "");
  v.affected_functions = j.value("affected_functions", std::vector<AffectedFunction>{});
  v.cwe_ids = j.value("cwe_ids", std::vector<std::string>{});
  v.locations = j.value("locations", std::vector<SourceLocation>{});
  v.verdict = j.value("verdict", SarifVerdict::Undecided);
  v.description = j.value("description", "");
  get_optional(j, "severity", v.severity);
  get_optional(j, "stack_trace", v.stack_trace);
}

void to_json(json& j, const Bundle& v) {
  j = json{{"bundle_id", v.bundle_id}, {"canonical_signature", v.canonical_signature}};
  put_optional(j, "pov_id", v.pov_id);
  put_optional(j, "patch_id", v.patch_id);
  put_optional(j, "sarif_id", v.sarif_id);
}

void from_json(const json& j, Bundle& v) {
  v.bundle_id = field(j, "bundle_id").get<std::string>();
  v.canonical_signature = field(j, "canonical_signature").get<CrashSignature>();
  get_optional(j, "pov_id", v.pov_id);
  get_optional(j, "patch_id", v.patch_id);
  get_optional(j, "sarif_id", v.sarif_id);
}

void to_json(json& j, const ScoreInputs& v) {
  j = json{{"acc", v.acc},
           {"inacc", v.inacc},
           {"time_rem", to_ms(v.time_rem)},
           {"time_window", to_ms(v.time_window)}};
}

void from_json(const json& j, ScoreInputs& v) {
  v.acc = field(j, "acc").get<std::uint64_t>();
  v.inacc = field(j, "inacc").get<std::uint64_t>();
  v.time_rem = Duration{field(j, "time_rem").get<std::int64_t>()};
  v.time_window = Duration{field(j, "time_window").get<std::int64_t>()};
}

void to_json(json& j, const ScoreComponents& v) {
  j = json{{"vds", v.vds}, {"prs", v.prs}, {"sas", v.sas},
           {"bdl", v.bdl}, {"am", v.am},   {"total", v.total}};
}

void from_json(const json& j, ScoreComponents& v) {
  v.vds = field(j, "vds").get<double>();
  v.prs = field(j, "prs").get<double>();
  v.sas = field(j, "sas").get<double>();
  v.bdl = field(j, "bdl").get<double>();
  v.am = field(j, "am").get<double>();
  v.total = field(j, "total").get<double>();
}

void to_json(json& j, const FunctionRecord& v) {
  j = json{{"name", v.name},
           {"file", v.file},
           {"start_line", v.start_line},
           {"end_line", v.end_line}};
  put_optional(j, "source", v.source);
  put_optional(j, "parameters", v.parameters);
}

void from_json(const json& j, FunctionRecord& v) {
  v.name = field(j, "name").get<std::string>();
  v.file = field(j, "file").get<std::string>();
  v.start_line = field(j, "start_line").get<int>();
  v.end_line = field(j, "end_line").get<int>();
  get_optional(j, "source", v.source);
  get_optional(j, "parameters", v.parameters);
}

void to_json(json& j, const CallGraph& v) {
  json edges = json::array();
  for (const auto& [a, b] : v.edges()) edges.push_back(json::array({a, b}));
  json entry = json::object();
  for (const auto& [h, idx] : v.entrypoints()) entry[h] = idx;
  for (const auto& h : v.unresolved_harnesses()) entry[h] = nullptr;
  j = json{{"functions", v.functions()}, {"edges", edges}, {"entrypoints", entry}};
}

void from_json(const json& j, CallGraph& v) {
  std::vector<FunctionRecord> functions = field(j, "functions").get<std::vector<FunctionRecord>>();
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : j.value("edges", json::array())) {
    edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
  }
  std::map<std::string, std::size_t> entry;
  std::set<std::string> unresolved;
  const json entry_doc = j.value("entrypoints", json::object());
  for (const auto& [h, idx] : entry_doc.items()) {
    if (idx.is_null()) {
      unresolved.insert(h);
    } else {
      entry[h] = idx.get<std::size_t>();
    }
  }
  v = CallGraph(std::move(functions), std::move(edges), std::move(entry), std::move(unresolved));
}

void to_json(json& j, const CallPath& v) { j = json{{"functions", v.functions}}; }
void from_json(const json& j, CallPath& v) {
  v.functions = field(j, "functions").get<std::vector<FunctionRecord>>();
}

}  // namespace crs
