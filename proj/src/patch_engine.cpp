// SPDX-License-Identifier: Apache-2.0
#include "crs/patch_engine.hpp"

#include <algorithm>
#include <atomic>
#include <set>
#include <sstream>
#include <thread>

#include "crs/diff.hpp"

namespace crs {

std::string to_string(Identification i) {
  switch (i) {
    case Identification::LlmOnly:
      return "LlmOnly";
    case Identification::DiffOnly:
      return "DiffOnly";
    case Identification::Hybrid:
      return "Hybrid";
    case Identification::PathAware:
      return "PathAware";
    case Identification::KnowledgeEnhanced:
      return "KnowledgeEnhanced";
  }
  return "LlmOnly";
}

PatchStrategyConfig PatchStrategyConfig::named(const std::string& strategy) {
  PatchStrategyConfig c;
  c.strategy_name = strategy;
  static const std::map<std::string, Identification> delta = {
      {"patch_delta", Identification::LlmOnly},
      {"patch0_delta", Identification::DiffOnly},
      {"patch1_delta", Identification::Hybrid},
      {"patch2_delta", Identification::PathAware},
      {"patch3_delta", Identification::KnowledgeEnhanced},
  };
  if (auto it = delta.find(strategy); it != delta.end()) {
    c.identification = it->second;
    return c;
  }
  // Without a commit there is nothing to extract from a diff: the full-scan
  // variants identify with the LLM and widen the prompt instead. patch3_full
  // keeps the expert analysis and sample patches.
  static const std::set<std::string> full = {"patch_full", "patch0_full", "patch1_full",
                                             "patch2_full", "patch3_full"};
  if (full.count(strategy)) {
    c.identification =
        strategy == "patch3_full" ? Identification::KnowledgeEnhanced : Identification::LlmOnly;
    c.enhanced_prompting = true;
    return c;
  }
  if (strategy == "xpatch_delta" || strategy == "xpatch_full" || strategy == "xpatch_sarif") {
    c.identification = Identification::LlmOnly;
    c.enhanced_prompting = strategy != "xpatch_delta";
    return c;
  }
  throw ConfigError("unknown patch strategy '" + strategy + "'");
}

void validate(const PatchStrategyConfig& c, ChallengeMode mode) {
  if (c.max_iterations < 1) throw InvariantError("max_iterations must be positive");
  if (c.parallel_processes < 1) throw InvariantError("parallel_processes must be positive");
  bool needs_diff = c.identification == Identification::DiffOnly ||
                    c.identification == Identification::Hybrid ||
                    c.identification == Identification::PathAware;
  if (needs_diff && mode != ChallengeMode::DeltaScan) {
    throw InvariantError(to_string(c.identification) + " identification needs a delta-scan task");
  }
}

void validate(const XPatchConfig& c) {
  if (c.trigger_fraction <= 0 || c.top_k == 0 || c.score_threshold <= 0 ||
      c.fuzz_validation <= Duration{0} || c.max_submissions <= 0) {
    throw InvariantError("XPatch settings must be positive");
  }
}

// ---------------------------------------------------------------------------
// Sample patches

void SamplePatchCatalog::add(const std::string& crash_class, const std::string& cwe,
                             std::string diff_text) {
  entries_[{crash_class, cwe}] = std::move(diff_text);
}

std::optional<std::string> SamplePatchCatalog::lookup(const std::string& cls,
                                                      const std::string& cwe) const {
  if (auto it = entries_.find({cls, cwe}); it != entries_.end()) return it->second;
  if (auto it = entries_.find({cls, "*"}); it != entries_.end()) return it->second;
  return std::nullopt;
}

SamplePatchCatalog SamplePatchCatalog::defaults() {
  SamplePatchCatalog c;
  const std::string bounds =
      "--- a/src/buf.c\n+++ b/src/buf.c\n@@ -10,5 +10,7 @@\n"
      " int copy_field(char *dst, size_t cap, const char *src, size_t n) {\n"
      "+  if (n > cap)\n"
      "+    return -1;\n"
      "   memcpy(dst, src, n);\n"
      "   return 0;\n"
      " }\n";
  c.add("heap-buffer-overflow", "*", bounds);
  c.add("stack-buffer-overflow", "*", bounds);
  c.add("global-buffer-overflow", "*", bounds);
  c.add("heap-use-after-free", "*",
        "--- a/src/list.c\n+++ b/src/list.c\n@@ -20,4 +20,5 @@\n"
        " void drop(struct node *n) {\n"
        "   free(n->data);\n"
        "+  n->data = NULL;\n"
        " }\n");
  c.add("SEGV", "CWE-476",
        "--- a/src/parse.c\n+++ b/src/parse.c\n@@ -5,3 +5,5 @@\n"
        " const char *name_of(const struct item *it) {\n"
        "+  if (it == NULL)\n"
        "+    return \"\";\n"
        "   return it->name;\n");
  c.add("java.io.InvalidClassException", "*",
        "--- a/src/main/java/Loader.java\n+++ b/src/main/java/Loader.java\n@@ -8,3 +8,4 @@\n"
        "   ObjectInputStream in = new ObjectInputStream(stream);\n"
        "+  in.setObjectInputFilter(ObjectInputFilter.Config.createFilter(\"com.example.*;!*\"));\n"
        "   return in.readObject();\n");
  c.add("com.code_intelligence.jazzer.api.FuzzerSecurityIssueCritical", "*",
        "--- a/src/main/java/Runner.java\n+++ b/src/main/java/Runner.java\n@@ -4,3 +4,5 @@\n"
        " void run(String name) throws IOException {\n"
        "+  if (!name.matches(\"[A-Za-z0-9_-]+\"))\n"
        "+    throw new IllegalArgumentException(\"bad name\");\n"
        "   new ProcessBuilder(\"tool\", name).start();\n");
  return c;
}

std::string crash_class(const std::string& report) {
  for (const auto& line : split_lines(report)) {
    auto j = line.find("== Java Exception: ");
    if (j != std::string::npos) {
      std::string rest = trim(line.substr(j + 19));
      auto colon = rest.find(':');
      return trim(colon == std::string::npos ? rest : rest.substr(0, colon));
    }
    auto s = line.find("Sanitizer: ");
    if (s != std::string::npos && line.find("ERROR:") != std::string::npos) {
      std::string rest = line.substr(s + 11);
      auto sp = rest.find(' ');
      return sp == std::string::npos ? rest : rest.substr(0, sp);
    }
    auto r = line.find(": runtime error: ");
    if (r != std::string::npos) return "runtime-error";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------
// Identification

namespace {

const char* kPatchSystemPrompt =
    "You are an expert at repairing security vulnerabilities in C, C++ and Java code. Keep fixes "
    "minimal and preserve the program's intended behavior.";

std::string fence(const std::string& body) {
  std::string out = "```\n" + body;
  if (!body.empty() && body.back() != '\n') out += '\n';
  return out + "```\n";
}

std::optional<json> extract_json(const std::string& reply) {
  for (const auto& block : fenced_blocks(reply)) {
    auto doc = json::parse(block, nullptr, false);
    if (!doc.is_discarded()) return doc;
  }
  auto doc = json::parse(reply, nullptr, false);
  if (!doc.is_discarded()) return doc;
  for (auto [open, close] : {std::pair{'{', '}'}, std::pair{'[', ']'}}) {
    auto a = reply.find(open);
    auto b = reply.rfind(close);
    if (a != std::string::npos && b != std::string::npos && b > a) {
      doc = json::parse(reply.substr(a, b - a + 1), nullptr, false);
      if (!doc.is_discarded()) return doc;
    }
  }
  return std::nullopt;
}

std::string beyond_stack_clause() {
  return "List every function that may be vulnerable. Do not stop at the functions in the crash "
         "stack: include functions the crash log does not mention when they take part in the "
         "flaw.";
}

void add_unique(std::vector<FunctionRecord>& out, const FunctionRecord& f) {
  for (const auto& g : out) {
    if (g.name == f.name && g.file == f.file) return;
  }
  out.push_back(f);
}

ProviderHandle* identification_model(const PatchServices& s) {
  return s.evaluator ? s.evaluator : static_cast<ProviderHandle*>(s.router);
}

}  // namespace

std::vector<std::pair<std::string, std::string>> parse_function_list(const std::string& reply) {
  auto doc = extract_json(reply);
  if (!doc) throw ParseError("no function list in reply");
  json list = *doc;
  if (list.is_object() && list.contains("functions")) list = list["functions"];
  if (!list.is_array()) throw ParseError("function list must be an array");
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& e : list) {
    if (e.is_string()) {
      out.emplace_back(e.get<std::string>(), "");
    } else if (e.is_object() && e.contains("name") && e["name"].is_string()) {
      std::string file = e.contains("file") && e["file"].is_string() ? e["file"].get<std::string>() : "";
      out.emplace_back(e["name"].get<std::string>(), file);
    }
  }
  return out;
}

IdentifiedTargets identify_targets(const ChallengeTask& task,
                                   const std::optional<std::string>& crash_report,
                                   const PatchStrategyConfig& config, const PatchServices& services,
                                   const std::optional<std::string>& expert_analysis) {
  IdentifiedTargets out;
  if (!services.graph) {
    out.warnings.push_back("no call graph: functions cannot be resolved");
    return out;
  }
  const bool delta = task.mode == ChallengeMode::DeltaScan && task.commit_diff.has_value();
  Identification id = config.identification;
  bool use_diff = id == Identification::DiffOnly || id == Identification::Hybrid ||
                  id == Identification::PathAware ||
                  (id == Identification::KnowledgeEnhanced && delta);
  bool use_llm = id != Identification::DiffOnly;
  if (use_diff && !delta) {
    out.warnings.push_back("no commit diff: diff-based identification skipped");
    use_diff = false;
    use_llm = true;
  }
  if (use_diff) {
    try {
      for (const auto& f : modified_functions(*services.graph, *task.commit_diff)) add_unique(out.functions, f);
    } catch (const ParseError& e) {
      out.warnings.push_back(std::string("commit diff: ") + e.what());
    }
  }
  if (!use_llm) return out;
  ProviderHandle* model = identification_model(services);
  if (!model) {
    out.warnings.push_back("no model available for identification");
    return out;
  }
  std::ostringstream q;
  q << "Identify every potentially vulnerable function";
  q << (delta ? " from the commit and the crash log below. The commit introduces the vulnerability"
              : " from the crash log below");
  q << "; the crash log comes from a confirmed proof of vulnerability.\n\n";
  if (delta) q << "Commit diff:\n" << fence(*task.commit_diff) << "\n";
  if (crash_report) q << "Crash log:\n" << fence(truncate_output(*crash_report, 200)) << "\n";
  if (expert_analysis) q << "An expert's analysis of the vulnerability:\n" << *expert_analysis << "\n\n";
  if (id == Identification::PathAware || config.enhanced_prompting) q << beyond_stack_clause() << "\n\n";
  q << "Answer with JSON: {\"functions\": [{\"name\": \"...\", \"file\": \"...\"}]}";
  Conversation c;
  c.system_prompt = kPatchSystemPrompt;
  c.add_user(q.str());
  std::vector<std::pair<std::string, std::string>> named;
  try {
    auto r = model->complete(c);
    if (!r.ok()) {
      out.warnings.push_back("identification model failed: " + r.error().detail);
      return out;
    }
    named = parse_function_list(r.text());
  } catch (const std::exception& e) {
    out.warnings.push_back(std::string("identification reply: ") + e.what());
    return out;
  }
  for (const auto& [name, file] : named) {
    auto found = function_metadata(*services.graph, name,
                                   file.empty() ? std::nullopt : std::optional<std::string>(file));
    if (found.empty() && !file.empty()) found = function_metadata(*services.graph, name);
    if (found.empty()) {
      out.warnings.push_back("unknown function '" + name + "'");
      continue;
    }
    for (const auto& f : found) add_unique(out.functions, f);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Rewriting

std::string read_function_span(const fs::path& root, const FunctionRecord& f) {
  fs::path p = root / f.file;
  if (!fs::is_regular_file(p)) throw StaleRecord("file " + f.file + " does not exist");
  auto lines = split_lines(read_file(p));
  if (f.start_line < 1 || f.end_line > static_cast<int>(lines.size()) || f.end_line < f.start_line) {
    throw StaleRecord(f.name + ": lines " + std::to_string(f.start_line) + "-" +
                      std::to_string(f.end_line) + " are outside " + f.file);
  }
  std::string span;
  for (int i = f.start_line; i <= f.end_line; ++i) {
    span += lines[i - 1];
    if (i < f.end_line) span += '\n';
  }
  if (f.source) {
    std::string recorded = *f.source;
    while (!recorded.empty() && recorded.back() == '\n') recorded.pop_back();
    if (recorded != span) throw StaleRecord(f.name + ": recorded source no longer matches " + f.file);
  }
  return span;
}

void splice_functions(const fs::path& workspace, const std::vector<PatchCandidate>& candidates) {
  std::map<std::string, std::vector<const PatchCandidate*>> by_file;
  for (const auto& c : candidates) {
    if (c.replacement_body.empty()) throw InvariantError("replacement body is empty");
    by_file[c.function.file].push_back(&c);
  }
  for (auto& [file, list] : by_file) {
    // Bottom-up so earlier spans keep their line numbers.
    std::sort(list.begin(), list.end(), [](const PatchCandidate* a, const PatchCandidate* b) {
      return a->function.start_line > b->function.start_line;
    });
    for (std::size_t i = 1; i < list.size(); ++i) {
      if (list[i]->function.end_line >= list[i - 1]->function.start_line) {
        throw StaleRecord("overlapping replacements in " + file);
      }
    }
    for (const auto* c : list) read_function_span(workspace, c->function);
    fs::path p = workspace / file;
    std::string text = read_file(p);
    bool trailing_newline = !text.empty() && text.back() == '\n';
    auto lines = split_lines(text);
    for (const auto* c : list) {
      std::string body = c->replacement_body;
      while (!body.empty() && body.back() == '\n') body.pop_back();
      auto repl = split_lines(body);
      if (body.empty()) repl.clear();
      auto first = lines.begin() + (c->function.start_line - 1);
      auto last = lines.begin() + c->function.end_line;
      lines.erase(first, last);
      lines.insert(lines.begin() + (c->function.start_line - 1), repl.begin(), repl.end());
    }
    std::string out;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      out += lines[i];
      if (i + 1 < lines.size() || trailing_newline) out += '\n';
    }
    write_file(p, out);
  }
}

fs::path rewrite_function(const fs::path& repo_root, const FunctionRecord& function,
                          const std::string& replacement_body, const fs::path& dest) {
  read_function_span(repo_root, function);
  copy_tree(repo_root, dest);
  splice_functions(dest, {{function, replacement_body, ""}});
  return dest;
}

// ---------------------------------------------------------------------------
// Validation

namespace {

std::optional<fs::path> fresh_workspace(const PatchServices& s, const std::string& diff_text,
                                        ValidationReport& rep) {
  fs::path ws;
  try {
    if (!s.workdirs) throw InfraError("no workdir factory");
    ws = s.workdirs->create("validate");
    copy_tree(s.repo_root, ws);
  } catch (const std::exception& e) {
    rep.infra_failure = true;
    rep.failed_step = "applies";
    rep.detail = e.what();
    return std::nullopt;
  }
  if (trim(diff_text).empty()) {
    rep.record.applies = TriState::Fail;
    rep.failed_step = "applies";
    rep.detail = "the diff is empty";
    return std::nullopt;
  }
  try {
    apply_diff(parse_unified_diff(diff_text), ws);
  } catch (const DiffApplyError& e) {
    rep.record.applies = TriState::Fail;
    rep.failed_step = "applies";
    rep.detail = e.what();
    return std::nullopt;
  } catch (const ParseError& e) {
    rep.record.applies = TriState::Fail;
    rep.failed_step = "applies";
    rep.detail = e.what();
    return std::nullopt;
  } catch (const std::exception& e) {
    rep.infra_failure = true;
    rep.failed_step = "applies";
    rep.detail = e.what();
    return std::nullopt;
  }
  rep.record.applies = TriState::Pass;
  return ws;
}

bool check_compiles(const PatchServices& s, const fs::path& ws, ValidationReport& rep) {
  try {
    if (!s.build) throw InfraError("no build handle");
    auto b = s.build->build(ws);
    rep.record.compiles = b.ok ? TriState::Pass : TriState::Fail;
    if (!b.ok) {
      rep.failed_step = "compiles";
      rep.detail = b.diagnostics;
    }
    return b.ok;
  } catch (const std::exception& e) {
    rep.infra_failure = true;
    rep.failed_step = "compiles";
    rep.detail = e.what();
    return false;
  }
}

bool check_tests(const PatchServices& s, const fs::path& ws, ValidationReport& rep) {
  try {
    if (!s.tests) throw InfraError("no test runner");
    std::string failed;
    for (const auto& c : s.tests->run(ws)) {
      if (!c.passed) failed += c.name + (c.detail.empty() ? "" : ": " + c.detail) + "\n";
    }
    rep.record.tests_pass = failed.empty() ? TriState::Pass : TriState::Fail;
    if (!failed.empty()) {
      rep.failed_step = "tests_pass";
      rep.detail = failed;
    }
    return failed.empty();
  } catch (const std::exception& e) {
    rep.infra_failure = true;
    rep.failed_step = "tests_pass";
    rep.detail = e.what();
    return false;
  }
}

}  // namespace

ValidationReport validate_patch(const std::string& diff_text, const ChallengeTask& task,
                                const std::vector<PovSubmission>& known_povs,
                                const PatchServices& services) {
  (void)task;
  ValidationReport rep;
  auto ws = fresh_workspace(services, diff_text, rep);
  if (!ws) return rep;
  if (!check_compiles(services, *ws, rep)) return rep;
  try {
    if (!known_povs.empty() && !services.runner) throw InfraError("no harness runner");
    for (const auto& pov : known_povs) {
      auto h = services.runner->run(pov.target, pov.input_blob, *ws);
      if (h.crashed) {
        rep.record.povs_blocked = TriState::Fail;
        rep.failed_step = "povs_blocked";
        rep.detail = h.text;
        rep.detail += "\n(proof of vulnerability " + pov.pov_id + " still crashes)";
        return rep;
      }
    }
    rep.record.povs_blocked = TriState::Pass;
  } catch (const std::exception& e) {
    rep.infra_failure = true;
    rep.failed_step = "povs_blocked";
    rep.detail = e.what();
    return rep;
  }
  check_tests(services, *ws, rep);
  return rep;
}

ValidationReport validate_xpatch(const std::string& diff_text, const ChallengeTask& task,
                                 const std::vector<FuzzerTarget>& targets, const XPatchConfig& config,
                                 const PatchServices& services) {
  (void)task;
  ValidationReport rep;
  auto ws = fresh_workspace(services, diff_text, rep);
  if (!ws) return rep;
  if (!check_compiles(services, *ws, rep)) return rep;
  try {
    if (!services.fuzz) throw InfraError("no fuzz runner");
    for (const auto& t : targets) {
      auto r = services.fuzz->fuzz(t, *ws, config.fuzz_validation, config.fuzz_seed);
      if (r.crash_found) {
        rep.record.povs_blocked = TriState::Fail;
        rep.failed_step = "povs_blocked";
        rep.detail = "fuzzing the patched " + t.harness_name + " found a crash:\n" + r.report;
        return rep;
      }
    }
    rep.record.povs_blocked = TriState::Pass;
  } catch (const std::exception& e) {
    rep.infra_failure = true;
    rep.failed_step = "povs_blocked";
    rep.detail = e.what();
    return rep;
  }
  check_tests(services, *ws, rep);
  return rep;
}

// ---------------------------------------------------------------------------
// Replies

PatchReply parse_patch_reply(const std::string& reply) {
  PatchReply out;
  auto lines = split_lines(reply);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string line = trim(lines[i]);
    if (!starts_with(line, "FUNCTION:")) continue;
    std::string rest = trim(line.substr(9));
    std::string name = rest, file;
    auto sp = rest.find_first_of(" \t");
    if (sp != std::string::npos) {
      name = rest.substr(0, sp);
      file = trim(rest.substr(sp));
      if (!file.empty() && file.front() == '[') file.erase(file.begin());
      if (!file.empty() && file.back() == ']') file.pop_back();
      file = trim(file);
    }
    std::size_t open = i + 1;
    while (open < lines.size() && !starts_with(trim(lines[open]), "```")) {
      if (starts_with(trim(lines[open]), "FUNCTION:")) break;
      ++open;
    }
    if (open >= lines.size() || !starts_with(trim(lines[open]), "```")) continue;
    std::string body;
    std::size_t j = open + 1;
    for (; j < lines.size() && !starts_with(trim(lines[j]), "```"); ++j) body += lines[j] + "\n";
    if (j >= lines.size()) continue;  // unterminated block
    if (!trim(body).empty()) out.functions.push_back({{name, file}, body});
    i = j;
  }
  if (!out.functions.empty()) return out;
  if (auto doc = extract_json(reply); doc && doc->is_object() && doc->contains("requests")) {
    const auto& reqs = (*doc)["requests"];
    if (reqs.is_array()) {
      for (const auto& r : reqs) {
        if (!r.is_object()) continue;
        std::string file = r.contains("file") && r["file"].is_string() ? r["file"].get<std::string>() : "";
        std::string fn = r.contains("function") && r["function"].is_string() ? r["function"].get<std::string>() : "";
        if (!fn.empty() || !file.empty()) out.context_requests.emplace_back(file, fn);
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// The patch loop

namespace {

const char* kReplyFormat =
    "For every function you change, reply with a line `FUNCTION: <name> [<file>]` followed by a "
    "fenced code block holding the complete new version of that function, from its signature to "
    "its closing brace. Only the listed lines are replaced.";

const char* kContextProtocol =
    "If you need the source of another function first, reply only with JSON of the form "
    "{\"requests\": [{\"file\": \"<path>\", \"function\": \"<name>\"}]}.";

std::string describe_function(const fs::path& repo_root, const FunctionRecord& f) {
  std::string out = f.name + " in " + f.file + " (lines " + std::to_string(f.start_line) + "-" +
                    std::to_string(f.end_line) + ")\n";
  try {
    return out + fence(truncate_output(read_function_span(repo_root, f), 2000));
  } catch (const StaleRecord& e) {
    return out + "(source unavailable: " + e.what() + ")\n";
  }
}

std::string fulfill_requests(const PatchServices& s,
                             const std::vector<std::pair<std::string, std::string>>& requests) {
  std::string out = "Requested sources:\n";
  for (const auto& [file, fn] : requests) {
    std::vector<FunctionRecord> found;
    if (s.graph && !fn.empty()) {
      found = function_metadata(*s.graph, fn, file.empty() ? std::nullopt : std::optional<std::string>(file));
    }
    if (found.empty()) {
      out += "- " + (fn.empty() ? file : fn) + ": not found\n";
      continue;
    }
    for (const auto& f : found) out += describe_function(s.repo_root, f) + "\n";
  }
  return out;
}

struct LoopSetup {
  std::vector<std::string> model_order;
  std::function<bool()> stop;
  Timestamp deadline;
};

struct PatchPlan {
  std::string first_turn;
  std::vector<FunctionRecord> targets;
  std::optional<Conversation> history;
  bool path_aware = false;
};

std::optional<FunctionRecord> resolve(const PatchServices& s, const std::vector<FunctionRecord>& targets,
                                      const std::string& name, const std::string& file) {
  for (const auto& t : targets) {
    if (t.name == name && (file.empty() || t.file == file || ends_with(t.file, file))) return t;
  }
  if (!s.graph) return std::nullopt;
  auto found = function_metadata(*s.graph, name, file.empty() ? std::nullopt : std::optional<std::string>(file));
  if (found.empty()) return std::nullopt;
  return found.front();
}

std::string feedback_for(const ValidationReport& rep, const PatchServices& s,
                         const std::vector<PovSubmission>& povs, bool path_aware) {
  std::string d = truncate_output(rep.detail, 200);
  if (rep.failed_step == "applies") return "The patch could not be applied:\n" + fence(d);
  if (rep.failed_step == "compiles") return "The patched code does not compile:\n" + fence(d);
  if (rep.failed_step == "povs_blocked") {
    std::string out = "The patched program still crashes:\n" + fence(d);
    if (path_aware && s.coverage && !povs.empty()) {
      auto cov = s.coverage->trace(povs.front().target, povs.front().input_blob);
      out += "Execution of the crashing input:\nExecuted functions:";
      for (const auto& f : cov.executed_functions) out += " " + f;
      out += "\n";
      for (const auto& b : cov.branch_points) {
        out += "Branch at " + b.file + ":" + std::to_string(b.line) + (b.taken ? " taken\n" : " not taken\n");
      }
    }
    return out;
  }
  return "The patch breaks functionality tests:\n" + fence(d);
}

// One process: per model, fresh (or POV-seeded) dialogue, up to max_iterations rounds.
PatchRunResult patch_loop(const ChallengeTask& task, const std::vector<PovSubmission>& povs,
                          const PatchStrategyConfig& config, const PatchServices& s,
                          const PatchPlan& plan, const LoopSetup& setup, bool xpatch,
                          const std::vector<FuzzerTarget>& fuzz_targets, const XPatchConfig& xcfg) {
  PatchRunResult result;
  for (const auto& model : setup.model_order) {
    Conversation conv;
    if (plan.history && !plan.history->turns.empty() &&
        plan.history->turns.back().role == Role::Assistant) {
      conv = *plan.history;
    } else {
      conv.system_prompt = kPatchSystemPrompt;
    }
    conv.add_user(plan.first_turn);
    for (int it = 0; it < config.max_iterations; ++it) {
      if (setup.stop && setup.stop()) {
        result.notes.push_back("stopped");
        return result;
      }
      if (s.clock->now() >= setup.deadline) {
        result.notes.push_back("timed out");
        return result;
      }
      RouteResult reply;
      try {
        reply = s.router->route_from(conv, model);
      } catch (const AllProvidersExhausted& e) {
        ++result.llm_calls;
        result.notes.push_back(e.what());
        return result;
      }
      ++result.llm_calls;
      ++result.iterations;
      conv.add_assistant(reply.text);
      auto parsed = parse_patch_reply(reply.text);
      if (parsed.functions.empty()) {
        if (!parsed.context_requests.empty()) {
          conv.add_user(fulfill_requests(s, parsed.context_requests));
        } else {
          conv.add_user(std::string("No function replacement was found in the reply. ") + kReplyFormat);
        }
        continue;
      }
      std::vector<PatchCandidate> candidates;
      std::string problem;
      for (const auto& [ref, body] : parsed.functions) {
        auto f = resolve(s, plan.targets, ref.first, ref.second);
        if (!f) {
          problem += "Function '" + ref.first + "' is unknown.\n";
          continue;
        }
        candidates.push_back({*f, body, ""});
      }
      std::string diff;
      if (problem.empty()) {
        try {
          auto ws = s.workdirs->create(config.strategy_name + "-candidate");
          copy_tree(s.repo_root, ws);
          splice_functions(ws, candidates);
          diff = make_diff(s.repo_root, ws);
          if (trim(diff).empty()) problem = "The new functions are identical to the originals.\n";
        } catch (const StaleRecord& e) {
          problem = std::string("The function could not be replaced: ") + e.what() + "\n";
        } catch (const InvariantError& e) {
          problem = std::string(e.what()) + "\n";
        }
      }
      if (!problem.empty()) {
        conv.add_user(problem + kReplyFormat);
        continue;
      }
      ValidationReport rep = xpatch ? validate_xpatch(diff, task, fuzz_targets, xcfg, s)
                                    : validate_patch(diff, task, povs, s);
      result.attempts.push_back(rep);
      if (rep.infra_failure) {
        // An unanswered check never becomes a submission.
        result.notes.push_back("validation infrastructure failure at " + rep.failed_step + ": " +
                               rep.detail);
        return result;
      }
      if (!rep.record.valid()) {
        conv.add_user(feedback_for(rep, s, povs, plan.path_aware));
        continue;
      }
      PatchSubmission patch;
      patch.patch_id = s.ids->next(xpatch ? "xpatch" : "patch");
      patch.task_id = task.task_id;
      patch.diff_text = diff;
      patch.is_xpatch = xpatch;
      if (!xpatch && !povs.empty()) patch.pov_signature = povs.front().signature;
      patch.validation = rep.record;
      patch.submitted_at = s.clock->now();
      if (s.submissions) result.decision = s.submissions->submit_patch(patch);
      result.patch = std::move(patch);
      return result;
    }
  }
  return result;
}

PatchPlan plan_patch(const ChallengeTask& task, const std::vector<PovSubmission>& povs,
                     const PatchStrategyConfig& config, const PatchServices& s,
                     const std::optional<Conversation>& pov_conversation, PatchRunResult& result) {
  PatchPlan plan;
  plan.history = pov_conversation;
  plan.path_aware = config.identification == Identification::PathAware;
  std::optional<std::string> report;
  if (!povs.empty()) report = povs.front().crash_report;
  std::optional<std::string> expert;
  if (config.identification == Identification::KnowledgeEnhanced && pov_conversation) {
    expert = pov_conversation->first_assistant();
  }
  auto ids = identify_targets(task, report, config, s, expert);
  plan.targets = ids.functions;
  result.notes.insert(result.notes.end(), ids.warnings.begin(), ids.warnings.end());

  std::ostringstream u;
  u << "A proof of vulnerability crashes " << task.project_name
    << ". Fix the vulnerability without changing the program's intended behavior.\n\n";
  if (report) u << "Crash report:\n" << fence(truncate_output(*report, 200)) << "\n";
  if (task.mode == ChallengeMode::DeltaScan && task.commit_diff) {
    u << "The commit that introduced it:\n" << fence(*task.commit_diff) << "\n";
  }
  if (expert) u << "Expert analysis from the discovery phase:\n" << *expert << "\n\n";
  if (config.identification == Identification::KnowledgeEnhanced && s.catalog && report) {
    if (auto sample = s.catalog->lookup(crash_class(*report))) {
      u << "A fix for a similar crash elsewhere:\n" << fence(*sample) << "\n";
    }
  }
  if (plan.targets.empty()) {
    u << "No candidate function could be identified automatically; name the function you change.\n\n";
  } else {
    u << "Candidate functions:\n";
    for (const auto& f : plan.targets) u << describe_function(s.repo_root, f) << "\n";
  }
  if (plan.path_aware || config.enhanced_prompting) {
    u << "The flaw may sit in functions outside the crash stack; consider them as well.\n\n";
  }
  if (config.identification == Identification::KnowledgeEnhanced) u << kContextProtocol << "\n\n";
  u << kReplyFormat << "\n";
  plan.first_turn = u.str();
  return plan;
}

void require(const PatchServices& s) {
  if (!s.router || !s.clock || !s.ids || !s.workdirs) {
    throw InvariantError("patch strategy services are incomplete");
  }
}

std::vector<std::string> rotated(const std::vector<std::string>& names, std::size_t k) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < names.size(); ++i) out.push_back(names[(i + k) % names.size()]);
  return out;
}

}  // namespace

PatchRunResult run_patch_strategy(const ChallengeTask& task, const std::vector<PovSubmission>& povs,
                                  const PatchStrategyConfig& config, const PatchServices& services,
                                  const std::optional<Conversation>& pov_conversation) {
  validate(config, task.mode);
  require(services);
  PatchRunResult result;
  auto plan = plan_patch(task, povs, config, services, pov_conversation, result);
  LoopSetup setup{services.router->priority().names, services.cancelled,
                  services.clock->now() + config.timeout};
  auto loop = patch_loop(task, povs, config, services, plan, setup, false, {}, {});
  loop.notes.insert(loop.notes.begin(), result.notes.begin(), result.notes.end());
  return loop;
}

PatchRunResult run_patch_processes(const ChallengeTask& task, const std::vector<PovSubmission>& povs,
                                   const PatchStrategyConfig& config, const PatchServices& services,
                                   const std::optional<Conversation>& pov_conversation,
                                   bool sequential) {
  validate(config, task.mode);
  require(services);
  PatchRunResult combined;
  auto plan = plan_patch(task, povs, config, services, pov_conversation, combined);
  const auto& names = services.router->priority().names;
  const Timestamp deadline = services.clock->now() + config.timeout;
  std::atomic<bool> done{false};
  auto stop = [&] { return done.load() || (services.cancelled && services.cancelled()); };
  int n = config.parallel_processes;
  std::vector<PatchRunResult> results(static_cast<std::size_t>(n));
  auto run_one = [&](int i) {
    LoopSetup setup{rotated(names, static_cast<std::size_t>(i)), stop, deadline};
    results[i] = patch_loop(task, povs, config, services, plan, setup, false, {}, {});
    if (results[i].patch) done = true;
  };
  if (sequential || n == 1) {
    for (int i = 0; i < n && !stop(); ++i) run_one(i);
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < n; ++i) threads.emplace_back(run_one, i);
    for (auto& t : threads) t.join();
  }
  for (auto& r : results) {
    combined.llm_calls += r.llm_calls;
    combined.iterations += r.iterations;
    combined.attempts.insert(combined.attempts.end(), r.attempts.begin(), r.attempts.end());
    combined.notes.insert(combined.notes.end(), r.notes.begin(), r.notes.end());
    if (r.patch && !combined.patch) {
      combined.patch = r.patch;
      combined.decision = r.decision;
    }
  }
  return combined;
}

// ---------------------------------------------------------------------------
// XPatch

bool xpatch_gate_open(const ChallengeTask& task, Timestamp now, bool pov_exists,
                      const XPatchConfig& config) {
  if (pov_exists) return false;
  auto elapsed = now - task.received_at;
  return static_cast<double>(elapsed.count()) >=
         config.trigger_fraction * static_cast<double>(task.time_window.count());
}

std::vector<std::pair<FunctionRecord, int>> select_xpatch_targets(
    std::vector<std::pair<FunctionRecord, int>> scored, const XPatchConfig& config) {
  std::vector<std::pair<FunctionRecord, int>> kept;
  for (auto& e : scored) {
    if (e.second >= config.score_threshold) kept.push_back(std::move(e));
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (kept.size() > config.top_k) kept.resize(config.top_k);
  return kept;
}

PatchRunResult xpatch_run(const ChallengeTask& task, const std::vector<FuzzerTarget>& targets,
                          const XPatchConfig& config, const PatchStrategyConfig& patch_config,
                          const PatchServices& services) {
  validate(config);
  require(services);
  PatchRunResult result;
  auto pov_exists = [&] {
    return services.submissions && services.submissions->has_accepted_pov(task.task_id);
  };
  if (!xpatch_gate_open(task, services.clock->now(), pov_exists(), config)) {
    result.notes.push_back("gate closed");
    return result;
  }
  if (services.submissions &&
      services.submissions->ledger(task.task_id).xpatch_count >= config.max_submissions) {
    result.notes.push_back("XPatch cap reached");
    return result;
  }
  if (!services.graph) {
    result.notes.push_back("no call graph");
    return result;
  }

  std::vector<FunctionRecord> candidates;
  std::vector<std::pair<FunctionRecord, int>> ranked;
  if (task.mode == ChallengeMode::DeltaScan && task.commit_diff) {
    candidates = modified_functions(*services.graph, *task.commit_diff);
  } else {
    std::set<std::size_t> reach;
    for (const auto& h : task.harness_names) {
      try {
        for (auto i : reachable_indices(*services.graph, h)) reach.insert(i);
      } catch (const UnknownHarness&) {
      }
    }
    std::vector<FunctionRecord> fns;
    for (auto i : reach) fns.push_back(services.graph->functions()[i]);
    ProviderHandle* scorer = identification_model(services);
    if (scorer) ranked = select_xpatch_targets(rank_functions(fns, task.language, *scorer), config);
    for (const auto& [f, _] : ranked) candidates.push_back(f);
  }
  if (candidates.empty()) {
    result.notes.push_back("no candidate functions");
    return result;
  }

  PatchPlan plan;
  plan.targets = candidates;
  std::ostringstream u;
  u << "No crash is known yet, but the vulnerability in " << task.project_name
    << " lies in one or more of the functions below. Patch it without changing the program's "
       "intended behavior.\n\n";
  if (task.mode == ChallengeMode::DeltaScan && task.commit_diff) {
    u << "The commit that introduced it:\n" << fence(*task.commit_diff) << "\n";
  }
  for (const auto& f : candidates) {
    u << describe_function(services.repo_root, f);
    for (const auto& [rf, score] : ranked) {
      if (rf.same_identity(f)) u << "(likelihood score " << score << ")\n";
    }
    u << "\n";
  }
  u << kReplyFormat << "\n";
  plan.first_turn = u.str();

  LoopSetup setup;
  setup.model_order = services.router->priority().names;
  setup.deadline = services.clock->now() + patch_config.timeout;
  setup.stop = [&] { return (services.cancelled && services.cancelled()) || pov_exists(); };
  auto loop = patch_loop(task, {}, patch_config, services, plan, setup, true, targets, config);
  loop.notes.insert(loop.notes.begin(), result.notes.begin(), result.notes.end());
  return loop;
}

json to_json_doc(const PatchRunResult& r) {
  json attempts = json::array();
  for (const auto& a : r.attempts) {
    attempts.push_back({{"validation", serialize(a.record)},
                        {"failed_step", a.failed_step},
                        {"infra_failure", a.infra_failure}});
  }
  json doc{{"llm_calls", r.llm_calls},
           {"iterations", r.iterations},
           {"attempts", attempts},
           {"notes", r.notes}};
  doc["patch"] = r.patch ? serialize(*r.patch) : json(nullptr);
  doc["decision"] = r.decision ? to_json_doc(*r.decision) : json(nullptr);
  return doc;
}

}  // namespace crs
