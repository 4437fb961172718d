// SPDX-License-Identifier: Apache-2.0
#include "crs/pov_engine.hpp"

#include <algorithm>
#include <sstream>

#include "crs/diff.hpp"
#include "crs/signature.hpp"

namespace crs {

// ---------------------------------------------------------------------------
// Catalogs and presets

const std::vector<CweCategory>& c_cwe_catalog() {
  static const std::vector<CweCategory> catalog = {
      {"CWE-119", "Buffer Overflow"},
      {"CWE-416", "Use After Free"},
      {"CWE-476", "NULL Pointer Dereference"},
      {"CWE-190", "Integer Overflow"},
      {"CWE-122", "Heap-based Buffer Overflow"},
      {"CWE-787", "Out-of-bounds Write"},
      {"CWE-125", "Out-of-bounds Read"},
      {"CWE-134", "Format String"},
      {"CWE-121", "Stack-based Buffer Overflow"},
      {"CWE-369", "Divide by Zero"},
  };
  return catalog;
}

std::vector<CweCategory> java_cwe_catalog(const std::vector<CweCategory>& extra) {
  if (extra.size() > 8) throw ConfigError("the Java catalog has 8 configurable slots");
  std::vector<CweCategory> out = {
      {"CWE-22", "Path Traversal"},
      {"CWE-77/78", "Command Injection"},
      {"CWE-79", "Cross-Site Scripting"},
      {"CWE-89", "SQL Injection"},
      {"CWE-502", "Unsafe Deserialization"},
      {"CWE-611", "XML External Entity Processing"},
      {"CWE-918", "Server-Side Request Forgery"},
  };
  out.insert(out.end(), extra.begin(), extra.end());
  return out;
}

PovStrategyConfig PovStrategyConfig::named(const std::string& strategy, Language language) {
  PovStrategyConfig c;
  c.strategy_name = strategy;
  auto catalog = language == Language::Java ? java_cwe_catalog() : c_cwe_catalog();
  if (strategy == "xs0_delta") {
    return c;
  }
  if (strategy == "as0_delta") {
    c.multi_input = true;
    c.inputs_per_iteration = 5;
    c.cwe_catalog = catalog;
    c.inject_modified_functions = true;
    c.use_call_paths = true;
    return c;
  }
  c.delta = false;
  if (strategy == "xs0_c_full" || strategy == "xs0_java_full" || strategy == "xs1_c_full" ||
      strategy == "xs1_java_full" || strategy == "xs2_java_full") {
    c.rank_functions = true;
    if (strategy == "xs2_java_full") c.max_iterations = 3;
    return c;
  }
  if (strategy == "as0_full") {
    c.rank_functions = true;
    c.multi_input = true;
    c.inputs_per_iteration = 5;
    c.cwe_catalog = catalog;
    return c;
  }
  if (strategy == "sarif_POV0") return c;
  throw ConfigError("unknown POV strategy '" + strategy + "'");
}

void validate(const PovStrategyConfig& c) {
  if (c.max_iterations < 1) throw InvariantError("max_iterations must be positive");
  if (c.timeout < Duration{0}) throw InvariantError("timeout must not be negative");
  if (c.multi_input != (c.inputs_per_iteration == 5)) {
    throw InvariantError("multi_input requires exactly 5 inputs per iteration");
  }
  if (!c.multi_input && c.inputs_per_iteration != 1) {
    throw InvariantError("single-input strategies produce 1 input per iteration");
  }
}

std::vector<std::string> expected_outputs(const PovStrategyConfig& c) {
  if (!c.multi_input) return {"x.bin"};
  std::vector<std::string> out;
  for (int i = 1; i <= c.inputs_per_iteration; ++i) out.push_back("x" + std::to_string(i) + ".bin");
  return out;
}

MissingOutputs::MissingOutputs(std::vector<std::string> names)
    : Error([&] {
        std::string msg = "generator wrote none of:";
        for (const auto& n : names) msg += " " + n;
        return msg;
      }()),
      names_(std::move(names)) {}

// ---------------------------------------------------------------------------
// Prompts

namespace {

const char* kPovSystemPrompt =
    "You are an expert at finding security vulnerabilities in software. If an attempt fails, "
    "skip the apology, refine your analysis and try again. Say so when some additional "
    "information would help you.";

std::string fence(const std::string& lang, const std::string& body) {
  std::string out = "```" + lang + "\n" + body;
  if (!body.empty() && body.back() != '\n') out += '\n';
  return out + "```\n";
}

std::string render_call_path(const CallPath& p) {
  std::string out;
  for (std::size_t i = 0; i < p.functions.size(); ++i) {
    if (i) out += " -> ";
    out += p.functions[i].name + " (" + p.functions[i].file + ":" +
           std::to_string(p.functions[i].start_line) + ")";
  }
  return out;
}

}  // namespace

std::string sanitizer_guidance(Sanitizer sanitizer) {
  switch (sanitizer) {
    case Sanitizer::Address:
      return "The target is built with AddressSanitizer. It reports out-of-bounds reads and "
             "writes on heap, stack and globals, use-after-free, double free and invalid frees. "
             "Aim for lengths and offsets that step past the end of a buffer.";
    case Sanitizer::Memory:
      return "The target is built with MemorySanitizer. It reports reads of uninitialized memory "
             "that influence control flow or are passed to system calls. Look for fields that are "
             "only set on some parsing paths.";
    case Sanitizer::UndefinedBehavior:
      return "The target is built with UndefinedBehaviorSanitizer. It reports signed integer "
             "overflow, invalid shifts, misaligned pointers and division by zero.";
    case Sanitizer::Jazzer:
      return "The target runs under Jazzer. It reports uncaught runtime exceptions and its "
             "sanitizers flag unsafe deserialization, command, SQL and LDAP injection, path "
             "traversal, server-side request forgery and regular-expression denial of service.";
  }
  return {};
}

std::string language_guidance(Language language) {
  if (language == Language::Java) {
    return "The harness is a Jazzer fuzzTestOneInput method. FuzzedDataProvider consumes bytes "
           "from both ends of the input; plain byte-array harnesses read it front to back.";
  }
  return "The harness is a libFuzzer LLVMFuzzerTestOneInput function receiving the raw bytes "
         "of the input file and its size.";
}

std::string output_contract(const std::vector<std::string>& outputs, const std::string& script_language) {
  std::string names;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    if (i) names += i + 1 == outputs.size() ? " and " : ", ";
    names += outputs[i];
  }
  std::string out = "Reply with a " + script_language + " script in a fenced code block that creates ";
  out += outputs.size() == 1 ? "a file named exactly " + names : "files named exactly " + names +
                                                                      ", each a different candidate input";
  out += ". After the script, describe the vulnerability and the function that contains it in a "
         "few sentences.";
  if (script_language == "gen") {
    out += "\nThe script language has one command per line: literal \"<bytes>\", repeat "
           "\"<bytes>\" <n>, range <a> <b>, concat <file> and write <file>. Byte strings accept "
           "C escapes including \\xNN.";
  }
  return out;
}

std::string function_context(const FunctionRecord& f, std::size_t max_lines) {
  std::string header = f.name + " in " + f.file + " (lines " + std::to_string(f.start_line) + "-" +
                       std::to_string(f.end_line) + ")\n";
  if (!f.source) return header + "(source not available)\n";
  return header + fence("", truncate_output(*f.source, max_lines));
}

Conversation build_initial_prompt(const ChallengeTask& task, const FuzzerTarget& target,
                                  const PovStrategyConfig& config, const PromptContext& context,
                                  const std::string& script_language) {
  if (config.delta && !task.commit_diff) {
    throw InvariantError("strategy " + config.strategy_name + " needs the commit diff");
  }
  std::ostringstream u;
  if (config.delta) {
    u << "The following commit introduces a vulnerability into " << task.project_name
      << ". Write an input for the fuzzer harness that triggers it.\n\n";
    u << "Commit diff:\n" << fence("diff", *task.commit_diff) << "\n";
  } else {
    u << task.project_name << " contains a vulnerability reachable from the fuzzer harness "
      << target.harness_name << ". Write an input that triggers it.\n\n";
  }
  u << "Fuzzer harness " << target.harness_name << ":\n" << fence("", context.harness_source) << "\n";
  if (config.inject_modified_functions && !context.modified_functions.empty()) {
    u << "Full source of the functions the commit modifies:\n";
    for (const auto& f : context.modified_functions) u << function_context(f) << "\n";
  }
  if (!context.ranked_functions.empty()) {
    u << "Reachable functions ranked by how likely they are to be vulnerable:\n";
    std::size_t shown = 0;
    for (const auto& [f, score] : context.ranked_functions) {
      if (++shown > 10) break;
      u << "- " << f.name << " (" << f.file << ":" << f.start_line << ") score " << score << "\n";
    }
    u << "\n";
  }
  if (context.call_path) {
    u << "Craft the input so that execution follows this call path:\n" << *context.call_path << "\n\n";
  }
  if (context.sarif_hint) u << "A static analysis report points here:\n" << *context.sarif_hint << "\n\n";
  if (context.focus) {
    u << "Concentrate on " << context.focus->id << " (" << context.focus->name << ") weaknesses.\n\n";
  }
  u << sanitizer_guidance(target.sanitizer) << "\n\n";
  u << language_guidance(task.language) << "\n\n";
  u << output_contract(expected_outputs(config), script_language) << "\n";
  Conversation c;
  c.system_prompt = kPovSystemPrompt;
  c.add_user(u.str());
  return c;
}

GeneratorScript extract_generator_script(const std::string& response, const PovStrategyConfig& config) {
  auto block = first_fenced_block(response);
  if (!block || trim(*block).empty()) throw NoCodeBlock("the reply contains no fenced code block");
  return {*block, expected_outputs(config)};
}

GeneratorRun run_generator(const GeneratorScript& script, const fs::path& workdir,
                           ScriptExecutor& executor, Duration wall_cap) {
  if (!fs::is_directory(workdir) || !fs::is_empty(workdir)) {
    throw InvariantError("generator workdir must be an empty directory: " + workdir.string());
  }
  ExecResult r = executor.execute(script.source_text, workdir, wall_cap);
  if (r.timed_out) throw ExecutorFailure("the script exceeded its time limit\n" + r.diagnostics);
  if (r.exit_code != 0) {
    throw ExecutorFailure("the script exited with status " + std::to_string(r.exit_code) + "\n" +
                          truncate_output(r.diagnostics, 50));
  }
  GeneratorRun run;
  for (const auto& name : script.expected_outputs) {
    fs::path p = workdir / name;
    if (fs::is_regular_file(p)) {
      run.blobs.emplace_back(name, to_bytes(read_file(p)));
    } else {
      run.missing.push_back(name);
    }
  }
  if (run.blobs.empty()) throw MissingOutputs(run.missing);
  return run;
}

std::string build_feedback(const std::string& fuzzer_output,
                           const std::optional<CoverageSummary>& coverage) {
  std::ostringstream f;
  f << "Fuzzer output:\n" << fence("", truncate_output(fuzzer_output, 200));
  f << "The input did not trigger the vulnerability. Study the output and try again. Consider:\n"
       "1. other input formats and field values\n"
       "2. edge cases the parser may not expect\n"
       "3. the functions the commit changed\n"
       "4. boundary conditions on lengths and offsets\n"
       "5. working through the harness step by step before writing the script\n";
  if (coverage) {
    f << "\nCoverage of the last input:\n";
    f << "Executed functions:";
    for (const auto& fn : coverage->executed_functions) f << " " << fn;
    f << "\n";
    for (const auto& b : coverage->branch_points) {
      f << "Branch at " << b.file << ":" << b.line << " " << (b.taken ? "taken" : "not taken") << "\n";
      int n = b.context_first_line;
      for (const auto& line : b.context) f << "  " << n++ << " | " << line << "\n";
    }
  }
  return f.str();
}

// ---------------------------------------------------------------------------
// The iteration loop

namespace {

struct AttemptOutcome {
  bool crashed = false;
  std::optional<PovSubmission> pov;
  std::optional<Decision> decision;
  std::string feedback;
};

AttemptOutcome evaluate_reply(const ChallengeTask& task, const FuzzerTarget& target,
                              const PovStrategyConfig& config, const PovServices& s,
                              const std::string& reply, PovRunResult& result) {
  AttemptOutcome out;
  GeneratorRun run;
  try {
    auto script = extract_generator_script(reply, config);
    auto dir = s.workdirs->create(config.strategy_name + "-" + target.harness_name);
    run = run_generator(script, dir, *s.executor);
  } catch (const NoCodeBlock&) {
    out.feedback = build_feedback(
        "No script was found in your reply. Put the script in a fenced code block.", std::nullopt);
    return out;
  } catch (const ExecutorFailure& e) {
    out.feedback = build_feedback(std::string("The script failed to run:\n") + e.what(), std::nullopt);
    return out;
  } catch (const MissingOutputs& e) {
    out.feedback = build_feedback(std::string("The script ran but ") + e.what(), std::nullopt);
    return out;
  }

  std::string outputs;
  std::optional<CoverageSummary> coverage;
  for (const auto& [name, blob] : run.blobs) {
    HarnessOutcome h;
    try {
      h = s.runner->run(target, blob);
    } catch (const InfraError& e) {
      result.notes.push_back(std::string("harness: ") + e.what());
      outputs += name + ": the harness could not be run\n";
      continue;
    }
    if (h.crashed) {
      // Replay before submitting so a flaky crash never reaches the ledger.
      HarnessOutcome replay = s.runner->run(target, blob);
      if (!replay.crashed) {
        result.notes.push_back(name + ": crash did not reproduce");
        outputs += name + ": crashed once but did not reproduce\n";
        continue;
      }
      PovSubmission pov;
      pov.pov_id = s.ids->next("pov");
      pov.task_id = task.task_id;
      pov.target = target;
      pov.input_blob = blob;
      pov.crash_report = replay.text;
      pov.signature = parse_crash_report(replay.text, target.sanitizer, s.project_markers);
      pov.originating_strategy = config.strategy_name;
      pov.submitted_at = s.clock->now();
      out.crashed = true;
      if (s.submissions) {
        out.decision = s.submissions->submit_pov(pov);
        if (out.decision->accepted()) pov.status = SubmissionStatus::Passed;
      }
      out.pov = std::move(pov);
      return out;
    }
    if (s.corpus) s.corpus->deposit(target, blob);
    if (run.blobs.size() > 1) outputs += "=== " + name + " ===\n";
    outputs += h.text;
    if (!outputs.empty() && outputs.back() != '\n') outputs += '\n';
    if (s.coverage && !coverage) coverage = s.coverage->trace(target, blob);
  }
  for (const auto& m : run.missing) outputs += m + " was not created\n";
  out.feedback = build_feedback(outputs, coverage);
  return out;
}

void require_services(const PovServices& s) {
  if (!s.router || !s.runner || !s.executor || !s.clock || !s.ids || !s.workdirs) {
    throw InvariantError("POV strategy services are incomplete");
  }
}

bool stop_requested(const PovServices& s, Timestamp deadline, PovRunResult& result) {
  if (s.cancelled && s.cancelled()) {
    result.notes.push_back("cancelled");
    return true;
  }
  if (s.clock->now() >= deadline) {
    result.timed_out = true;
    return true;
  }
  return false;
}

}  // namespace

PovRunResult run_pov_strategy(const ChallengeTask& task, const FuzzerTarget& target,
                              const PovStrategyConfig& config, const PovServices& services,
                              const PromptContext& context) {
  validate(config);
  require_services(services);
  PovRunResult result;
  const Timestamp deadline = services.clock->now() + config.timeout;
  const std::string lang = services.executor->language();
  std::size_t focus_index = 0;
  auto next_focus = [&]() -> std::optional<CweCategory> {
    if (config.cwe_catalog.empty()) return std::nullopt;
    return config.cwe_catalog[focus_index++ % config.cwe_catalog.size()];
  };

  for (const auto& model : services.router->priority().names) {
    PromptContext ctx = context;
    ctx.focus = next_focus();
    Conversation conv = build_initial_prompt(task, target, config, ctx, lang);
    for (int it = 0; it < config.max_iterations; ++it) {
      if (stop_requested(services, deadline, result)) return result;
      RouteResult reply;
      try {
        reply = services.router->route_from(conv, model);
      } catch (const AllProvidersExhausted& e) {
        ++result.llm_calls;
        result.notes.push_back(e.what());
        return result;
      }
      ++result.llm_calls;
      ++result.iterations;
      conv.add_assistant(reply.text);
      auto attempt = evaluate_reply(task, target, config, services, reply.text, result);
      if (attempt.crashed) {
        result.pov = std::move(attempt.pov);
        result.decision = std::move(attempt.decision);
        result.conversation = std::move(conv);
        return result;
      }
      std::string feedback = attempt.feedback;
      if (auto f = next_focus()) feedback += "\nNext, think about " + f->id + " (" + f->name + ").\n";
      conv.add_user(feedback);
    }
  }
  return result;
}

// ---------------------------------------------------------------------------
// Full-scan ranking

std::map<std::string, int> parse_function_scores(const std::string& reply) {
  std::string body = first_fenced_block(reply).value_or(reply);
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) {
    // Tolerate prose around a bare JSON array.
    auto a = reply.find('[');
    auto b = reply.rfind(']');
    if (a == std::string::npos || b == std::string::npos || b < a) {
      throw ParseError("no function scores in reply");
    }
    doc = json::parse(reply.substr(a, b - a + 1), nullptr, false);
    if (doc.is_discarded()) throw ParseError("no function scores in reply");
  }
  if (doc.is_object() && doc.contains("functions")) doc = doc["functions"];
  if (!doc.is_array()) throw ParseError("function scores must be an array");
  std::map<std::string, int> out;
  for (const auto& e : doc) {
    if (!e.is_object() || !e.contains("name") || !e.contains("score")) continue;
    if (!e["name"].is_string() || !e["score"].is_number()) continue;
    int score = static_cast<int>(e["score"].get<double>());
    score = std::clamp(score, 1, 10);
    auto [it, inserted] = out.emplace(e["name"].get<std::string>(), score);
    if (!inserted) it->second = std::max(it->second, score);
  }
  return out;
}

namespace {

const char* kRankSystemPrompt =
    "You audit source code for security vulnerabilities and rate functions by how likely they "
    "are to contain one.";

const char* kScoreBands =
    " Use 10 for a certain problem, 7 to 9 for strong indicators, 2 to 6 for weak or indirect "
    "hints and 1 when nothing points to a problem.";

std::string rubric_c() {
  return std::string("Score each function from 1 to 10 for the likelihood of a memory-safety flaw: "
                     "off-by-one mistakes, integer overflow feeding sizes or indices, reads or writes "
                     "past buffer bounds, and object lifetimes across frees.") +
         kScoreBands;
}

std::string rubric_java_logic() {
  return std::string("Score each function from 1 to 10 for evidence of deliberately harmful logic: "
                     "hidden backdoors, command injection, data exfiltration, privilege escalation "
                     "or kill switches.") +
         kScoreBands;
}

std::string rubric_java_deser() {
  return std::string("Score each function from 1 to 10 for unsafe deserialization: untrusted data "
                     "reaching ObjectInputStream, XMLDecoder, SnakeYAML or similar APIs without a "
                     "class filter or other validation.") +
         kScoreBands;
}

std::optional<std::map<std::string, int>> score_with(ProviderHandle& evaluator,
                                                     const std::vector<FunctionRecord>& fns,
                                                     const std::string& rubric) {
  std::ostringstream q;
  q << rubric << "\n\nFunctions:\n";
  for (const auto& f : fns) {
    q << "- " << f.name << " (" << f.file << ":" << f.start_line << "-" << f.end_line << ")\n";
  }
  q << "\nAnswer with a JSON array of {\"name\": ..., \"score\": ..., \"reason\": ...} objects.";
  Conversation c;
  c.system_prompt = kRankSystemPrompt;
  c.add_user(q.str());
  try {
    auto r = evaluator.complete(c);
    if (!r.ok()) return std::nullopt;
    return parse_function_scores(r.text());
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::vector<std::pair<FunctionRecord, int>> rank_reachable_functions(const CallGraph& graph,
                                                                     const std::string& harness,
                                                                     Language language,
                                                                     ProviderHandle& evaluator) {
  std::vector<std::size_t> idx;
  try {
    idx = reachable_indices(graph, harness);
  } catch (const UnknownHarness&) {
    return {};
  }
  std::vector<FunctionRecord> fns;
  for (auto i : idx) fns.push_back(graph.functions()[i]);
  return rank_functions(fns, language, evaluator);
}

std::vector<std::pair<FunctionRecord, int>> rank_functions(const std::vector<FunctionRecord>& fns,
                                                           Language language,
                                                           ProviderHandle& evaluator) {
  if (fns.empty()) return {};
  std::vector<std::string> rubrics =
      language == Language::Java ? std::vector<std::string>{rubric_java_logic(), rubric_java_deser()}
                                 : std::vector<std::string>{rubric_c()};
  std::map<std::string, int> scores;
  bool any = false;
  for (const auto& rubric : rubrics) {
    auto s = score_with(evaluator, fns, rubric);
    if (!s) continue;
    any = true;
    for (const auto& [name, v] : *s) scores[name] = std::max(scores[name], v);
  }
  if (!any) return {};
  std::vector<std::pair<FunctionRecord, int>> out;
  for (const auto& f : fns) {
    auto it = scores.find(f.name);
    if (it != scores.end()) out.emplace_back(f, it->second);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return out;
}

// ---------------------------------------------------------------------------
// Call-path rounds

PovRunResult call_path_prompt_rounds(const ChallengeTask& task, const FuzzerTarget& target,
                                     const std::vector<FunctionRecord>& modified,
                                     const PovStrategyConfig& config, const PovServices& services,
                                     const PromptContext& context) {
  validate(config);
  require_services(services);
  PovRunResult result;
  const Timestamp deadline = services.clock->now() + config.timeout;
  const std::string lang = services.executor->language();

  std::vector<CallPath> paths;
  if (services.graph) {
    auto limits = PathQueryLimits::for_language(task.language);
    QueryBudget budget;
    budget.clock = services.clock;
    for (const auto& f : modified) {
      if (paths.size() >= limits.max_paths) break;
      auto r = call_paths(*services.graph, target.harness_name, f, limits, budget);
      for (auto& p : r.paths) {
        if (paths.size() >= limits.max_paths) break;
        paths.push_back(std::move(p));
      }
    }
  }

  auto attempt = [&](const PromptContext& ctx) -> bool {
    if (stop_requested(services, deadline, result)) return true;
    Conversation conv = build_initial_prompt(task, target, config, ctx, lang);
    RouteResult reply;
    try {
      reply = services.router->route(conv);
    } catch (const AllProvidersExhausted& e) {
      ++result.llm_calls;
      result.notes.push_back(e.what());
      return true;
    }
    ++result.llm_calls;
    ++result.iterations;
    conv.add_assistant(reply.text);
    auto out = evaluate_reply(task, target, config, services, reply.text, result);
    if (!out.crashed) return false;
    result.pov = std::move(out.pov);
    result.decision = std::move(out.decision);
    result.conversation = std::move(conv);
    return true;
  };

  for (const auto& p : paths) {
    PromptContext ctx = context;
    ctx.call_path = render_call_path(p);
    if (attempt(ctx)) return result;
  }
  PromptContext agg = context;
  if (paths.empty()) {
    agg.call_path = "No call path from the harness to the modified functions was found; reason "
                    "about how the harness input reaches the changed code.";
  } else {
    std::string all;
    for (std::size_t i = 0; i < paths.size(); ++i) {
      all += std::to_string(i + 1) + ". " + render_call_path(paths[i]) + "\n";
    }
    agg.call_path = "None of these paths led to a crash when tried one at a time. Consider them "
                    "together:\n" + all;
  }
  attempt(agg);
  return result;
}

json to_json_doc(const PovRunResult& r) {
  json doc{{"llm_calls", r.llm_calls},
           {"iterations", r.iterations},
           {"timed_out", r.timed_out},
           {"notes", r.notes}};
  doc["pov"] = r.pov ? serialize(*r.pov) : json(nullptr);
  doc["decision"] = r.decision ? to_json_doc(*r.decision) : json(nullptr);
  return doc;
}

}  // namespace crs
