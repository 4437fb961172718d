// SPDX-License-Identifier: Apache-2.0
#include "crs/sarif.hpp"

#include <algorithm>
#include <regex>
#include <set>
#include <sstream>

namespace crs {

namespace {

std::optional<std::string> cwe_from(const std::string& s) {
  static const std::regex re(R"((?:^|[^A-Za-z0-9])cwe[-_/]?0*([0-9]+))", std::regex::icase);
  std::smatch m;
  if (std::regex_search(s, m, re)) return "CWE-" + m[1].str();
  return std::nullopt;
}

void add_cwe(std::vector<std::string>& out, const std::optional<std::string>& c) {
  if (c && std::find(out.begin(), out.end(), *c) == out.end()) out.push_back(*c);
}

int line_of(const json& region, const char* key, const std::string& where) {
  if (!region.contains(key)) return 0;
  if (!region[key].is_number_integer()) throw ParseError(where + "." + key + ": expected integer");
  return region[key].get<int>();
}

SarifRecord parse_result(const json& run, const json& result, const std::string& where,
                         const std::string& task_id, const std::string& sarif_id) {
  if (!result.is_object()) throw ParseError(where + ": expected object");
  SarifRecord r;
  r.task_id = task_id;
  r.sarif_id = sarif_id;
  if (result.contains("message") && result["message"].is_object()) {
    r.description = result["message"].value("text", std::string{});
  }
  if (result.contains("level") && result["level"].is_string()) r.severity = result["level"].get<std::string>();
  std::string rule_id = result.value("ruleId", std::string{});
  add_cwe(r.cwe_ids, cwe_from(rule_id));
  // Rule metadata: tags such as "external/cwe/cwe-787".
  if (run.contains("tool") && run["tool"].contains("driver") && run["tool"]["driver"].contains("rules")) {
    for (const auto& rule : run["tool"]["driver"]["rules"]) {
      if (!rule.is_object() || rule.value("id", std::string{}) != rule_id) continue;
      if (rule.contains("properties") && rule["properties"].contains("tags")) {
        for (const auto& t : rule["properties"]["tags"]) {
          if (t.is_string()) add_cwe(r.cwe_ids, cwe_from(t.get<std::string>()));
        }
      }
      if (r.description.empty() && rule.contains("shortDescription")) {
        r.description = rule["shortDescription"].value("text", std::string{});
      }
    }
  }
  if (result.contains("locations")) {
    const auto& locs = result["locations"];
    if (!locs.is_array()) throw ParseError(where + ".locations: expected array");
    for (std::size_t i = 0; i < locs.size(); ++i) {
      std::string lw = where + ".locations[" + std::to_string(i) + "]";
      const auto& loc = locs[i];
      std::string file;
      if (loc.contains("physicalLocation")) {
        const auto& pl = loc["physicalLocation"];
        if (!pl.contains("artifactLocation") || !pl["artifactLocation"].contains("uri")) {
          throw ParseError(lw + ".physicalLocation: missing artifactLocation.uri");
        }
        file = pl["artifactLocation"]["uri"].get<std::string>();
        if (starts_with(file, "file://")) file = file.substr(7);
        SourceLocation sl;
        sl.file = file;
        if (pl.contains("region")) {
          sl.start_line = line_of(pl["region"], "startLine", lw + ".region");
          sl.end_line = line_of(pl["region"], "endLine", lw + ".region");
        }
        if (sl.end_line < sl.start_line) sl.end_line = sl.start_line;
        r.locations.push_back(sl);
      }
      if (loc.contains("logicalLocations")) {
        for (const auto& ll : loc["logicalLocations"]) {
          std::string kind = ll.value("kind", std::string("function"));
          if (kind != "function" && kind != "member" && kind != "method") continue;
          std::string name = ll.value("name", ll.value("fullyQualifiedName", std::string{}));
          if (!name.empty()) r.affected_functions.push_back({name, file});
        }
      }
    }
  }
  if (result.contains("codeFlows")) {
    std::vector<std::string> trace;
    for (const auto& cf : result["codeFlows"]) {
      if (!cf.contains("threadFlows")) continue;
      for (const auto& tf : cf["threadFlows"]) {
        if (!tf.contains("locations")) continue;
        for (const auto& l : tf["locations"]) {
          if (!l.contains("location") || !l["location"].contains("physicalLocation")) continue;
          const auto& pl = l["location"]["physicalLocation"];
          std::string f = pl.contains("artifactLocation") ? pl["artifactLocation"].value("uri", std::string{}) : "";
          int line = pl.contains("region") ? pl["region"].value("startLine", 0) : 0;
          trace.push_back(f + ":" + std::to_string(line));
        }
      }
    }
    if (!trace.empty()) r.stack_trace = trace;
  }
  return r;
}

}  // namespace

std::vector<SarifRecord> parse_sarif_all(const json& doc, const std::string& task_id,
                                         const std::string& sarif_id) {
  if (!doc.is_object()) throw ParseError("sarif: expected object");
  if (!doc.contains("runs") || !doc["runs"].is_array()) throw ParseError("runs: missing or not an array");
  if (doc["runs"].empty()) throw ParseError("runs: empty");
  std::vector<std::pair<std::string, std::pair<const json*, const json*>>> found;
  for (std::size_t i = 0; i < doc["runs"].size(); ++i) {
    const auto& run = doc["runs"][i];
    std::string rw = "runs[" + std::to_string(i) + "]";
    if (!run.is_object()) throw ParseError(rw + ": expected object");
    if (!run.contains("results")) continue;
    if (!run["results"].is_array()) throw ParseError(rw + ".results: expected array");
    for (std::size_t j = 0; j < run["results"].size(); ++j) {
      found.push_back({rw + ".results[" + std::to_string(j) + "]", {&run, &run["results"][j]}});
    }
  }
  if (found.empty()) throw ParseError("sarif: no results");
  std::vector<SarifRecord> out;
  try {
    for (std::size_t k = 0; k < found.size(); ++k) {
      std::string id = found.size() == 1 ? sarif_id : sarif_id + "-" + std::to_string(k + 1);
      out.push_back(parse_result(*found[k].second.first, *found[k].second.second, found[k].first, task_id, id));
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string("sarif: ") + e.what());
  }
  return out;
}

SarifRecord parse_sarif(const json& doc, const std::string& task_id, const std::string& sarif_id) {
  auto all = parse_sarif_all(doc, task_id, sarif_id);
  all.front().sarif_id = sarif_id;
  return all.front();
}

std::string to_string(CheckKind k) {
  return k == CheckKind::FalsePositiveCheck ? "FalsePositiveCheck" : "TruePositiveCheck";
}

std::string to_string(ConsensusVerdict v) {
  switch (v) {
    case ConsensusVerdict::TruePositive:
      return "TruePositive";
    case ConsensusVerdict::FalsePositive:
      return "FalsePositive";
    case ConsensusVerdict::Inconclusive:
      return "Inconclusive";
  }
  return "Inconclusive";
}

ConsensusVerdict consensus_from_votes(const std::vector<Vote>& votes) {
  int tp_yes = 0, fp_yes = 0;
  for (const auto& v : votes) {
    if (!v.answer.value_or(false)) continue;
    (v.check == CheckKind::TruePositiveCheck ? tp_yes : fp_yes)++;
  }
  if (tp_yes >= 2 && fp_yes < 2) return ConsensusVerdict::TruePositive;
  if (fp_yes >= 2 && tp_yes < 2) return ConsensusVerdict::FalsePositive;
  return ConsensusVerdict::Inconclusive;
}

std::string source_excerpts(const SarifRecord& record, const SourceReader& sources) {
  std::string out;
  std::size_t budget = 200;
  for (const auto& loc : record.locations) {
    if (budget == 0) break;
    auto text = sources ? sources(loc.file) : std::nullopt;
    if (!text) {
      out += loc.file + ": source unavailable\n";
      continue;
    }
    auto lines = split_lines(*text);
    if (lines.empty()) continue;
    int first = std::max(1, loc.start_line - 20);
    int last = std::min(static_cast<int>(lines.size()), std::max(loc.start_line, loc.end_line) + 20);
    out += loc.file + ":\n";
    for (int i = first; i <= last && budget > 0; ++i, --budget) {
      out += std::to_string(i) + " | " + lines[i - 1] + "\n";
    }
  }
  return out;
}

bool sarif_reachable(const SarifRecord& record, const CallGraph& graph,
                     const std::vector<std::string>& harnesses) {
  std::set<std::size_t> reach;
  for (const auto& h : harnesses) {
    try {
      for (auto i : reachable_indices(graph, h)) reach.insert(i);
    } catch (const UnknownHarness&) {
    }
  }
  auto file_match = [](const std::string& a, const std::string& b) {
    return a.empty() || b.empty() || a == b || ends_with(a, "/" + b) || ends_with(b, "/" + a);
  };
  for (auto i : reach) {
    const auto& f = graph.functions()[i];
    for (const auto& af : record.affected_functions) {
      if (af.function_name == f.name && file_match(af.file, f.file)) return true;
    }
    for (const auto& loc : record.locations) {
      if (!loc.file.empty() && file_match(loc.file, f.file) && loc.start_line >= f.start_line &&
          loc.start_line <= f.end_line) {
        return true;
      }
    }
  }
  return false;
}

namespace {

const char* kAssessSystem =
    "You review static analysis findings against source code. Start your answer with yes or no.";

std::string describe(const SarifRecord& r, const SourceReader& sources) {
  std::ostringstream q;
  q << "Finding";
  if (!r.cwe_ids.empty()) {
    q << " (";
    for (std::size_t i = 0; i < r.cwe_ids.size(); ++i) q << (i ? ", " : "") << r.cwe_ids[i];
    q << ")";
  }
  q << ": " << r.description << "\n";
  for (const auto& l : r.locations) q << "at " << l.file << ":" << l.start_line << "-" << l.end_line << "\n";
  for (const auto& f : r.affected_functions) q << "in function " << f.function_name << "\n";
  q << "\nSource:\n```\n" << source_excerpts(r, sources) << "```\n";
  return q.str();
}

}  // namespace

ConsensusResult assess(const SarifRecord& record, const CallGraph* graph,
                       const std::vector<std::string>& harnesses,
                       const std::vector<ProviderHandle*>& evaluators, const SourceReader& sources) {
  ConsensusResult res;
  if (graph) res.reachable = sarif_reachable(record, *graph, harnesses);
  std::string finding = describe(record, sources);
  std::string reach = res.reachable ? "The flagged code is reachable from a fuzzer harness.\n"
                                    : "No fuzzer harness reaches the flagged code.\n";
  for (auto* e : evaluators) {
    if (!e) continue;
    auto fp = ask_yes_no(*e, kAssessSystem,
                         finding + reach + "\nIs this finding likely a false positive?");
    res.votes.push_back({e->name(), fp, CheckKind::FalsePositiveCheck});
    auto tp = ask_yes_no(*e, kAssessSystem,
                         finding + reach +
                             "\nIs this finding likely a true positive, a real vulnerability that "
                             "input can trigger?");
    res.votes.push_back({e->name(), tp, CheckKind::TruePositiveCheck});
  }
  res.verdict = consensus_from_votes(res.votes);
  return res;
}

std::vector<SarifRecord> on_pov_accepted(const PovSubmission& pov,
                                         const std::vector<SarifRecord>& pending,
                                         ProviderHandle* matcher) {
  std::vector<SarifRecord> out;
  for (const auto& r : pending) {
    if (match_sarif_to_pov(r, pov, matcher)) {
      SarifRecord c = r;
      c.verdict = SarifVerdict::TruePositive;
      out.push_back(std::move(c));
    }
  }
  return out;
}

std::optional<json> forward_for_guidance(const SarifRecord& record, bool pov_exists) {
  bool eligible = record.verdict == SarifVerdict::Deferred ||
                  (record.verdict == SarifVerdict::TruePositive && !pov_exists);
  if (!eligible) return std::nullopt;
  json functions = json::array();
  for (const auto& f : record.affected_functions) functions.push_back(serialize(f));
  json locations = json::array();
  for (const auto& l : record.locations) locations.push_back(serialize(l));
  return json{{"strategy", "sarif_POV0"},
              {"task_id", record.task_id},
              {"sarif_id", record.sarif_id},
              {"verdict", serialize(record.verdict)},
              {"cwe_ids", record.cwe_ids},
              {"functions", functions},
              {"locations", locations},
              {"description", record.description}};
}

std::string render_sarif_hint(const SarifRecord& record) {
  std::ostringstream h;
  h << record.description << "\n";
  for (const auto& c : record.cwe_ids) h << "Category: " << c << "\n";
  for (const auto& l : record.locations) h << "Location: " << l.file << ":" << l.start_line << "-" << l.end_line << "\n";
  for (const auto& f : record.affected_functions) h << "Function: " << f.function_name << "\n";
  return h.str();
}

// ---------------------------------------------------------------------------

SarifAssessor::SarifAssessor(SubmissionService* submissions, std::vector<ProviderHandle*> evaluators,
                             ProviderHandle* matcher, SourceReader sources)
    : submissions_(submissions),
      evaluators_(std::move(evaluators)),
      matcher_(matcher),
      sources_(std::move(sources)) {}

AssessmentOutcome SarifAssessor::ingest(const SarifRecord& incoming, const CallGraph* graph,
                                        const std::vector<std::string>& harnesses) {
  AssessmentOutcome out;
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = records_.find(incoming.sarif_id);
    if (it != records_.end() && (it->second.verdict == SarifVerdict::TruePositive ||
                                 it->second.verdict == SarifVerdict::FalsePositive)) {
      out.record = it->second;
      out.consensus.verdict = it->second.verdict == SarifVerdict::TruePositive
                                  ? ConsensusVerdict::TruePositive
                                  : ConsensusVerdict::FalsePositive;
      return out;
    }
  }
  out.consensus = assess(incoming, graph, harnesses, evaluators_, sources_);
  out.record = incoming;
  switch (out.consensus.verdict) {
    case ConsensusVerdict::TruePositive:
      out.record.verdict = SarifVerdict::TruePositive;
      break;
    case ConsensusVerdict::FalsePositive:
      out.record.verdict = SarifVerdict::FalsePositive;
      break;
    case ConsensusVerdict::Inconclusive:
      out.record.verdict = SarifVerdict::Deferred;
      break;
  }
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (!records_.count(out.record.sarif_id)) order_.push_back(out.record.sarif_id);
    records_[out.record.sarif_id] = out.record;
  }
  if (submissions_ && out.record.verdict != SarifVerdict::Deferred) {
    out.decision = submissions_->submit_sarif_assessment(out.record);
  }
  bool pov_exists = false;
  if (submissions_) {
    for (const auto& p : submissions_->accepted_povs(out.record.task_id)) {
      if (sarif_location_in_report(out.record, p)) pov_exists = true;
    }
  }
  out.broadcast = forward_for_guidance(out.record, pov_exists);
  return out;
}

std::vector<SarifRecord> SarifAssessor::pov_accepted(const PovSubmission& pov) {
  std::vector<SarifRecord> pending;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (const auto& id : order_) {
      const auto& r = records_.at(id);
      if (r.task_id == pov.task_id && r.verdict == SarifVerdict::Deferred) pending.push_back(r);
    }
  }
  auto confirmed = on_pov_accepted(pov, pending, matcher_);
  for (const auto& c : confirmed) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      records_[c.sarif_id] = c;
    }
    if (submissions_) submissions_->submit_sarif_assessment(c);
  }
  return confirmed;
}

std::vector<SarifRecord> SarifAssessor::records(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<SarifRecord> out;
  for (const auto& id : order_) {
    const auto& r = records_.at(id);
    if (r.task_id == task_id) out.push_back(r);
  }
  return out;
}

std::optional<SarifRecord> SarifAssessor::record(const std::string& sarif_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = records_.find(sarif_id);
  if (it == records_.end()) return std::nullopt;
  return it->second;
}

}  // namespace crs
