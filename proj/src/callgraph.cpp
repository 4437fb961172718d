// SPDX-License-Identifier: Apache-2.0
#include "crs/callgraph.hpp"

#include <algorithm>
#include <deque>

#include "crs/diff.hpp"

namespace crs {

namespace {

std::string field(const std::string& path, const std::string& name) {
  return path.empty() ? name : path + "." + name;
}

const json& require(const json& obj, const std::string& path, const std::string& name) {
  if (!obj.contains(name)) throw ParseError(field(path, name) + ": missing");
  return obj[name];
}

std::string get_string(const json& obj, const std::string& path, const std::string& name) {
  const auto& v = require(obj, path, name);
  if (!v.is_string()) throw ParseError(field(path, name) + ": expected string");
  return v.get<std::string>();
}

std::int64_t get_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) throw ParseError(where + ": expected integer");
  return v.get<std::int64_t>();
}

}  // namespace

PathQueryLimits PathQueryLimits::for_language(Language language) {
  return {20, language == Language::Java ? std::size_t{10} : std::size_t{50}};
}

void validate(const PathQueryLimits& limits) {
  if (limits.max_paths < 1) throw InvariantError("max_paths must be at least 1");
  if (limits.max_depth < 1) throw InvariantError("max_depth must be at least 1");
}

CallGraph load_graph(const json& doc) {
  if (!doc.is_object()) throw ParseError("graph: expected object");
  const auto& fns = require(doc, "", "functions");
  if (!fns.is_array()) throw ParseError("functions: expected array");
  std::vector<FunctionRecord> functions;
  for (std::size_t i = 0; i < fns.size(); ++i) {
    std::string p = "functions[" + std::to_string(i) + "]";
    const auto& f = fns[i];
    if (!f.is_object()) throw ParseError(p + ": expected object");
    FunctionRecord r;
    r.name = get_string(f, p, "name");
    r.file = get_string(f, p, "file");
    auto start = get_int(require(f, p, "start_line"), p + ".start_line");
    auto end = get_int(require(f, p, "end_line"), p + ".end_line");
    if (start < 1) throw ParseError(p + ".start_line: must be positive");
    if (end < start) throw ParseError(p + ".end_line: precedes start_line");
    r.start_line = static_cast<int>(start);
    r.end_line = static_cast<int>(end);
    if (f.contains("source") && !f["source"].is_null()) {
      if (!f["source"].is_string()) throw ParseError(p + ".source: expected string");
      r.source = f["source"].get<std::string>();
    }
    if (f.contains("parameters") && !f["parameters"].is_null()) {
      if (!f["parameters"].is_array()) throw ParseError(p + ".parameters: expected array");
      r.parameters = f["parameters"].get<std::vector<std::string>>();
    }
    functions.push_back(std::move(r));
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  if (doc.contains("edges")) {
    const auto& es = doc["edges"];
    if (!es.is_array()) throw ParseError("edges: expected array");
    for (std::size_t i = 0; i < es.size(); ++i) {
      std::string p = "edges[" + std::to_string(i) + "]";
      if (!es[i].is_array() || es[i].size() != 2) throw ParseError(p + ": expected [caller, callee]");
      auto a = get_int(es[i][0], p + "[0]");
      auto b = get_int(es[i][1], p + "[1]");
      if (a < 0 || b < 0 || static_cast<std::size_t>(a) >= functions.size() ||
          static_cast<std::size_t>(b) >= functions.size()) {
        throw ParseError(p + ": dangling edge [" + std::to_string(a) + ", " + std::to_string(b) +
                         "] with " + std::to_string(functions.size()) + " functions");
      }
      edges.emplace_back(static_cast<std::size_t>(a), static_cast<std::size_t>(b));
    }
  }
  std::map<std::string, std::size_t> entrypoints;
  std::set<std::string> unresolved;
  if (doc.contains("entrypoints")) {
    const auto& eps = doc["entrypoints"];
    if (!eps.is_object()) throw ParseError("entrypoints: expected object");
    for (const auto& [name, v] : eps.items()) {
      std::string p = "entrypoints." + name;
      if (v.is_null()) {
        unresolved.insert(name);
        continue;
      }
      auto idx = get_int(v, p);
      if (idx < 0 || static_cast<std::size_t>(idx) >= functions.size()) {
        throw ParseError(p + ": index " + std::to_string(idx) + " outside " +
                         std::to_string(functions.size()) + " functions");
      }
      entrypoints[name] = static_cast<std::size_t>(idx);
    }
  }
  try {
    return CallGraph(std::move(functions), std::move(edges), std::move(entrypoints),
                     std::move(unresolved));
  } catch (const InvariantError& e) {
    throw ParseError(e.what());
  }
}

CallGraph load_graph_text(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("graph: ") + e.what());
  }
  return load_graph(doc);
}

CallGraph load_graph_file(const std::string& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const std::exception&) {
    throw ParseError("cannot read graph '" + path + "'");
  }
  return load_graph_text(text);
}

std::vector<FunctionRecord> function_metadata(const CallGraph& graph, const std::string& name,
                                              const std::optional<std::string>& file_hint) {
  std::vector<FunctionRecord> out;
  for (const auto& f : graph.functions()) {
    if (f.name != name) continue;
    if (file_hint && !ends_with(f.file, *file_hint)) continue;
    out.push_back(f);
  }
  return out;
}

std::vector<std::size_t> reachable_indices(const CallGraph& graph, const std::string& harness) {
  auto it = graph.entrypoints().find(harness);
  if (it == graph.entrypoints().end()) {
    throw UnknownHarness(graph.unresolved_harnesses().count(harness)
                             ? "harness '" + harness + "' has no resolved entrypoint"
                             : "unknown harness '" + harness + "'");
  }
  std::vector<bool> seen(graph.size(), false);
  std::deque<std::size_t> queue{it->second};
  seen[it->second] = true;
  while (!queue.empty()) {
    auto n = queue.front();
    queue.pop_front();
    for (auto s : graph.successors(n)) {
      if (!seen[s]) {
        seen[s] = true;
        queue.push_back(s);
      }
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < seen.size(); ++i) {
    if (seen[i]) out.push_back(i);
  }
  return out;
}

std::vector<FunctionRecord> reachable(const CallGraph& graph, const std::string& harness) {
  std::vector<FunctionRecord> out;
  for (auto i : reachable_indices(graph, harness)) out.push_back(graph.functions()[i]);
  return out;
}

std::vector<std::vector<std::size_t>> enumerate_paths(const CallGraph& graph, std::size_t entry,
                                                      std::size_t target,
                                                      const PathQueryLimits& limits,
                                                      const QueryBudget& budget,
                                                      bool* timed_out) {
  validate(limits);
  if (timed_out) *timed_out = false;
  std::vector<std::vector<std::size_t>> out;
  if (entry == target) {
    out.push_back({entry});
    return out;
  }
  std::optional<Timestamp> deadline;
  if (budget.clock) deadline = budget.clock->now() + budget.limit;
  std::deque<std::vector<std::size_t>> queue;
  queue.push_back({entry});
  std::size_t expansions = 0;
  while (!queue.empty()) {
    if (++expansions > budget.max_expansions ||
        (deadline && expansions % 1024 == 0 && budget.clock->now() > *deadline)) {
      if (timed_out) *timed_out = true;
      return {};
    }
    auto path = std::move(queue.front());
    queue.pop_front();
    for (auto s : graph.successors(path.back())) {
      if (s == target) {
        if (path.size() + 1 <= limits.max_depth) {
          auto done = path;
          done.push_back(s);
          out.push_back(std::move(done));
          if (out.size() >= limits.max_paths) return out;
        }
        continue;
      }
      if (s == entry) continue;
      if (std::find(path.begin(), path.end(), s) != path.end()) continue;
      // Leave room for the target node.
      if (path.size() + 2 > limits.max_depth) continue;
      // Queued paths count against the budget too, which bounds memory.
      if (++expansions > budget.max_expansions) {
        if (timed_out) *timed_out = true;
        return {};
      }
      auto next = path;
      next.push_back(s);
      queue.push_back(std::move(next));
    }
  }
  return out;
}

PathQueryResult call_paths(const CallGraph& graph, const std::string& harness,
                           const FunctionRecord& target, const PathQueryLimits& limits,
                           const QueryBudget& budget) {
  PathQueryResult r;
  auto ep = graph.entrypoints().find(harness);
  if (ep == graph.entrypoints().end()) {
    r.warning = true;
    r.message = "unknown or unresolved harness '" + harness + "'";
    return r;
  }
  auto t = graph.index_of(target);
  if (!t) {
    r.warning = true;
    r.message = "target '" + target.name + "' is not in the graph";
    return r;
  }
  bool timed_out = false;
  for (auto& idx : enumerate_paths(graph, ep->second, *t, limits, budget, &timed_out)) {
    CallPath p;
    for (auto i : idx) p.functions.push_back(graph.functions()[i]);
    r.paths.push_back(std::move(p));
  }
  if (timed_out) {
    r.timed_out = true;
    r.message = "query exceeded its budget";
  }
  return r;
}

std::vector<PathQueryResult> call_paths_batch(const CallGraph& graph,
                                              const std::vector<PathQuery>& queries,
                                              const PathQueryLimits& default_limits,
                                              std::size_t batch_size, const QueryBudget& budget) {
  if (batch_size == 0) throw InvariantError("batch size must be positive");
  std::vector<PathQueryResult> out;
  out.reserve(queries.size());
  for (std::size_t start = 0; start < queries.size(); start += batch_size) {
    std::size_t end = std::min(queries.size(), start + batch_size);
    for (std::size_t i = start; i < end; ++i) {
      const auto& q = queries[i];
      out.push_back(call_paths(graph, q.harness, q.target, q.limits.value_or(default_limits), budget));
    }
  }
  return out;
}

json to_json_doc(const PathQueryResult& r) {
  json paths = json::array();
  for (const auto& p : r.paths) paths.push_back(json(p));
  json doc{{"paths", paths}, {"warning", r.warning}, {"timed_out", r.timed_out}};
  if (!r.message.empty()) doc["message"] = r.message;
  return doc;
}

std::vector<FunctionRecord> modified_functions(const CallGraph& graph, std::string_view diff_text) {
  auto diff = parse_unified_diff(diff_text);
  std::vector<FunctionRecord> out;
  for (const auto& f : graph.functions()) {
    bool hit = false;
    for (const auto& fd : diff.files) {
      if (fd.deletes()) continue;
      const std::string& p = fd.new_path;
      bool same_file = f.file == p || (ends_with(f.file, p) && f.file[f.file.size() - p.size() - 1] == '/') ||
                       (ends_with(p, f.file) && p[p.size() - f.file.size() - 1] == '/');
      if (!same_file) continue;
      for (const auto& r : changed_new_ranges(fd)) {
        if (r.first <= f.end_line && r.last >= f.start_line) hit = true;
      }
    }
    if (hit) out.push_back(f);
  }
  return out;
}

}  // namespace crs
