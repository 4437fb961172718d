// SPDX-License-Identifier: Apache-2.0
#pragma once

// Queries over precomputed call graphs: function metadata, reachability from a
// harness entrypoint, and capped breadth-first call-path enumeration.

#include <optional>
#include <string>
#include <vector>

#include "crs/domain.hpp"

namespace crs {

struct PathQueryLimits {
  std::size_t max_paths = 20;
  std::size_t max_depth = 50;  // counted in nodes

  static PathQueryLimits for_language(Language language);
};

void validate(const PathQueryLimits& limits);

class UnknownHarness : public Error {
 public:
  using Error::Error;
};

// Graph document:
//   {"functions": [{"name","file","start_line","end_line","source"?, "parameters"?}...],
//    "edges": [[caller, callee]...],
//    "entrypoints": {"<harness>": index | null}}
// Schema errors name the offending field ("functions[2].start_line: ...").
CallGraph load_graph(const json& doc);
CallGraph load_graph_text(std::string_view text);
CallGraph load_graph_file(const std::string& path);

// Records named `name`; with a hint, only those whose file ends with it.
std::vector<FunctionRecord> function_metadata(const CallGraph& graph, const std::string& name,
                                              const std::optional<std::string>& file_hint = {});

// Indices reachable from the harness entrypoint, ascending. Throws UnknownHarness
// for undeclared or unresolved harnesses.
std::vector<std::size_t> reachable_indices(const CallGraph& graph, const std::string& harness);
std::vector<FunctionRecord> reachable(const CallGraph& graph, const std::string& harness);

// Wall-clock and work budget of one query; exceeding either yields no paths and
// the timed_out flag.
struct QueryBudget {
  const Clock* clock = nullptr;
  Duration limit = minutes(10);
  std::size_t max_expansions = 2'000'000;  // dequeued plus queued paths
};

struct PathQueryResult {
  std::vector<CallPath> paths;
  bool warning = false;  // unknown harness or target
  bool timed_out = false;
  std::string message;
};

// Paths are simple (no node repeats), intermediate nodes differ from entry and
// target, successors are explored in ascending index order, and results come
// out in non-decreasing length. target == entry yields the single path [entry].
PathQueryResult call_paths(const CallGraph& graph, const std::string& harness,
                           const FunctionRecord& target, const PathQueryLimits& limits,
                           const QueryBudget& budget = {});

// Same enumeration over raw indices.
std::vector<std::vector<std::size_t>> enumerate_paths(const CallGraph& graph, std::size_t entry,
                                                      std::size_t target,
                                                      const PathQueryLimits& limits,
                                                      const QueryBudget& budget,
                                                      bool* timed_out = nullptr);

struct PathQuery {
  std::string harness;
  FunctionRecord target;
  std::optional<PathQueryLimits> limits;
};

constexpr std::size_t kDefaultBatchSize = 1000;

// Runs queries against one graph snapshot in chunks of `batch_size`.
std::vector<PathQueryResult> call_paths_batch(const CallGraph& graph,
                                              const std::vector<PathQuery>& queries,
                                              const PathQueryLimits& default_limits,
                                              std::size_t batch_size = kDefaultBatchSize,
                                              const QueryBudget& budget = {});

json to_json_doc(const PathQueryResult& r);

// Graph functions whose span overlaps a line the commit diff added or changed,
// in graph order. The graph describes the post-commit tree.
std::vector<FunctionRecord> modified_functions(const CallGraph& graph, std::string_view diff_text);

}  // namespace crs
