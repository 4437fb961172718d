// SPDX-License-Identifier: Apache-2.0
#pragma once

// Crash report grammars and crash signatures.
//
// Two report grammars are understood:
//
//   AsanLike (Address, Memory, UndefinedBehavior):
//     "    #<n> 0x<pc> in <symbol> <path>:<line>[:<col>]"
//   JazzerLike (Jazzer):
//     "\tat <qualified.method>(<File>.java:<line>)"
//
// A signature is taken from the topmost frame that belongs to the project
// (see parse_crash_report); otherwise a digest of the normalized report is used.

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "crs/domain.hpp"

namespace crs {

enum class ReportGrammar { AsanLike, JazzerLike };

ReportGrammar grammar_for(Sanitizer sanitizer);

struct StackFrame {
  int ordinal = 0;
  std::string symbol;
  std::string file;  // empty when the frame carries no source position
  int line = 0;      // 0 when unknown
  int column = 0;
};

std::vector<StackFrame> parse_frames(std::string_view report, ReportGrammar grammar);

// Frame selection: a frame qualifies when it has file and line and its path
// (or, for Java, its qualified symbol) starts with one of `project_root_markers`.
// Absolute markers ("/src/proj/") are stripped from the reported file; relative
// markers ("src/") are kept. With no markers, the first non-runtime frame wins.
CrashSignature parse_crash_report(std::string_view report, Sanitizer sanitizer,
                                  const std::vector<std::string>& project_root_markers);

// Digest over the first 20 lines after masking hex addresses, process ids and
// timestamps, combined with the sanitizer name. 16 hex characters.
CrashSignature heuristic_signature(std::string_view report, Sanitizer sanitizer);

std::string normalize_report(std::string_view report, std::size_t max_lines = 20);

// Renders a report in the grammar of `sanitizer`, for simulated targets.
struct CrashReportSpec {
  Sanitizer sanitizer = Sanitizer::Address;
  std::string crash_type;  // "heap-buffer-overflow", "java.io.InvalidClassException", ...
  std::string path_prefix;  // "/src/proj/" for native targets, "" for Java
  std::vector<StackFrame> frames;  // frames[0] is the crash site
  int pid = 1;
};
std::string render_crash_report(const CrashReportSpec& spec);

}  // namespace crs
