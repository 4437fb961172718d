// SPDX-License-Identifier: Apache-2.0
#pragma once

// Unified diffs: parsing, generation (Myers, 3 context lines, a/ b/ prefixes,
// LF endings) and strict application to a directory tree.

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "crs/core.hpp"

namespace crs {

struct HunkLine {
  char op = ' ';  // ' ' context, '-' removed, '+' added
  std::string text;
  bool no_newline = false;  // followed by "\ No newline at end of file"
};

struct Hunk {
  int old_start = 0;
  int old_count = 0;
  int new_start = 0;
  int new_count = 0;
  std::vector<HunkLine> lines;
};

struct FileDiff {
  std::string old_path;  // without the a/ prefix; "/dev/null" for created files
  std::string new_path;  // without the b/ prefix; "/dev/null" for deleted files
  std::vector<Hunk> hunks;

  bool creates() const { return old_path == "/dev/null"; }
  bool deletes() const { return new_path == "/dev/null"; }
  const std::string& path() const { return deletes() ? old_path : new_path; }
};

struct UnifiedDiff {
  std::vector<FileDiff> files;
};

class DiffApplyError : public Error {
 public:
  using Error::Error;
};

// Validates file headers and hunk headers (including that hunk bodies carry the
// line counts the headers announce). Context content is not checked here.
UnifiedDiff parse_unified_diff(std::string_view text);

// One file's diff block; empty when the texts are equal.
std::string diff_file_texts(const std::string& path, std::string_view old_text,
                            std::string_view new_text, int context = 3);

// Diff of two directory trees, files visited in sorted relative-path order.
std::string make_diff(const std::filesystem::path& original_root,
                      const std::filesystem::path& modified_root, int context = 3);

// Applies one file diff to its old content. Throws DiffApplyError on mismatch.
std::string apply_file_diff(std::string_view old_text, const FileDiff& diff);

// Applies every file diff under `root` in place.
void apply_diff(const UnifiedDiff& diff, const std::filesystem::path& root);

// 1-based [first, last] new-file line ranges touched by a file diff's additions
// (pure deletions report the line they collapse onto).
struct LineRange {
  int first = 0;
  int last = 0;
};
std::vector<LineRange> changed_new_ranges(const FileDiff& diff);

// Relative path is plain (no "..", not absolute).
bool is_safe_relative_path(std::string_view path);

std::string read_file(const std::filesystem::path& p);
void write_file(const std::filesystem::path& p, std::string_view content);
void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to);

}  // namespace crs
