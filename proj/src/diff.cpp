// SPDX-License-Identifier: Apache-2.0
#include "crs/diff.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace crs {
namespace fs = std::filesystem;

namespace {

struct Line {
  std::string_view text;
  bool newline = true;
  bool operator==(const Line& o) const { return newline == o.newline && text == o.text; }
};

std::vector<Line> to_lines(std::string_view text) {
  std::vector<Line> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) {
      out.push_back({text.substr(pos), false});
      break;
    }
    out.push_back({text.substr(pos, nl - pos), true});
    pos = nl + 1;
  }
  return out;
}

enum class Op { Equal, Delete, Insert };
struct Edit {
  Op op;
  int old_idx;  // index into old lines (Equal/Delete)
  int new_idx;  // index into new lines (Equal/Insert)
};

// Myers O(ND) shortest edit script.
std::vector<Edit> shortest_edit(const std::vector<Line>& a, const std::vector<Line>& b) {
  const int n = static_cast<int>(a.size());
  const int m = static_cast<int>(b.size());
  const int max = n + m;
  std::vector<Edit> edits;
  if (max == 0) return edits;
  const int offset = max + 1;
  std::vector<int> v(2 * max + 3, 0);
  std::vector<std::vector<int>> trace;
  int final_d = 0;
  bool done = false;
  for (int d = 0; d <= max && !done; ++d) {
    trace.push_back(v);
    for (int k = -d; k <= d; k += 2) {
      int x;
      if (k == -d || (k != d && v[offset + k - 1] < v[offset + k + 1])) {
        x = v[offset + k + 1];
      } else {
        x = v[offset + k - 1] + 1;
      }
      int y = x - k;
      while (x < n && y < m && a[x] == b[y]) {
        ++x;
        ++y;
      }
      v[offset + k] = x;
      if (x >= n && y >= m) {
        final_d = d;
        done = true;
        break;
      }
    }
  }
  int x = n;
  int y = m;
  for (int d = final_d; d >= 0; --d) {
    const auto& vd = trace[d];
    int k = x - y;
    int prev_k;
    if (k == -d || (k != d && vd[offset + k - 1] < vd[offset + k + 1])) {
      prev_k = k + 1;
    } else {
      prev_k = k - 1;
    }
    int prev_x = vd[offset + prev_k];
    int prev_y = prev_x - prev_k;
    while (x > prev_x && y > prev_y) {
      edits.push_back({Op::Equal, x - 1, y - 1});
      --x;
      --y;
    }
    if (d > 0) {
      if (x == prev_x) {
        edits.push_back({Op::Insert, -1, y - 1});
      } else {
        edits.push_back({Op::Delete, x - 1, -1});
      }
    }
    x = prev_x;
    y = prev_y;
  }
  std::reverse(edits.begin(), edits.end());
  return edits;
}

std::string range_text(int start, int count) {
  if (count == 1) return std::to_string(start);
  return std::to_string(start) + "," + std::to_string(count);
}

void emit_line(std::string& out, char op, const Line& line) {
  out += op;
  out.append(line.text);
  out += '\n';
  if (!line.newline) out += "\\ No newline at end of file\n";
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && p == s.data() + s.size() && out >= 0;
}

// "-l,s" or "-l" (count 1).
bool parse_range(std::string_view s, char sign, int& start, int& count) {
  if (s.empty() || s[0] != sign) return false;
  s.remove_prefix(1);
  auto comma = s.find(',');
  if (comma == std::string_view::npos) {
    count = 1;
    return parse_int(s, start);
  }
  return parse_int(s.substr(0, comma), start) && parse_int(s.substr(comma + 1), count);
}

Hunk parse_hunk_header(std::string_view line) {
  // @@ -a,b +c,d @@ optional section text
  Hunk h;
  if (!starts_with(line, "@@ ")) throw ParseError("malformed hunk header: " + std::string(line));
  auto rest = line.substr(3);
  auto end = rest.find(" @@");
  if (end == std::string_view::npos) {
    throw ParseError("malformed hunk header: " + std::string(line));
  }
  auto ranges = rest.substr(0, end);
  auto space = ranges.find(' ');
  if (space == std::string_view::npos ||
      !parse_range(ranges.substr(0, space), '-', h.old_start, h.old_count) ||
      !parse_range(ranges.substr(space + 1), '+', h.new_start, h.new_count)) {
    throw ParseError("malformed hunk header: " + std::string(line));
  }
  return h;
}

std::string strip_path(std::string_view raw, std::string_view prefix) {
  auto tab = raw.find('\t');
  if (tab != std::string_view::npos) raw = raw.substr(0, tab);
  std::string p = trim(raw);
  if (p == "/dev/null") return p;
  if (starts_with(p, prefix)) p = p.substr(prefix.size());
  return p;
}

std::vector<std::string> list_files(const fs::path& root) {
  std::vector<std::string> out;
  if (!fs::exists(root)) return out;
  for (auto it = fs::recursive_directory_iterator(root); it != fs::recursive_directory_iterator();
       ++it) {
    if (it->is_directory() && it->path().filename() == ".git") {
      it.disable_recursion_pending();
      continue;
    }
    if (it->is_regular_file()) out.push_back(fs::relative(it->path(), root).generic_string());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

UnifiedDiff parse_unified_diff(std::string_view text) {
  UnifiedDiff diff;
  auto lines = split_lines(text);
  std::size_t i = 0;
  bool saw_content = false;
  while (i < lines.size()) {
    const auto& line = lines[i];
    if (!trim(line).empty()) saw_content = true;
    if (starts_with(line, "--- ") && i + 1 < lines.size() && starts_with(lines[i + 1], "+++ ")) {
      FileDiff fd;
      fd.old_path = strip_path(std::string_view(line).substr(4), "a/");
      fd.new_path = strip_path(std::string_view(lines[i + 1]).substr(4), "b/");
      if (fd.old_path.empty() || fd.new_path.empty()) throw ParseError("empty path in file header");
      i += 2;
      while (i < lines.size() && starts_with(lines[i], "@@")) {
        Hunk h = parse_hunk_header(lines[i]);
        ++i;
        int old_seen = 0;
        int new_seen = 0;
        while (old_seen < h.old_count || new_seen < h.new_count) {
          if (i >= lines.size()) throw ParseError("hunk body shorter than its header");
          const auto& body = lines[i];
          if (starts_with(body, "\\")) {
            if (h.lines.empty()) throw ParseError("stray no-newline marker");
            h.lines.back().no_newline = true;
            ++i;
            continue;
          }
          char op = body.empty() ? ' ' : body[0];
          if (op != ' ' && op != '-' && op != '+') {
            throw ParseError("hunk body shorter than its header");
          }
          if (op != '+') ++old_seen;
          if (op != '-') ++new_seen;
          if (old_seen > h.old_count || new_seen > h.new_count) {
            throw ParseError("hunk body longer than its header");
          }
          h.lines.push_back({op, body.empty() ? std::string() : body.substr(1), false});
          ++i;
        }
        if (i < lines.size() && starts_with(lines[i], "\\")) {
          if (h.lines.empty()) throw ParseError("stray no-newline marker");
          h.lines.back().no_newline = true;
          ++i;
        }
        fd.hunks.push_back(std::move(h));
      }
      diff.files.push_back(std::move(fd));
      continue;
    }
    if (starts_with(line, "@@")) throw ParseError("hunk without file header");
    ++i;
  }
  if (diff.files.empty() && saw_content) throw ParseError("no file headers found in diff");
  return diff;
}

std::string diff_file_texts(const std::string& path, std::string_view old_text,
                            std::string_view new_text, int context) {
  if (old_text == new_text) return {};
  auto a = to_lines(old_text);
  auto b = to_lines(new_text);
  auto edits = shortest_edit(a, b);

  std::string out = "diff --git a/" + path + " b/" + path + "\n";
  out += "--- a/" + path + "\n+++ b/" + path + "\n";

  std::vector<std::size_t> changes;
  for (std::size_t i = 0; i < edits.size(); ++i) {
    if (edits[i].op != Op::Equal) changes.push_back(i);
  }
  std::size_t ci = 0;
  const auto ctx = static_cast<std::size_t>(context);
  while (ci < changes.size()) {
    std::size_t first = changes[ci];
    std::size_t last = first;
    while (ci + 1 < changes.size() && changes[ci + 1] - last <= 2 * ctx + 1) {
      last = changes[++ci];
    }
    ++ci;
    std::size_t begin = first >= ctx ? first - ctx : 0;
    std::size_t end = std::min(edits.size(), last + ctx + 1);

    int old_before = 0;
    int new_before = 0;
    for (std::size_t j = 0; j < begin; ++j) {
      if (edits[j].op != Op::Insert) ++old_before;
      if (edits[j].op != Op::Delete) ++new_before;
    }
    int old_count = 0;
    int new_count = 0;
    for (std::size_t j = begin; j < end; ++j) {
      if (edits[j].op != Op::Insert) ++old_count;
      if (edits[j].op != Op::Delete) ++new_count;
    }
    int old_start = old_count > 0 ? old_before + 1 : old_before;
    int new_start = new_count > 0 ? new_before + 1 : new_before;
    out += "@@ -" + range_text(old_start, old_count) + " +" + range_text(new_start, new_count) +
           " @@\n";
    for (std::size_t j = begin; j < end; ++j) {
      const auto& e = edits[j];
      switch (e.op) {
        case Op::Equal:
          emit_line(out, ' ', a[e.old_idx]);
          break;
        case Op::Delete:
          emit_line(out, '-', a[e.old_idx]);
          break;
        case Op::Insert:
          emit_line(out, '+', b[e.new_idx]);
          break;
      }
    }
  }
  return out;
}

std::string make_diff(const fs::path& original_root, const fs::path& modified_root, int context) {
  auto old_files = list_files(original_root);
  auto new_files = list_files(modified_root);
  std::set<std::string> all(old_files.begin(), old_files.end());
  all.insert(new_files.begin(), new_files.end());
  std::string out;
  for (const auto& rel : all) {
    bool in_old = std::binary_search(old_files.begin(), old_files.end(), rel);
    bool in_new = std::binary_search(new_files.begin(), new_files.end(), rel);
    if (in_old && in_new) {
      out += diff_file_texts(rel, read_file(original_root / rel), read_file(modified_root / rel),
                             context);
      continue;
    }
    std::string text = in_old ? read_file(original_root / rel) : read_file(modified_root / rel);
    auto lines = to_lines(text);
    out += "diff --git a/" + rel + " b/" + rel + "\n";
    if (in_new) {
      out += "new file mode 100644\n--- /dev/null\n+++ b/" + rel + "\n";
      if (!lines.empty()) {
        out += "@@ -0,0 +" + range_text(1, static_cast<int>(lines.size())) + " @@\n";
        for (const auto& l : lines) emit_line(out, '+', l);
      }
    } else {
      out += "deleted file mode 100644\n--- a/" + rel + "\n+++ /dev/null\n";
      if (!lines.empty()) {
        out += "@@ -" + range_text(1, static_cast<int>(lines.size())) + " +0,0 @@\n";
        for (const auto& l : lines) emit_line(out, '-', l);
      }
    }
  }
  return out;
}

std::string apply_file_diff(std::string_view old_text, const FileDiff& diff) {
  auto old_lines = to_lines(old_text);
  std::string out;
  std::size_t pos = 0;
  auto push = [&out](std::string_view text, bool newline) {
    out.append(text);
    if (newline) out += '\n';
  };
  for (const auto& h : diff.hunks) {
    std::size_t start = static_cast<std::size_t>(h.old_count > 0 ? h.old_start - 1 : h.old_start);
    if (h.old_count > 0 && h.old_start < 1) throw DiffApplyError("hunk starts before line 1");
    if (start < pos || start > old_lines.size()) {
      throw DiffApplyError("hunk at old line " + std::to_string(h.old_start) + " out of order");
    }
    for (; pos < start; ++pos) push(old_lines[pos].text, old_lines[pos].newline);
    for (const auto& hl : h.lines) {
      if (hl.op == '+') {
        push(hl.text, !hl.no_newline);
        continue;
      }
      if (pos >= old_lines.size() || old_lines[pos].text != hl.text ||
          old_lines[pos].newline == hl.no_newline) {
        throw DiffApplyError("context mismatch in " + diff.path() + " at line " +
                             std::to_string(pos + 1));
      }
      if (hl.op == ' ') push(hl.text, !hl.no_newline);
      ++pos;
    }
  }
  for (; pos < old_lines.size(); ++pos) push(old_lines[pos].text, old_lines[pos].newline);
  return out;
}

void apply_diff(const UnifiedDiff& diff, const fs::path& root) {
  for (const auto& fd : diff.files) {
    const auto& rel = fd.path();
    if (!is_safe_relative_path(rel)) throw DiffApplyError("unsafe path in diff: " + rel);
    fs::path target = root / rel;
    if (fd.creates()) {
      if (fs::exists(target)) throw DiffApplyError("file to create already exists: " + rel);
      fs::create_directories(target.parent_path());
      write_file(target, apply_file_diff("", fd));
      continue;
    }
    if (!fs::exists(target)) throw DiffApplyError("file not found: " + rel);
    std::string patched = apply_file_diff(read_file(target), fd);
    if (fd.deletes()) {
      if (!patched.empty()) throw DiffApplyError("deleted file content mismatch: " + rel);
      fs::remove(target);
    } else {
      write_file(target, patched);
    }
  }
}

std::vector<LineRange> changed_new_ranges(const FileDiff& diff) {
  std::vector<LineRange> out;
  for (const auto& h : diff.hunks) {
    int new_line = h.new_count > 0 ? h.new_start : h.new_start + 1;
    std::size_t i = 0;
    while (i < h.lines.size()) {
      const auto& hl = h.lines[i];
      if (hl.op == ' ') {
        ++new_line;
        ++i;
        continue;
      }
      int first = new_line;
      bool added = false;
      while (i < h.lines.size() && h.lines[i].op != ' ') {
        if (h.lines[i].op == '+') {
          ++new_line;
          added = true;
        }
        ++i;
      }
      int last = added ? new_line - 1 : first;
      out.push_back({std::max(1, first), std::max(1, last)});
    }
  }
  return out;
}

bool is_safe_relative_path(std::string_view path) {
  if (path.empty() || path.front() == '/') return false;
  fs::path p(path);
  for (const auto& part : p) {
    if (part == "..") return false;
  }
  return true;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, std::string_view content) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + p.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

void copy_tree(const fs::path& from, const fs::path& to) {
  fs::create_directories(to);
  fs::copy(from, to, fs::copy_options::recursive | fs::copy_options::overwrite_existing);
}

}  // namespace crs
