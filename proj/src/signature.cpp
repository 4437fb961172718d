// SPDX-License-Identifier: Apache-2.0
#include "crs/signature.hpp"

#include <cctype>
#include <charconv>
#include <regex>
#include <sstream>

namespace crs {

namespace {

bool parse_positive(std::string_view s, int& out) {
  if (s.empty()) return false;
  for (char c : s) {
    if (c < '0' || c > '9') return false;
  }
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc() && out > 0;
}

// "<path>:<line>[:<col>]" -> frame position; false when the token has no line.
bool parse_position(std::string_view token, StackFrame& frame) {
  auto last = token.rfind(':');
  if (last == std::string_view::npos) return false;
  int a = 0;
  if (!parse_positive(token.substr(last + 1), a)) return false;
  auto head = token.substr(0, last);
  auto prev = head.rfind(':');
  int b = 0;
  if (prev != std::string_view::npos && parse_positive(head.substr(prev + 1), b)) {
    frame.file = std::string(head.substr(0, prev));
    frame.line = b;
    frame.column = a;
  } else {
    frame.file = std::string(head);
    frame.line = a;
  }
  return !frame.file.empty();
}

std::optional<StackFrame> parse_asan_frame(std::string_view raw) {
  std::string line = trim(raw);
  if (line.size() < 2 || line[0] != '#') return std::nullopt;
  std::size_t i = 1;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i]))) ++i;
  if (i == 1) return std::nullopt;
  StackFrame f;
  f.ordinal = std::stoi(line.substr(1, i - 1));
  std::string_view rest = std::string_view(line).substr(i);
  auto in = rest.find(" in ");
  if (in == std::string_view::npos) return f;
  std::string_view tail = rest.substr(in + 4);
  auto space = tail.rfind(' ');
  if (space == std::string_view::npos) {
    f.symbol = std::string(tail);
    return f;
  }
  f.symbol = trim(tail.substr(0, space));
  StackFrame pos;
  if (parse_position(tail.substr(space + 1), pos)) {
    f.file = pos.file;
    f.line = pos.line;
    f.column = pos.column;
  } else {
    f.symbol = std::string(tail);
  }
  return f;
}

std::optional<StackFrame> parse_jazzer_frame(std::string_view raw, int ordinal) {
  std::string line = trim(raw);
  if (!starts_with(line, "at ")) return std::nullopt;
  auto open = line.find('(');
  auto close = line.rfind(')');
  if (open == std::string::npos || close == std::string::npos || close < open) {
    return std::nullopt;
  }
  StackFrame f;
  f.ordinal = ordinal;
  f.symbol = trim(std::string_view(line).substr(3, open - 3));
  std::string_view inside = std::string_view(line).substr(open + 1, close - open - 1);
  StackFrame pos;
  if (parse_position(inside, pos)) {
    f.file = pos.file;
    f.line = pos.line;
  }
  return f;
}

bool is_native_runtime_frame(const StackFrame& f) {
  static const char* kSymbols[] = {"__asan", "__msan", "__ubsan", "__interceptor_", "__sanitizer"};
  for (auto* s : kSymbols) {
    if (starts_with(f.symbol, s)) return true;
  }
  return f.file.find("compiler-rt/") != std::string::npos ||
         f.file.find("/llvm-project/") != std::string::npos;
}

bool is_java_runtime_frame(const StackFrame& f) {
  static const char* kPackages[] = {"java.", "javax.", "jdk.", "sun.",
                                    "com.code_intelligence.jazzer."};
  for (auto* p : kPackages) {
    if (starts_with(f.symbol, p)) return true;
  }
  return false;
}

}  // namespace

ReportGrammar grammar_for(Sanitizer sanitizer) {
  return sanitizer == Sanitizer::Jazzer ? ReportGrammar::JazzerLike : ReportGrammar::AsanLike;
}

std::vector<StackFrame> parse_frames(std::string_view report, ReportGrammar grammar) {
  std::vector<StackFrame> frames;
  int ordinal = 0;
  for (const auto& line : split_lines(report)) {
    std::optional<StackFrame> f = grammar == ReportGrammar::AsanLike
                                      ? parse_asan_frame(line)
                                      : parse_jazzer_frame(line, ordinal);
    if (f) {
      frames.push_back(std::move(*f));
      ++ordinal;
    }
  }
  return frames;
}

CrashSignature parse_crash_report(std::string_view report, Sanitizer sanitizer,
                                  const std::vector<std::string>& project_root_markers) {
  auto grammar = grammar_for(sanitizer);
  for (const auto& f : parse_frames(report, grammar)) {
    if (f.file.empty() || f.line <= 0) continue;
    bool runtime = grammar == ReportGrammar::AsanLike ? is_native_runtime_frame(f)
                                                      : is_java_runtime_frame(f);
    if (project_root_markers.empty()) {
      if (!runtime) return CrashSignature::location(f.file, f.line, sanitizer);
      continue;
    }
    for (const auto& marker : project_root_markers) {
      if (marker.empty()) continue;
      if (starts_with(f.file, marker)) {
        std::string file = f.file;
        if (marker.front() == '/') {
          file = file.substr(marker.size());
          while (!file.empty() && file.front() == '/') file.erase(0, 1);
        }
        if (file.empty()) continue;
        return CrashSignature::location(file, f.line, sanitizer);
      }
      if (grammar == ReportGrammar::JazzerLike && starts_with(f.symbol, marker)) {
        return CrashSignature::location(f.file, f.line, sanitizer);
      }
    }
  }
  return heuristic_signature(report, sanitizer);
}

std::string normalize_report(std::string_view report, std::size_t max_lines) {
  static const std::regex kTimestamp(
      R"(\d{4}-\d{2}-\d{2}[T ]\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:?\d{2})?)");
  static const std::regex kHex(R"(0x[0-9a-fA-F]+)");
  static const std::regex kAsanPid(R"(==\d+==)");
  static const std::regex kPid(R"(([Pp][Ii][Dd])([ =:#]*)\d+)");
  std::string out;
  std::size_t n = 0;
  for (const auto& line : split_lines(report)) {
    if (n++ == max_lines) break;
    std::string s = std::regex_replace(line, kTimestamp, "<time>");
    s = std::regex_replace(s, kHex, "0x<addr>");
    s = std::regex_replace(s, kAsanPid, "==<pid>==");
    s = std::regex_replace(s, kPid, "$1$2<pid>");
    out += s;
    out += '\n';
  }
  return out;
}

CrashSignature heuristic_signature(std::string_view report, Sanitizer sanitizer) {
  std::string material = normalize_report(report) + "\nsanitizer=" + to_string(sanitizer);
  return CrashSignature::heuristic(sha256_hex(material, 16), sanitizer);
}

std::string render_crash_report(const CrashReportSpec& spec) {
  std::ostringstream out;
  if (spec.sanitizer == Sanitizer::Jazzer) {
    out << "INFO: Running with entropic power schedule (0xFF, 100).\n";
    out << "== Java Exception: " << spec.crash_type << "\n";
    for (const auto& f : spec.frames) {
      out << "\tat " << f.symbol << "(" << f.file << ":" << f.line << ")\n";
    }
    out << "DEDUP_TOKEN: " << sha256_hex(spec.crash_type, 16) << "\n";
    out << "== libFuzzer crashing input ==\n";
    return out.str();
  }
  std::string tool = spec.sanitizer == Sanitizer::Address   ? "AddressSanitizer"
                     : spec.sanitizer == Sanitizer::Memory ? "MemorySanitizer"
                                                           : "UndefinedBehaviorSanitizer";
  auto position = [&](const StackFrame& f) {
    std::string p = spec.path_prefix + f.file + ":" + std::to_string(f.line);
    if (f.column > 0) p += ":" + std::to_string(f.column);
    return p;
  };
  if (spec.sanitizer == Sanitizer::UndefinedBehavior && !spec.frames.empty()) {
    out << position(spec.frames.front()) << ": runtime error: " << spec.crash_type << "\n";
  } else {
    out << "==" << spec.pid << "==ERROR: " << tool << ": " << spec.crash_type
        << " on address 0x602000000" << (100 + spec.pid % 900) << " at pc 0x55d4c3a1b2c4\n";
  }
  for (std::size_t i = 0; i < spec.frames.size(); ++i) {
    const auto& f = spec.frames[i];
    out << "    #" << i << " 0x55d4c3a1" << std::hex << (0x100 + i * 0x31) << std::dec << " in "
        << f.symbol << " " << position(f) << "\n";
  }
  out << "    #" << spec.frames.size()
      << " 0x55d4c3a00010 in fuzzer::Fuzzer::ExecuteCallback(unsigned char const*, unsigned long) "
         "/src/llvm-project/compiler-rt/lib/fuzzer/FuzzerLoop.cpp:614:13\n";
  out << "\n";
  if (!spec.frames.empty()) {
    const auto& top = spec.frames.front();
    out << "SUMMARY: " << tool << ": " << spec.crash_type << " " << position(top) << " in "
        << top.symbol << "\n";
  }
  if (spec.sanitizer != Sanitizer::UndefinedBehavior) out << "==" << spec.pid << "==ABORTING\n";
  return out.str();
}

}  // namespace crs
