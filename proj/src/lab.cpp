// SPDX-License-Identifier: Apache-2.0
#include "crs/lab.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>

#include <sys/wait.h>

#include "crs/diff.hpp"
#include "crs/signature.hpp"

namespace crs {

namespace {

// ---------------------------------------------------------------------------
// Small lexer shared by directives and the generator mini-language.

struct Cursor {
  std::string_view s;
  std::size_t pos = 0;

  void skip_space() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
  }
  bool at_end() {
    skip_space();
    return pos >= s.size();
  }
  bool eat(std::string_view tok) {
    skip_space();
    if (s.substr(pos, tok.size()) == tok) {
      pos += tok.size();
      return true;
    }
    return false;
  }
  std::string word() {
    skip_space();
    std::size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '(' &&
           s[pos] != ')' && s[pos] != ',') {
      ++pos;
    }
    return std::string(s.substr(start, pos - start));
  }
};

int hex_digit(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

Bytes parse_quoted(Cursor& c) {
  c.skip_space();
  if (c.pos >= c.s.size() || c.s[c.pos] != '"') throw ParseError("expected string literal");
  ++c.pos;
  Bytes out;
  while (true) {
    if (c.pos >= c.s.size()) throw ParseError("unterminated string literal");
    char ch = c.s[c.pos++];
    if (ch == '"') break;
    if (ch != '\\') {
      out.push_back(static_cast<std::uint8_t>(ch));
      continue;
    }
    if (c.pos >= c.s.size()) throw ParseError("dangling escape");
    char e = c.s[c.pos++];
    switch (e) {
      case 'n':
        out.push_back('\n');
        break;
      case 'r':
        out.push_back('\r');
        break;
      case 't':
        out.push_back('\t');
        break;
      case '0':
        out.push_back(0);
        break;
      case '\\':
      case '"':
      case '\'':
        out.push_back(static_cast<std::uint8_t>(e));
        break;
      case 'x': {
        if (c.pos + 2 > c.s.size()) throw ParseError("short \\x escape");
        int hi = hex_digit(c.s[c.pos]);
        int lo = hex_digit(c.s[c.pos + 1]);
        if (hi < 0 || lo < 0) throw ParseError("bad \\x escape");
        out.push_back(static_cast<std::uint8_t>(hi * 16 + lo));
        c.pos += 2;
        break;
      }
      default:
        throw ParseError(std::string("unknown escape \\") + e);
    }
  }
  return out;
}

std::uint64_t parse_number(std::string_view w) {
  if (w.empty()) throw ParseError("expected number");
  int base = 10;
  if (w.size() > 2 && w[0] == '0' && (w[1] == 'x' || w[1] == 'X')) {
    base = 16;
    w.remove_prefix(2);
  }
  std::uint64_t v = 0;
  for (char ch : w) {
    int d = base == 16 ? hex_digit(ch) : (ch >= '0' && ch <= '9' ? ch - '0' : -1);
    if (d < 0) throw ParseError("bad number '" + std::string(w) + "'");
    v = v * base + static_cast<std::uint64_t>(d);
    if (v > (1ull << 40)) throw ParseError("number too large");
  }
  return v;
}

std::string escape_bytes(const Bytes& b) {
  static const char* kHex = "0123456789abcdef";
  std::string out;
  for (auto ch : b) {
    if (ch == '"' || ch == '\\') {
      out += '\\';
      out += static_cast<char>(ch);
    } else if (ch >= 0x20 && ch < 0x7f) {
      out += static_cast<char>(ch);
    } else {
      out += "\\x";
      out += kHex[ch >> 4];
      out += kHex[ch & 15];
    }
  }
  return out;
}

Predicate parse_predicate(Cursor& c) {
  std::string name = c.word();
  if (!c.eat("(")) throw ParseError("expected '(' after " + name);
  Predicate p;
  if (name == "magic_prefix" || name == "substring") {
    p.kind = name == "magic_prefix" ? PredicateKind::MagicPrefix : PredicateKind::Substring;
    p.value = parse_quoted(c);
    if (p.value.empty()) throw ParseError(name + " needs a non-empty literal");
  } else if (name == "length_at_least") {
    p.kind = PredicateKind::LengthAtLeast;
    p.number = parse_number(c.word());
  } else if (name == "byte_equals") {
    p.kind = PredicateKind::ByteEquals;
    p.number = parse_number(c.word());
    if (!c.eat(",")) throw ParseError("byte_equals needs two arguments");
    auto v = parse_number(c.word());
    if (v > 255) throw ParseError("byte_equals value exceeds 255");
    p.byte = static_cast<std::uint8_t>(v);
  } else {
    throw ParseError("unknown predicate '" + name + "'");
  }
  if (!c.eat(")")) throw ParseError("expected ')' after " + name + " arguments");
  return p;
}

// ---------------------------------------------------------------------------

std::vector<std::string> lines_of(const std::string& text) { return split_lines(text); }

std::vector<Predicate> predicate_list_from_json(const json& j, const std::string& where);

Predicate predicate_from_json(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("kind")) throw ParseError(where + ": predicate needs 'kind'");
  std::string kind = j["kind"].get<std::string>();
  Predicate p;
  if (kind == "magic_prefix" || kind == "substring") {
    p.kind = kind == "magic_prefix" ? PredicateKind::MagicPrefix : PredicateKind::Substring;
    if (!j.contains("value")) throw ParseError(where + ".value: missing");
    p.value = bytes_from_json(j["value"]);
    if (p.value.empty()) throw ParseError(where + ".value: empty literal");
  } else if (kind == "length_at_least") {
    p.kind = PredicateKind::LengthAtLeast;
    p.number = j.at("value").get<std::size_t>();
  } else if (kind == "byte_equals") {
    p.kind = PredicateKind::ByteEquals;
    p.number = j.at("offset").get<std::size_t>();
    auto v = j.at("value").get<unsigned>();
    if (v > 255) throw ParseError(where + ".value: exceeds 255");
    p.byte = static_cast<std::uint8_t>(v);
  } else {
    throw ParseError(where + ".kind: unknown predicate '" + kind + "'");
  }
  return p;
}

std::vector<Predicate> predicate_list_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ParseError(where + ": expected array");
  std::vector<Predicate> out;
  for (std::size_t i = 0; i < j.size(); ++i) {
    out.push_back(predicate_from_json(j[i], where + "[" + std::to_string(i) + "]"));
  }
  return out;
}

SiteRef site_from_json(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected object");
  SiteRef s;
  s.file = j.at("file").get<std::string>();
  s.line = j.at("line").get<int>();
  s.function = j.value("function", std::string{});
  return s;
}

const HarnessSpec& harness_spec(const LabTarget& t, const std::string& name) {
  auto it = t.harnesses.find(name);
  if (it == t.harnesses.end()) throw InfraError("lab target has no harness '" + name + "'");
  return it->second;
}

std::string first_vulnerable_harness(const LabTarget& t) {
  if (!t.vulnerable_harnesses.empty()) return *t.vulnerable_harnesses.begin();
  return t.harnesses.begin()->first;
}

std::string base_name(const std::string& path) {
  auto slash = path.rfind('/');
  return slash == std::string::npos ? path : path.substr(slash + 1);
}

int harness_line(const LabTarget& t, const HarnessSpec& h) {
  auto it = t.source_files.find(h.file);
  if (it == t.source_files.end()) return 1;
  auto lines = lines_of(it->second);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find(h.entry_function) != std::string::npos) return static_cast<int>(i) + 1;
  }
  return 1;
}

std::string render_report(const LabTarget& t, const HarnessSpec& h, int crash_line) {
  CrashReportSpec spec;
  spec.sanitizer = t.sanitizer_kind;
  spec.crash_type = t.crash_type;
  spec.pid = 4242;
  bool java = t.language == Language::Java;
  spec.path_prefix = java ? "" : "/src/" + t.project + "/";
  auto frame = [&](const SiteRef& s, int line) {
    StackFrame f;
    f.symbol = s.function;
    f.file = java ? base_name(s.file) : s.file;
    f.line = line;
    f.column = java ? 0 : 5;
    return f;
  };
  spec.frames.push_back(frame(t.crash_site, crash_line));
  for (const auto& s : t.call_stack) spec.frames.push_back(frame(s, s.line));
  spec.frames.push_back(frame({h.file, 0, h.entry_function}, harness_line(t, h)));
  return render_crash_report(spec);
}

std::string behavior_tag(const LabTarget& t, const Bytes& input) {
  for (const auto& rule : t.behaviors) {
    if (matches_all(rule.when, input)) return rule.tag;
  }
  return t.default_tag;
}

std::vector<std::string> executed_functions(const LabTarget& t, const HarnessSpec& h,
                                            const Bytes& input) {
  std::vector<std::string> out{h.entry_function};
  auto add = [&](const std::string& f) {
    if (!f.empty() && std::find(out.begin(), out.end(), f) == out.end()) out.push_back(f);
  };
  for (const auto& c : t.trigger) {
    add(c.site.function);
    if (!matches(c.predicate, input)) return out;
  }
  add(t.crash_site.function);
  return out;
}

std::string no_crash_output(const LabTarget& t, const HarnessSpec& h, const Bytes& input,
                            const std::string& behavior) {
  auto functions = executed_functions(t, h, input);
  std::ostringstream out;
  out << "INFO: Running with entropic power schedule (0xFF, 100).\n";
  out << "INFO: Seed: 1\n";
  out << "Running: input (" << input.size() << " bytes)\n";
  for (const auto& f : functions) out << "TRACE: entered " << f << "\n";
  out << "INFO: execution trace lines: " << functions.size() << "\n";
  out << "RESULT: " << behavior << "\n";
  out << "Executed input in 1 ms\n";
  out << "*** NOTE: fuzzing was not performed, you have only executed the target code on a "
         "fixed set of inputs.\n";
  return out.str();
}

// Balanced (), {}, [] outside comments and literals.
void check_delimiters(const std::string& file, const std::string& text,
                      std::vector<std::string>& diags) {
  enum class State { Code, LineComment, BlockComment, String, Char };
  State st = State::Code;
  std::vector<std::pair<char, int>> stack;
  int line = 1;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    char next = i + 1 < text.size() ? text[i + 1] : '\0';
    if (c == '\n') {
      ++line;
      if (st == State::LineComment || st == State::String || st == State::Char) st = State::Code;
      continue;
    }
    switch (st) {
      case State::LineComment:
        break;
      case State::BlockComment:
        if (c == '*' && next == '/') {
          st = State::Code;
          ++i;
        }
        break;
      case State::String:
      case State::Char:
        if (c == '\\') {
          ++i;
        } else if ((st == State::String && c == '"') || (st == State::Char && c == '\'')) {
          st = State::Code;
        }
        break;
      case State::Code:
        if (c == '/' && next == '/') {
          st = State::LineComment;
          ++i;
        } else if (c == '/' && next == '*') {
          st = State::BlockComment;
          ++i;
        } else if (c == '"') {
          st = State::String;
        } else if (c == '\'') {
          st = State::Char;
        } else if (c == '(' || c == '{' || c == '[') {
          stack.emplace_back(c, line);
        } else if (c == ')' || c == '}' || c == ']') {
          char open = c == ')' ? '(' : c == '}' ? '{' : '[';
          if (stack.empty() || stack.back().first != open) {
            diags.push_back(file + ":" + std::to_string(line) + ": error: unmatched '" +
                            std::string(1, c) + "'");
            return;
          }
          stack.pop_back();
        }
        break;
    }
  }
  if (!stack.empty()) {
    diags.push_back(file + ":" + std::to_string(stack.back().second) + ": error: unclosed '" +
                    std::string(1, stack.back().first) + "'");
  }
}

// Every LAB_REJECT directive in a file, with the line it sits on.
std::vector<std::pair<int, std::string>> find_directives(const std::string& text) {
  std::vector<std::pair<int, std::string>> out;
  static const std::string kTag = "LAB_REJECT(";
  auto lines = lines_of(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto& l = lines[i];
    auto at = l.find(kTag);
    if (at == std::string::npos) continue;
    std::size_t pos = at + kTag.size();
    int depth = 1;
    bool in_str = false;
    std::size_t end = std::string::npos;
    for (std::size_t k = pos; k < l.size(); ++k) {
      char c = l[k];
      if (in_str) {
        if (c == '\\') ++k;
        else if (c == '"') in_str = false;
        continue;
      }
      if (c == '"') in_str = true;
      else if (c == '(') ++depth;
      else if (c == ')' && --depth == 0) {
        end = k;
        break;
      }
    }
    if (end == std::string::npos) {
      out.emplace_back(static_cast<int>(i) + 1, std::string("\x01"));  // unterminated marker
    } else {
      out.emplace_back(static_cast<int>(i) + 1, l.substr(pos, end - pos));
    }
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Predicates

bool matches(const Predicate& p, const Bytes& input) {
  switch (p.kind) {
    case PredicateKind::MagicPrefix:
      return input.size() >= p.value.size() &&
             std::equal(p.value.begin(), p.value.end(), input.begin());
    case PredicateKind::Substring:
      return std::search(input.begin(), input.end(), p.value.begin(), p.value.end()) !=
             input.end();
    case PredicateKind::LengthAtLeast:
      return input.size() >= p.number;
    case PredicateKind::ByteEquals:
      return p.number < input.size() && input[p.number] == p.byte;
  }
  return false;
}

bool matches_all(const std::vector<Predicate>& conjunction, const Bytes& input) {
  return std::all_of(conjunction.begin(), conjunction.end(),
                     [&](const Predicate& p) { return matches(p, input); });
}

std::string to_source(const Predicate& p) {
  switch (p.kind) {
    case PredicateKind::MagicPrefix:
      return "magic_prefix(\"" + escape_bytes(p.value) + "\")";
    case PredicateKind::Substring:
      return "substring(\"" + escape_bytes(p.value) + "\")";
    case PredicateKind::LengthAtLeast:
      return "length_at_least(" + std::to_string(p.number) + ")";
    case PredicateKind::ByteEquals:
      return "byte_equals(" + std::to_string(p.number) + ", " + std::to_string(p.byte) + ")";
  }
  return {};
}

std::vector<Predicate> parse_conjunction(std::string_view text) {
  Cursor c{text};
  std::vector<Predicate> out;
  out.push_back(parse_predicate(c));
  while (c.eat("&&")) out.push_back(parse_predicate(c));
  if (!c.at_end()) throw ParseError("trailing text in predicate list");
  return out;
}

// ---------------------------------------------------------------------------
// Manifests

Bytes bytes_from_json(const json& j) {
  if (j.is_string()) return to_bytes(j.get<std::string>());
  if (j.is_object() && j.contains("hex")) return hex_decode(j["hex"].get<std::string>());
  throw ParseError("bytes must be a string or {\"hex\": ...}");
}

json bytes_to_json(const Bytes& b) {
  bool printable = std::all_of(b.begin(), b.end(), [](std::uint8_t c) {
    return (c >= 0x20 && c < 0x7f) || c == '\n' || c == '\r' || c == '\t';
  });
  if (printable) return to_string(b);
  return json{{"hex", hex_encode(b)}};
}

void validate(const LabTarget& t) {
  if (t.name.empty()) throw InvariantError("lab target needs a name");
  if (t.harnesses.empty()) throw InvariantError("lab target '" + t.name + "' has no harnesses");
  auto check_site = [&](const SiteRef& s, const std::string& what) {
    auto it = t.source_files.find(s.file);
    if (it == t.source_files.end()) {
      throw InvariantError(what + " file '" + s.file + "' is not among the source files");
    }
    auto n = static_cast<int>(lines_of(it->second).size());
    if (s.line < 1 || s.line > n) {
      throw InvariantError(what + " line " + std::to_string(s.line) + " outside " + s.file);
    }
  };
  check_site(t.crash_site, "crash_site");
  if (trim(lines_of(t.source_files.at(t.crash_site.file))[t.crash_site.line - 1]).empty()) {
    throw InvariantError("crash_site points at a blank line");
  }
  for (const auto& c : t.trigger) check_site(c.site, "trigger site");
  for (const auto& s : t.call_stack) check_site(s, "call_stack entry");
  for (const auto& h : t.vulnerable_harnesses) {
    if (!t.harnesses.count(h)) throw InvariantError("vulnerable harness '" + h + "' undeclared");
  }
  if ((t.language == Language::Java) != (t.sanitizer_kind == Sanitizer::Jazzer)) {
    throw InvariantError("Jazzer is the sanitizer of Java targets only");
  }
  if (t.execs_per_second == 0) throw InvariantError("execs_per_second must be positive");
}

LabTarget lab_target_from_json(const json& doc, const fs::path& base_dir) {
  try {
    LabTarget t;
    t.name = doc.at("name").get<std::string>();
    t.project = doc.value("project", t.name);
    t.language = language_from_string(doc.value("language", std::string("C_CPP")));
    if (doc.contains("source_dir")) {
      fs::path dir = base_dir / doc["source_dir"].get<std::string>();
      if (!fs::is_directory(dir)) throw ParseError("source_dir: '" + dir.string() + "' not found");
      t.source_files = read_tree(dir);
    }
    if (doc.contains("source_files")) {
      for (const auto& [k, v] : doc["source_files"].items()) t.source_files[k] = v.get<std::string>();
    }
    for (const auto& [name, h] : doc.at("harnesses").items()) {
      t.harnesses[name] = {h.at("entry_function").get<std::string>(), h.at("file").get<std::string>()};
    }
    if (doc.contains("vulnerable_harnesses")) {
      for (const auto& h : doc["vulnerable_harnesses"]) t.vulnerable_harnesses.insert(h.get<std::string>());
    } else {
      for (const auto& [name, _] : t.harnesses) t.vulnerable_harnesses.insert(name);
    }
    const auto& trig = doc.at("trigger");
    if (!trig.is_array() || trig.empty()) throw ParseError("trigger: expected non-empty array");
    for (std::size_t i = 0; i < trig.size(); ++i) {
      std::string where = "trigger[" + std::to_string(i) + "]";
      t.trigger.push_back({predicate_from_json(trig[i], where), site_from_json(trig[i].at("site"), where + ".site")});
    }
    t.crash_site = site_from_json(doc.at("crash_site"), "crash_site");
    if (doc.contains("call_stack")) {
      for (std::size_t i = 0; i < doc["call_stack"].size(); ++i) {
        t.call_stack.push_back(site_from_json(doc["call_stack"][i], "call_stack[" + std::to_string(i) + "]"));
      }
    }
    t.sanitizer_kind = sanitizer_from_string(doc.at("sanitizer_kind").get<std::string>());
    t.crash_type = doc.value("crash_type", std::string("crash"));
    if (doc.contains("behaviors")) {
      for (std::size_t i = 0; i < doc["behaviors"].size(); ++i) {
        const auto& b = doc["behaviors"][i];
        std::string where = "behaviors[" + std::to_string(i) + "]";
        t.behaviors.push_back({predicate_list_from_json(b.at("when"), where + ".when"), b.at("tag").get<std::string>()});
      }
    }
    t.default_tag = doc.value("default_tag", std::string("ok"));
    if (doc.contains("functionality_checks")) {
      for (const auto& c : doc["functionality_checks"]) {
        t.functionality_checks.push_back(
            {c.at("name").get<std::string>(), bytes_from_json(c.at("input")), c.at("expect").get<std::string>()});
      }
    }
    if (doc.contains("required_markers")) {
      for (const auto& m : doc["required_markers"]) {
        t.required_markers.push_back({m.at("file").get<std::string>(), m.at("text").get<std::string>()});
      }
    }
    if (doc.contains("seeds")) {
      for (const auto& s : doc["seeds"]) t.seeds.push_back(bytes_from_json(s));
    }
    if (doc.contains("signature_markers")) {
      t.signature_markers = doc["signature_markers"].get<std::vector<std::string>>();
    } else if (t.language == Language::C_CPP) {
      t.signature_markers = {"/src/" + t.project + "/"};
    }
    t.execs_per_second = doc.value("execs_per_second", 100u);
    validate(t);
    return t;
  } catch (const json::exception& e) {
    throw ParseError(std::string("lab target: ") + e.what());
  } catch (const InvariantError& e) {
    throw ParseError(std::string("lab target: ") + e.what());
  }
}

LabTarget load_lab_target(const fs::path& manifest_path) {
  std::string text;
  try {
    text = read_file(manifest_path);
  } catch (const std::exception& e) {
    throw ParseError("cannot read lab target '" + manifest_path.string() + "'");
  }
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  return lab_target_from_json(doc, manifest_path.parent_path());
}

void materialize(const LabTarget& t, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [rel, text] : t.source_files) write_file(dir / rel, text);
}

std::map<std::string, std::string> read_tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::is_directory(root)) throw InfraError("workspace '" + root.string() + "' is not a directory");
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (!e.is_regular_file()) continue;
    auto rel = fs::relative(e.path(), root).generic_string();
    if (starts_with(rel, ".git/")) continue;
    out[rel] = read_file(e.path());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Semantics

WorkspaceSemantics analyze_workspace(const LabTarget& t,
                                     const std::map<std::string, std::string>& files) {
  WorkspaceSemantics ws;
  for (const auto& [rel, text] : files) {
    for (const auto& [line, body] : find_directives(text)) {
      if (body == "\x01") throw ParseError(rel + ":" + std::to_string(line) + ": unterminated LAB_REJECT");
      try {
        ws.guards.push_back(parse_conjunction(body));
      } catch (const ParseError& e) {
        throw ParseError(rel + ":" + std::to_string(line) + ": " + e.what());
      }
    }
  }
  auto orig = t.source_files.find(t.crash_site.file);
  auto now = files.find(t.crash_site.file);
  if (orig != t.source_files.end() && now != files.end()) {
    std::string needle = trim(lines_of(orig->second)[t.crash_site.line - 1]);
    auto lines = lines_of(now->second);
    int best = -1;
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (trim(lines[i]) != needle) continue;
      int candidate = static_cast<int>(i) + 1;
      if (best < 0 || std::abs(candidate - t.crash_site.line) < std::abs(best - t.crash_site.line)) {
        best = candidate;
      }
    }
    if (best > 0) ws.crash_line = best;
  }
  return ws;
}

WorkspaceSemantics analyze_workspace(const LabTarget& t, const fs::path& root) {
  return analyze_workspace(t, read_tree(root));
}

LabOutcome run_harness(const LabTarget& t, const FuzzerTarget& target, const Bytes& input,
                       const WorkspaceSemantics& ws) {
  const HarnessSpec& h = harness_spec(t, target.harness_name);
  LabOutcome out;
  bool rejected = std::any_of(ws.guards.begin(), ws.guards.end(),
                              [&](const auto& g) { return matches_all(g, input); });
  if (rejected) {
    out.behavior = "rejected";
  } else {
    bool triggered = std::all_of(t.trigger.begin(), t.trigger.end(),
                                 [&](const Conjunct& c) { return matches(c.predicate, input); });
    if (triggered && ws.crash_line && target.sanitizer == t.sanitizer_kind &&
        t.vulnerable_harnesses.count(target.harness_name)) {
      out.crashed = true;
      out.behavior = "crash";
      out.text = render_report(t, h, *ws.crash_line);
      return out;
    }
    out.behavior = behavior_tag(t, input);
  }
  out.text = no_crash_output(t, h, input, out.behavior);
  return out;
}

LabOutcome run_harness(const LabTarget& t, const Bytes& input) {
  FuzzerTarget ft{first_vulnerable_harness(t), t.sanitizer_kind, ""};
  return run_harness(t, ft, input, analyze_workspace(t, t.source_files));
}

CoverageSummary trace_coverage(const LabTarget& t, const Bytes& input) {
  CoverageSummary cov;
  cov.executed_functions = executed_functions(t, harness_spec(t, first_vulnerable_harness(t)), input);
  for (const auto& c : t.trigger) {
    BranchPoint b;
    b.file = c.site.file;
    b.line = c.site.line;
    b.taken = matches(c.predicate, input);
    auto lines = lines_of(t.source_files.at(c.site.file));
    int n = static_cast<int>(lines.size());
    int first = std::max(1, c.site.line - 3);
    int last = std::min(n, c.site.line + 3);
    b.context_first_line = first;
    for (int l = first; l <= last; ++l) b.context.push_back(lines[l - 1]);
    cov.branch_points.push_back(std::move(b));
  }
  return cov;
}

BuildResult lab_build(const LabTarget& t, const fs::path& workspace) {
  auto files = read_tree(workspace);
  std::vector<std::string> diags;
  for (const auto& [rel, text] : files) {
    check_delimiters(rel, text, diags);
    for (const auto& [line, body] : find_directives(text)) {
      try {
        if (body == "\x01") throw ParseError("unterminated LAB_REJECT");
        parse_conjunction(body);
      } catch (const ParseError& e) {
        diags.push_back(rel + ":" + std::to_string(line) + ": error: " + e.what());
      }
    }
  }
  for (const auto& m : t.required_markers) {
    auto it = files.find(m.file);
    if (it == files.end()) {
      diags.push_back(m.file + ": error: file missing");
    } else if (it->second.find(m.text) == std::string::npos) {
      diags.push_back(m.file + ": error: required declaration missing: " + m.text);
    }
  }
  BuildResult r;
  r.ok = diags.empty();
  for (const auto& d : diags) r.diagnostics += d + "\n";
  return r;
}

std::vector<CheckResult> run_functionality_tests(const LabTarget& t, const fs::path& workspace) {
  auto ws = analyze_workspace(t, workspace);
  FuzzerTarget ft{first_vulnerable_harness(t), t.sanitizer_kind, ""};
  std::vector<CheckResult> out;
  for (const auto& check : t.functionality_checks) {
    auto outcome = run_harness(t, ft, check.input, ws);
    CheckResult r;
    r.name = check.name;
    r.passed = outcome.behavior == check.expect;
    r.detail = "expected " + check.expect + ", got " + outcome.behavior;
    out.push_back(std::move(r));
  }
  return out;
}

FuzzOutcome scripted_fuzz_run(const LabTarget& t, const FuzzerTarget& target,
                              const fs::path& workspace, Duration duration, std::uint64_t seed,
                              Clock* clock, const std::vector<Bytes>& corpus_in) {
  FuzzOutcome out;
  std::uint64_t budget =
      static_cast<std::uint64_t>(std::max<std::int64_t>(0, duration.count())) * t.execs_per_second / 1000;
  if (budget == 0) return out;
  auto ws = analyze_workspace(t, workspace);

  // Comparison operands the target checks act as an auto-dictionary.
  std::vector<Bytes> dict;
  std::vector<const Predicate*> byte_preds;
  auto harvest = [&](const Predicate& p) {
    if (!p.value.empty()) dict.push_back(p.value);
    if (p.kind == PredicateKind::ByteEquals) byte_preds.push_back(&p);
  };
  for (const auto& c : t.trigger) harvest(c.predicate);
  for (const auto& r : t.behaviors) for (const auto& p : r.when) harvest(p);

  std::vector<Bytes> corpus = t.seeds;
  corpus.insert(corpus.end(), corpus_in.begin(), corpus_in.end());
  if (corpus.empty()) corpus.push_back(to_bytes("A"));

  std::mt19937_64 rng(seed);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  for (std::uint64_t i = 0; i < budget; ++i) {
    Bytes input = corpus[pick(corpus.size())];
    std::size_t rounds = 1 + pick(3);
    for (std::size_t r = 0; r < rounds; ++r) {
      switch (pick(6)) {
        case 0:
          if (!input.empty()) input[pick(input.size())] ^= static_cast<std::uint8_t>(1u << pick(8));
          break;
        case 1:
          if (!dict.empty()) {
            const auto& tok = dict[pick(dict.size())];
            input.insert(input.begin(), tok.begin(), tok.end());
          }
          break;
        case 2:
          if (!dict.empty()) {
            const auto& tok = dict[pick(dict.size())];
            input.insert(input.begin() + static_cast<std::ptrdiff_t>(pick(input.size() + 1)), tok.begin(), tok.end());
          }
          break;
        case 3: {
          std::size_t n = 1 + pick(16);
          for (std::size_t k = 0; k < n; ++k) input.push_back(static_cast<std::uint8_t>(rng() & 0xff));
          break;
        }
        case 4:
          if (input.size() < 2048) {
            Bytes copy = input;
            input.insert(input.end(), copy.begin(), copy.end());
          }
          break;
        case 5:
          if (!byte_preds.empty()) {
            const Predicate* p = byte_preds[pick(byte_preds.size())];
            if (input.size() <= p->number) input.resize(p->number + 1, 0);
            input[p->number] = p->byte;
          }
          break;
      }
    }
    ++out.executions;
    auto outcome = run_harness(t, target, input, ws);
    if (outcome.crashed) {
      out.crash_found = true;
      out.report = outcome.text;
      out.input = std::move(input);
      break;
    }
    if (corpus.size() < 256 && pick(8) == 0) corpus.push_back(std::move(input));
  }
  if (clock) {
    clock->sleep_for(out.crash_found
                         ? Duration{static_cast<std::int64_t>(out.executions * 1000 / t.execs_per_second)}
                         : duration);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Handles

LabHarnessRunner::LabHarnessRunner(const LabTarget& target, fs::path repo_root)
    : target_(target), repo_root_(std::move(repo_root)) {}

HarnessOutcome LabHarnessRunner::run(const FuzzerTarget& target, const Bytes& input,
                                     const fs::path& workspace) {
  WorkspaceSemantics ws;
  try {
    ws = analyze_workspace(target_, workspace.empty() ? repo_root_ : workspace);
  } catch (const ParseError& e) {
    throw InfraError(std::string("harness build failed: ") + e.what());
  }
  auto out = run_harness(target_, target, input, ws);
  return {out.crashed, out.text};
}

ExecResult run_lab_script(const std::string& source, const fs::path& workdir) {
  constexpr std::size_t kMaxOutput = 16u << 20;
  ExecResult res;
  Bytes buffer;
  std::size_t produced = 0;
  auto fail = [&](int line, const std::string& msg) {
    res.exit_code = 1;
    res.diagnostics = "line " + std::to_string(line) + ": " + msg;
    return res;
  };
  auto plain_name = [](const std::string& n) {
    return !n.empty() && n.find('/') == std::string::npos && n.find('\\') == std::string::npos &&
           n != "." && n != "..";
  };
  auto lines = split_lines(source);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    int ln = static_cast<int>(i) + 1;
    std::string text = trim(lines[i]);
    if (text.empty() || text[0] == '#') continue;
    Cursor c{text};
    std::string cmd = c.word();
    try {
      if (cmd == "literal") {
        Bytes b = parse_quoted(c);
        buffer.insert(buffer.end(), b.begin(), b.end());
      } else if (cmd == "repeat") {
        Bytes b = parse_quoted(c);
        auto n = parse_number(c.word());
        if (b.size() * n > kMaxOutput) return fail(ln, "repeat exceeds output limit");
        for (std::uint64_t k = 0; k < n; ++k) buffer.insert(buffer.end(), b.begin(), b.end());
      } else if (cmd == "range") {
        auto a = parse_number(c.word());
        auto b = parse_number(c.word());
        if (a > 255 || b > 255 || a > b) return fail(ln, "range bounds must satisfy 0 <= a <= b <= 255");
        for (auto v = a; v <= b; ++v) buffer.push_back(static_cast<std::uint8_t>(v));
      } else if (cmd == "concat") {
        std::string name = c.word();
        if (!plain_name(name)) return fail(ln, "invalid file name '" + name + "'");
        if (!fs::exists(workdir / name)) return fail(ln, "concat: no such file '" + name + "'");
        auto content = read_file(workdir / name);
        buffer.insert(buffer.end(), content.begin(), content.end());
      } else if (cmd == "write") {
        std::string name = c.word();
        if (!plain_name(name)) return fail(ln, "invalid file name '" + name + "'");
        write_file(workdir / name, to_string(buffer));
        buffer.clear();
      } else {
        return fail(ln, "unknown command '" + cmd + "'");
      }
    } catch (const ParseError& e) {
      return fail(ln, e.what());
    }
    if (!c.at_end()) return fail(ln, "unexpected trailing text");
    produced = std::max(produced, buffer.size());
    if (produced > kMaxOutput) return fail(ln, "output limit exceeded");
  }
  return res;
}

ExecResult ProcessScriptExecutor::execute(const std::string& source, const fs::path& workdir,
                                          Duration wall_cap) {
  write_file(workdir / "gen.py", source);
  auto secs = std::max<std::int64_t>(1, std::chrono::duration_cast<std::chrono::seconds>(wall_cap).count());
  std::string cmd = "cd '" + workdir.string() + "' && timeout " + std::to_string(secs) + "s " +
                    interpreter_ + " gen.py > gen.stdout 2> gen.stderr";
  int status = std::system(cmd.c_str());
  ExecResult r;
  if (status == -1) throw InfraError("cannot spawn script interpreter");
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : 128;
  r.timed_out = r.exit_code == 124;
  std::error_code ec;
  if (fs::exists(workdir / "gen.stderr", ec)) {
    r.diagnostics = truncate_output(read_file(workdir / "gen.stderr"), 50);
  }
  if (r.timed_out) r.diagnostics += "\nscript exceeded the wall-clock cap";
  return r;
}

}  // namespace crs
