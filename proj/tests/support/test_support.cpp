// SPDX-License-Identifier: Apache-2.0
#include "test_support.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace crs::test {

fs::path source_dir() { return fs::path(CRS_SOURCE_DIR); }

fs::path fixture_path(const std::string& rel) { return source_dir() / "fixtures" / rel; }

json load_fixture_json(const std::string& rel) {
  std::ifstream in(fixture_path(rel));
  if (!in) throw std::runtime_error("missing fixture " + rel);
  return json::parse(in);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

TempDir::TempDir() {
  static std::atomic<int> counter{0};
  path_ = fs::temp_directory_path() /
          ("crs-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  fs::remove_all(path_);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

int Gen::range(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

bool Gen::coin(double p) { return std::bernoulli_distribution(p)(rng_); }

std::string Gen::word(std::size_t min_len, std::size_t max_len, const std::string& alphabet) {
  std::size_t n = static_cast<std::size_t>(range(static_cast<int>(min_len), static_cast<int>(max_len)));
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(alphabet[index(alphabet.size())]);
  return s;
}

Bytes Gen::bytes(std::size_t min_len, std::size_t max_len) {
  std::size_t n = static_cast<std::size_t>(range(static_cast<int>(min_len), static_cast<int>(max_len)));
  Bytes b(n);
  for (auto& c : b) c = static_cast<std::uint8_t>(range(0, 255));
  return b;
}

CallGraph random_graph(Gen& g, std::size_t n, double edge_probability) {
  std::vector<FunctionRecord> fns;
  for (std::size_t i = 0; i < n; ++i) {
    int start = static_cast<int>(i) * 10 + 1;
    fns.push_back({"f" + std::to_string(i), "src/g.c", start, start + 5, std::nullopt, std::nullopt});
  }
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (g.coin(edge_probability)) edges.emplace_back(a, b);
    }
  }
  return CallGraph(std::move(fns), std::move(edges), {{"h", 0}});
}

std::vector<ScriptEntry> replies(std::initializer_list<std::string> texts, Duration latency) {
  std::vector<ScriptEntry> out;
  for (const auto& t : texts) out.push_back({CompletionResult(t), latency});
  return out;
}

std::string gen_reply(const std::string& body) {
  return "Here is the generator.\n\n```gen\n" + body + "\nwrite x.bin\n```\n";
}

Timestamp t0() { return timestamp_ms(1700000000000); }

}  // namespace crs::test
