// SPDX-License-Identifier: Apache-2.0
#pragma once

// Helpers shared by the unit and acceptance tests: fixture paths, scratch
// directories, a seeded generator for property tests and script builders.

#include <filesystem>
#include <initializer_list>
#include <random>
#include <string>
#include <vector>

#include "crs/domain.hpp"
#include "crs/router.hpp"

namespace crs::test {

namespace fs = std::filesystem;

fs::path source_dir();
fs::path fixture_path(const std::string& rel);
json load_fixture_json(const std::string& rel);
std::string read_text(const fs::path& p);

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  int range(int lo, int hi);  // inclusive
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(range(0, static_cast<int>(n) - 1)); }
  bool coin(double p = 0.5);
  std::string word(std::size_t min_len, std::size_t max_len, const std::string& alphabet = "abcdefghij");
  Bytes bytes(std::size_t min_len, std::size_t max_len);
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[index(v.size())];
  }
  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

// Random directed graph on n nodes, functions f0..f{n-1} in "src/g.c", with
// entry harness "h" at node 0.
CallGraph random_graph(Gen& g, std::size_t n, double edge_probability);

std::vector<ScriptEntry> replies(std::initializer_list<std::string> texts, Duration latency = Duration{0});

// A fenced gen script writing `body` to x.bin.
std::string gen_reply(const std::string& body);

Timestamp t0();

}  // namespace crs::test
