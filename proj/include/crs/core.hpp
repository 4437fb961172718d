// SPDX-License-Identifier: Apache-2.0
#pragma once

// Shared primitives: error types, byte blobs, time and clocks, id generation.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace crs {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A value violates one of its type's invariants.
class InvariantError : public Error {
 public:
  using Error::Error;
};

// Malformed input document (JSON, diff, SARIF, manifest...).
class ParseError : public Error {
 public:
  using Error::Error;
};

// Operator configuration is unusable (empty target set, bad overrides).
class ConfigError : public Error {
 public:
  using Error::Error;
};

using Bytes = std::vector<std::uint8_t>;

Bytes to_bytes(std::string_view s);
std::string to_string(const Bytes& b);
std::string hex_encode(const Bytes& b);
Bytes hex_decode(std::string_view hex);  // throws ParseError

// SHA-256 of `data`, lowercase hex, truncated to `hex_chars`.
std::string sha256_hex(std::string_view data, std::size_t hex_chars = 64);

using Duration = std::chrono::milliseconds;
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

constexpr Duration minutes(std::int64_t m) { return std::chrono::minutes(m); }
constexpr Duration seconds(std::int64_t s) { return std::chrono::seconds(s); }
inline std::int64_t to_ms(Duration d) { return d.count(); }
inline std::int64_t to_ms(Timestamp t) { return t.time_since_epoch().count(); }
inline Timestamp timestamp_ms(std::int64_t ms) { return Timestamp{Duration{ms}}; }

// Injected time source. Every policy that depends on time (budgets, TTLs,
// dedup windows, score decay) reads it through this interface.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual Timestamp now() const = 0;
  virtual void sleep_for(Duration d) = 0;
  void sleep_until(Timestamp t) {
    auto n = now();
    if (t > n) sleep_for(t - n);
  }
};

class SystemClock final : public Clock {
 public:
  Timestamp now() const override;
  void sleep_for(Duration d) override;
};

// Deterministic clock; sleeping advances time instantly.
class SimulatedClock final : public Clock {
 public:
  explicit SimulatedClock(Timestamp start = Timestamp{}) : now_ms_(to_ms(start)) {}
  Timestamp now() const override { return timestamp_ms(now_ms_.load()); }
  void sleep_for(Duration d) override { advance(d); }
  void advance(Duration d) {
    if (d.count() > 0) now_ms_.fetch_add(d.count());
  }
  void set(Timestamp t) { now_ms_.store(to_ms(t)); }

 private:
  std::atomic<std::int64_t> now_ms_;
};

// Sequential, prefix-scoped identifiers ("pov-1", "pov-2", ...). Deterministic
// for a fixed call order, which the simulated runs rely on.
class IdGenerator {
 public:
  std::string next(std::string_view prefix);

 private:
  std::mutex mu_;
  std::vector<std::pair<std::string, std::uint64_t>> counters_;
};

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);
std::string to_lower(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);
bool ends_with(std::string_view s, std::string_view suffix);

// Keeps at most `max_lines` lines; appends a marker line when anything was cut.
std::string truncate_output(std::string_view text, std::size_t max_lines);

}  // namespace crs
