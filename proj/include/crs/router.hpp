// SPDX-License-Identifier: Apache-2.0
#pragma once

// Model routing with prioritized fallback.
//
// Any failure of a provider (rate limit, overload, timeout, outage, malformed
// response) hands the same request to the next provider in priority order. A
// provider is never retried within one route_complete call; retry loops belong
// to the strategies.

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "crs/core.hpp"
#include "json.hpp"

namespace crs {

enum class Role { User, Assistant };

struct Turn {
  Role role = Role::User;
  std::string content;
  bool operator==(const Turn&) const = default;
};

struct Conversation {
  std::string system_prompt;
  std::vector<Turn> turns;

  void add_user(std::string content) { turns.push_back({Role::User, std::move(content)}); }
  void add_assistant(std::string content) {
    turns.push_back({Role::Assistant, std::move(content)});
  }
  std::optional<std::string> first_assistant() const;
  bool operator==(const Conversation&) const = default;
};

// Turns alternate roles starting with User.
void validate(const Conversation& c);
nlohmann::json to_json_doc(const Conversation& c);

enum class ProviderErrorKind { RateLimited, Overloaded, Timeout, Unavailable, Malformed };
std::string to_string(ProviderErrorKind k);
ProviderErrorKind provider_error_from_string(const std::string& s);

struct ProviderError {
  ProviderErrorKind kind = ProviderErrorKind::Unavailable;
  std::string detail;
};

class CompletionResult {
 public:
  CompletionResult(std::string text) : value_(std::move(text)) {}  // NOLINT
  CompletionResult(ProviderError error) : value_(std::move(error)) {}  // NOLINT

  bool ok() const { return std::holds_alternative<std::string>(value_); }
  const std::string& text() const { return std::get<std::string>(value_); }
  const ProviderError& error() const { return std::get<ProviderError>(value_); }

 private:
  std::variant<std::string, ProviderError> value_;
};

class ProviderHandle {
 public:
  virtual ~ProviderHandle() = default;
  virtual const std::string& name() const = 0;
  virtual CompletionResult complete(const Conversation& conversation) = 0;
  // True when complete() returns promptly without blocking on I/O; such
  // providers are called inline instead of under a deadline thread.
  virtual bool returns_promptly() const { return false; }
};

struct ScriptEntry {
  CompletionResult result;
  Duration latency{0};  // charged to the injected clock before answering
};

// Returns its script entries in global call order, then Unavailable forever.
class ScriptedProvider final : public ProviderHandle {
 public:
  ScriptedProvider(std::string name, std::vector<ScriptEntry> script, Clock* clock = nullptr);

  const std::string& name() const override { return name_; }
  CompletionResult complete(const Conversation& conversation) override;
  bool returns_promptly() const override { return true; }

  std::size_t calls() const;
  std::size_t remaining() const;
  std::size_t over_consumed() const;
  // Conversations seen so far, in call order.
  std::vector<Conversation> transcript() const;

 private:
  std::string name_;
  Clock* clock_;
  mutable std::mutex mu_;
  std::deque<ScriptEntry> script_;
  std::size_t calls_ = 0;
  std::size_t over_ = 0;
  std::vector<Conversation> transcript_;
};

// Script document: array of entries, each either a response string,
// {"response": "...", "latency_ms": n} or {"error": "<kind>", "latency_ms": n}.
std::vector<ScriptEntry> parse_script(const nlohmann::json& doc);

// Throws InvariantError on an empty script.
std::shared_ptr<ScriptedProvider> register_scripted_provider(std::string name,
                                                             std::vector<ScriptEntry> script,
                                                             Clock* clock = nullptr);

class ProviderRegistry {
 public:
  void add(std::shared_ptr<ProviderHandle> provider);
  std::shared_ptr<ProviderHandle> find(const std::string& name) const;
  bool contains(const std::string& name) const { return providers_.count(name) > 0; }
  std::vector<std::string> names() const;

 private:
  std::map<std::string, std::shared_ptr<ProviderHandle>> providers_;
};

struct ModelPriorityList {
  std::vector<std::string> names;

  static ModelPriorityList defaults();
  // Same order, starting at `first` and wrapping around.
  ModelPriorityList starting_at(const std::string& first) const;
};

void validate(const ModelPriorityList& p);

struct RouteResult {
  std::string provider;
  std::string text;
};

class AllProvidersExhausted : public Error {
 public:
  explicit AllProvidersExhausted(std::vector<std::pair<std::string, ProviderErrorKind>> attempts);
  const std::vector<std::pair<std::string, ProviderErrorKind>>& attempts() const {
    return attempts_;
  }

 private:
  std::vector<std::pair<std::string, ProviderErrorKind>> attempts_;
};

struct RouteOptions {
  Duration attempt_deadline = seconds(120);
};

struct RouteAttempt {
  std::string provider;
  std::optional<ProviderErrorKind> error;
};

// One entry per route_complete call.
class RouterLog {
 public:
  void record(std::vector<RouteAttempt> attempts);
  std::size_t calls() const;
  std::vector<std::vector<RouteAttempt>> entries() const;

 private:
  mutable std::mutex mu_;
  std::vector<std::vector<RouteAttempt>> entries_;
};

RouteResult route_complete(const Conversation& conversation, const ModelPriorityList& priority,
                           const ProviderRegistry& registry, const RouteOptions& options = {},
                           RouterLog* log = nullptr);

// A registry plus priority list behind the provider interface, so strategies
// and evaluators can use a routed model wherever a single handle is expected.
class Router final : public ProviderHandle {
 public:
  Router(ProviderRegistry registry, ModelPriorityList priority, RouteOptions options = {},
         std::string name = "router");

  const std::string& name() const override { return name_; }
  CompletionResult complete(const Conversation& conversation) override;

  RouteResult route(const Conversation& conversation);
  RouteResult route_from(const Conversation& conversation, const std::string& first_model);

  const ModelPriorityList& priority() const { return priority_; }
  const ProviderRegistry& registry() const { return registry_; }
  RouterLog& log() { return log_; }
  std::size_t call_count() const { return log_.calls(); }

 private:
  ProviderRegistry registry_;
  ModelPriorityList priority_;
  RouteOptions options_;
  std::string name_;
  RouterLog log_;
};

// Yes/no answer of an evaluator; nullopt for errors and unparseable replies.
std::optional<bool> parse_yes_no(std::string_view reply);
std::optional<bool> ask_yes_no(ProviderHandle& evaluator, const std::string& system_prompt,
                               const std::string& question);

// First fenced code block ("```lang ... ```"), or nullopt.
std::optional<std::string> first_fenced_block(std::string_view text);
std::vector<std::string> fenced_blocks(std::string_view text);

}  // namespace crs
