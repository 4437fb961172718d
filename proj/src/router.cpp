// SPDX-License-Identifier: Apache-2.0
#include "crs/router.hpp"

#include <algorithm>
#include <cctype>
#include <condition_variable>
#include <thread>

namespace crs {

std::optional<std::string> Conversation::first_assistant() const {
  for (const auto& t : turns) {
    if (t.role == Role::Assistant) return t.content;
  }
  return std::nullopt;
}

void validate(const Conversation& c) {
  if (c.turns.empty()) throw InvariantError("conversation has no turns");
  for (std::size_t i = 0; i < c.turns.size(); ++i) {
    Role expected = i % 2 == 0 ? Role::User : Role::Assistant;
    if (c.turns[i].role != expected) {
      throw InvariantError("conversation turns must alternate starting with user (turn " +
                           std::to_string(i) + ")");
    }
  }
}

nlohmann::json to_json_doc(const Conversation& c) {
  nlohmann::json turns = nlohmann::json::array();
  for (const auto& t : c.turns) {
    turns.push_back({{"role", t.role == Role::User ? "user" : "assistant"}, {"content", t.content}});
  }
  return {{"system", c.system_prompt}, {"turns", turns}};
}

std::string to_string(ProviderErrorKind k) {
  switch (k) {
    case ProviderErrorKind::RateLimited:
      return "RateLimited";
    case ProviderErrorKind::Overloaded:
      return "Overloaded";
    case ProviderErrorKind::Timeout:
      return "Timeout";
    case ProviderErrorKind::Unavailable:
      return "Unavailable";
    case ProviderErrorKind::Malformed:
      return "Malformed";
  }
  return "Unavailable";
}

ProviderErrorKind provider_error_from_string(const std::string& s) {
  for (auto k : {ProviderErrorKind::RateLimited, ProviderErrorKind::Overloaded,
                 ProviderErrorKind::Timeout, ProviderErrorKind::Unavailable,
                 ProviderErrorKind::Malformed}) {
    if (to_string(k) == s) return k;
  }
  throw ParseError("unknown provider error kind '" + s + "'");
}

ScriptedProvider::ScriptedProvider(std::string name, std::vector<ScriptEntry> script, Clock* clock)
    : name_(std::move(name)), clock_(clock), script_(script.begin(), script.end()) {}

CompletionResult ScriptedProvider::complete(const Conversation& conversation) {
  std::optional<ScriptEntry> entry;
  {
    std::lock_guard<std::mutex> lock(mu_);
    ++calls_;
    transcript_.push_back(conversation);
    if (script_.empty()) {
      ++over_;
    } else {
      entry = std::move(script_.front());
      script_.pop_front();
    }
  }
  if (!entry) return ProviderError{ProviderErrorKind::Unavailable, "script exhausted"};
  if (clock_ && entry->latency.count() > 0) clock_->sleep_for(entry->latency);
  return entry->result;
}

std::size_t ScriptedProvider::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_;
}

std::size_t ScriptedProvider::remaining() const {
  std::lock_guard<std::mutex> lock(mu_);
  return script_.size();
}

std::size_t ScriptedProvider::over_consumed() const {
  std::lock_guard<std::mutex> lock(mu_);
  return over_;
}

std::vector<Conversation> ScriptedProvider::transcript() const {
  std::lock_guard<std::mutex> lock(mu_);
  return transcript_;
}

std::vector<ScriptEntry> parse_script(const nlohmann::json& doc) {
  if (!doc.is_array()) throw ParseError("provider script must be an array");
  std::vector<ScriptEntry> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& e = doc[i];
    if (e.is_string()) {
      out.push_back({CompletionResult(e.get<std::string>()), Duration{0}});
      continue;
    }
    if (!e.is_object()) throw ParseError("script[" + std::to_string(i) + "]: expected string or object");
    Duration latency{e.value("latency_ms", std::int64_t{0})};
    if (e.contains("response")) {
      if (!e["response"].is_string()) {
        throw ParseError("script[" + std::to_string(i) + "].response: expected string");
      }
      out.push_back({CompletionResult(e["response"].get<std::string>()), latency});
    } else if (e.contains("error")) {
      auto kind = provider_error_from_string(e["error"].get<std::string>());
      out.push_back({CompletionResult(ProviderError{kind, "scripted"}), latency});
    } else {
      throw ParseError("script[" + std::to_string(i) + "]: needs 'response' or 'error'");
    }
  }
  return out;
}

std::shared_ptr<ScriptedProvider> register_scripted_provider(std::string name,
                                                             std::vector<ScriptEntry> script,
                                                             Clock* clock) {
  if (script.empty()) throw InvariantError("scripted provider '" + name + "' has an empty script");
  return std::make_shared<ScriptedProvider>(std::move(name), std::move(script), clock);
}

void ProviderRegistry::add(std::shared_ptr<ProviderHandle> provider) {
  if (!provider) throw InvariantError("null provider");
  providers_[provider->name()] = std::move(provider);
}

std::shared_ptr<ProviderHandle> ProviderRegistry::find(const std::string& name) const {
  auto it = providers_.find(name);
  return it == providers_.end() ? nullptr : it->second;
}

std::vector<std::string> ProviderRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [k, _] : providers_) out.push_back(k);
  return out;
}

ModelPriorityList ModelPriorityList::defaults() {
  return {{"claude-3.7", "chatgpt-latest", "claude-opus-4", "o3", "gemini-2.5-pro"}};
}

ModelPriorityList ModelPriorityList::starting_at(const std::string& first) const {
  auto it = std::find(names.begin(), names.end(), first);
  if (it == names.end()) return *this;
  ModelPriorityList out;
  out.names.insert(out.names.end(), it, names.end());
  out.names.insert(out.names.end(), names.begin(), it);
  return out;
}

void validate(const ModelPriorityList& p) {
  if (p.names.empty()) throw InvariantError("model priority list is empty");
  auto sorted = p.names;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw InvariantError("model priority list has duplicate names");
  }
}

namespace {

std::string describe(const std::vector<std::pair<std::string, ProviderErrorKind>>& attempts) {
  std::string msg = "all providers exhausted:";
  for (const auto& [name, kind] : attempts) msg += " " + name + "=" + to_string(kind);
  return msg;
}

struct PendingCall {
  std::mutex mu;
  std::condition_variable cv;
  std::optional<CompletionResult> result;
};

// Runs one provider call under a wall-clock deadline. A call that outlives the
// deadline keeps running detached; its late answer is dropped.
CompletionResult call_with_deadline(const std::shared_ptr<ProviderHandle>& provider,
                                    const Conversation& conversation, Duration deadline) {
  if (provider->returns_promptly() || deadline.count() <= 0) {
    return provider->complete(conversation);
  }
  auto pending = std::make_shared<PendingCall>();
  std::thread([pending, provider, conversation] {
    CompletionResult r = ProviderError{ProviderErrorKind::Unavailable, "provider threw"};
    try {
      r = provider->complete(conversation);
    } catch (const std::exception& e) {
      r = ProviderError{ProviderErrorKind::Unavailable, e.what()};
    }
    std::lock_guard<std::mutex> lock(pending->mu);
    pending->result = std::move(r);
    pending->cv.notify_all();
  }).detach();
  std::unique_lock<std::mutex> lock(pending->mu);
  if (!pending->cv.wait_for(lock, deadline, [&] { return pending->result.has_value(); })) {
    return ProviderError{ProviderErrorKind::Timeout, "attempt deadline exceeded"};
  }
  return *pending->result;
}

}  // namespace

AllProvidersExhausted::AllProvidersExhausted(
    std::vector<std::pair<std::string, ProviderErrorKind>> attempts)
    : Error(describe(attempts)), attempts_(std::move(attempts)) {}

void RouterLog::record(std::vector<RouteAttempt> attempts) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_.push_back(std::move(attempts));
}

std::size_t RouterLog::calls() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_.size();
}

std::vector<std::vector<RouteAttempt>> RouterLog::entries() const {
  std::lock_guard<std::mutex> lock(mu_);
  return entries_;
}

RouteResult route_complete(const Conversation& conversation, const ModelPriorityList& priority,
                           const ProviderRegistry& registry, const RouteOptions& options,
                           RouterLog* log) {
  validate(conversation);
  std::vector<std::pair<std::string, ProviderErrorKind>> failures;
  std::vector<RouteAttempt> attempts;
  for (const auto& name : priority.names) {
    auto provider = registry.find(name);
    if (!provider) {
      failures.emplace_back(name, ProviderErrorKind::Unavailable);
      attempts.push_back({name, ProviderErrorKind::Unavailable});
      continue;
    }
    CompletionResult r = ProviderError{ProviderErrorKind::Unavailable, ""};
    try {
      r = call_with_deadline(provider, conversation, options.attempt_deadline);
    } catch (const std::exception& e) {
      r = ProviderError{ProviderErrorKind::Unavailable, e.what()};
    }
    if (r.ok() && trim(r.text()).empty()) {
      r = ProviderError{ProviderErrorKind::Malformed, "empty response"};
    }
    if (r.ok()) {
      attempts.push_back({name, std::nullopt});
      if (log) log->record(std::move(attempts));
      return {name, r.text()};
    }
    failures.emplace_back(name, r.error().kind);
    attempts.push_back({name, r.error().kind});
  }
  if (log) log->record(std::move(attempts));
  throw AllProvidersExhausted(std::move(failures));
}

Router::Router(ProviderRegistry registry, ModelPriorityList priority, RouteOptions options,
               std::string name)
    : registry_(std::move(registry)),
      priority_(std::move(priority)),
      options_(options),
      name_(std::move(name)) {
  validate(priority_);
}

CompletionResult Router::complete(const Conversation& conversation) {
  try {
    return route(conversation).text;
  } catch (const AllProvidersExhausted& e) {
    return ProviderError{ProviderErrorKind::Unavailable, e.what()};
  }
}

RouteResult Router::route(const Conversation& conversation) {
  return route_complete(conversation, priority_, registry_, options_, &log_);
}

RouteResult Router::route_from(const Conversation& conversation, const std::string& first_model) {
  return route_complete(conversation, priority_.starting_at(first_model), registry_, options_,
                        &log_);
}

std::optional<bool> parse_yes_no(std::string_view reply) {
  std::string s = to_lower(trim(reply));
  std::size_t i = 0;
  while (i < s.size() && !std::isalpha(static_cast<unsigned char>(s[i]))) ++i;
  std::size_t j = i;
  while (j < s.size() && std::isalpha(static_cast<unsigned char>(s[j]))) ++j;
  std::string word = s.substr(i, j - i);
  if (word == "yes" || word == "true") return true;
  if (word == "no" || word == "false") return false;
  return std::nullopt;
}

std::optional<bool> ask_yes_no(ProviderHandle& evaluator, const std::string& system_prompt,
                               const std::string& question) {
  Conversation c;
  c.system_prompt = system_prompt;
  c.add_user(question);
  CompletionResult r = ProviderError{};
  try {
    r = evaluator.complete(c);
  } catch (const std::exception&) {
    return std::nullopt;
  }
  if (!r.ok()) return std::nullopt;
  return parse_yes_no(r.text());
}

std::vector<std::string> fenced_blocks(std::string_view text) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    auto open = text.find("```", pos);
    if (open == std::string_view::npos) break;
    auto body = text.find('\n', open);
    if (body == std::string_view::npos) break;
    auto close = text.find("```", body + 1);
    if (close == std::string_view::npos) break;
    out.emplace_back(text.substr(body + 1, close - body - 1));
    pos = close + 3;
  }
  return out;
}

std::optional<std::string> first_fenced_block(std::string_view text) {
  auto blocks = fenced_blocks(text);
  if (blocks.empty()) return std::nullopt;
  return blocks.front();
}

}  // namespace crs
