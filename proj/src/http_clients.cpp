// SPDX-License-Identifier: Apache-2.0
// Everything that talks HTTP as a client lives here so httplib is compiled once.
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <cstdlib>

#include "crs/providers.hpp"
#include "crs/submission.hpp"

namespace crs {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Model providers

HttpProviderConfig http_provider_config_from_json(const json& doc) {
  try {
    HttpProviderConfig c;
    c.name = doc.at("name").get<std::string>();
    std::string dialect = doc.value("dialect", std::string("openai"));
    if (dialect == "anthropic") {
      c.dialect = WireDialect::Anthropic;
    } else if (dialect == "openai") {
      c.dialect = WireDialect::OpenAiChat;
    } else {
      throw ParseError("provider " + c.name + ": unknown dialect '" + dialect + "'");
    }
    c.base_url = doc.at("base_url").get<std::string>();
    c.path = doc.value("path", std::string{});
    c.model = doc.value("model", c.name);
    c.api_key_env = doc.value("api_key_env", std::string{});
    c.max_tokens = doc.value("max_tokens", 4096);
    c.timeout = Duration{doc.value("timeout_ms", std::int64_t{120000})};
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("provider config: ") + e.what());
  }
}

std::vector<HttpProviderConfig> default_http_providers() {
  const std::string anthropic = "https://api.anthropic.com";
  const std::string openai = "https://api.openai.com";
  const std::string gemini = "https://generativelanguage.googleapis.com";
  return {
      {"claude-3.7", WireDialect::Anthropic, anthropic, "", "claude-3-7-sonnet-latest",
       "ANTHROPIC_API_KEY"},
      {"chatgpt-latest", WireDialect::OpenAiChat, openai, "", "chatgpt-4o-latest", "OPENAI_API_KEY"},
      {"claude-opus-4", WireDialect::Anthropic, anthropic, "", "claude-opus-4-0", "ANTHROPIC_API_KEY"},
      {"o3", WireDialect::OpenAiChat, openai, "", "o3", "OPENAI_API_KEY"},
      {"gemini-2.5-pro", WireDialect::OpenAiChat, gemini, "/v1beta/openai/chat/completions",
       "gemini-2.5-pro", "GEMINI_API_KEY"},
  };
}

HttpProvider::HttpProvider(HttpProviderConfig config) : config_(std::move(config)) {
  if (!config_.api_key_env.empty()) {
    if (const char* k = std::getenv(config_.api_key_env.c_str())) api_key_ = k;
  }
  if (config_.path.empty()) {
    config_.path = config_.dialect == WireDialect::Anthropic ? "/v1/messages" : "/v1/chat/completions";
  }
}

json HttpProvider::request_body(const Conversation& conversation) const {
  json messages = json::array();
  if (config_.dialect == WireDialect::OpenAiChat && !conversation.system_prompt.empty()) {
    messages.push_back({{"role", "system"}, {"content", conversation.system_prompt}});
  }
  for (const auto& t : conversation.turns) {
    messages.push_back({{"role", t.role == Role::User ? "user" : "assistant"}, {"content", t.content}});
  }
  json body{{"model", config_.model}, {"messages", messages}};
  if (config_.dialect == WireDialect::Anthropic) {
    body["max_tokens"] = config_.max_tokens;
    if (!conversation.system_prompt.empty()) body["system"] = conversation.system_prompt;
  }
  return body;
}

CompletionResult HttpProvider::interpret(int status, const std::string& body) const {
  if (status == 429) return ProviderError{ProviderErrorKind::RateLimited, body.substr(0, 200)};
  if (status == 529 || status == 503) return ProviderError{ProviderErrorKind::Overloaded, body.substr(0, 200)};
  if (status == 408 || status == 504) return ProviderError{ProviderErrorKind::Timeout, body.substr(0, 200)};
  if (status < 200 || status >= 300) {
    return ProviderError{ProviderErrorKind::Unavailable, "HTTP " + std::to_string(status)};
  }
  auto doc = json::parse(body, nullptr, false);
  if (doc.is_discarded()) return ProviderError{ProviderErrorKind::Malformed, "response is not JSON"};
  try {
    std::string text;
    if (config_.dialect == WireDialect::Anthropic) {
      for (const auto& block : doc.at("content")) {
        if (block.value("type", std::string{}) == "text") text += block.at("text").get<std::string>();
      }
    } else {
      text = doc.at("choices").at(0).at("message").at("content").get<std::string>();
    }
    if (trim(text).empty()) return ProviderError{ProviderErrorKind::Malformed, "empty completion"};
    return text;
  } catch (const json::exception& e) {
    return ProviderError{ProviderErrorKind::Malformed, e.what()};
  }
}

CompletionResult HttpProvider::complete(const Conversation& conversation) {
  httplib::Client cli(config_.base_url);
  auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout).count();
  cli.set_connection_timeout(10);
  cli.set_read_timeout(secs);
  cli.set_write_timeout(secs);
  httplib::Headers headers;
  if (config_.dialect == WireDialect::Anthropic) {
    headers.emplace("anthropic-version", "2023-06-01");
    if (!api_key_.empty()) headers.emplace("x-api-key", api_key_);
  } else if (!api_key_.empty()) {
    headers.emplace("Authorization", "Bearer " + api_key_);
  }
  auto res = cli.Post(config_.path, headers, request_body(conversation).dump(), "application/json");
  if (!res) {
    auto err = res.error();
    auto kind = err == httplib::Error::Read || err == httplib::Error::Write ||
                        err == httplib::Error::ConnectionTimeout
                    ? ProviderErrorKind::Timeout
                    : ProviderErrorKind::Unavailable;
    return ProviderError{kind, httplib::to_string(err)};
  }
  return interpret(res->status, res->body);
}

// ---------------------------------------------------------------------------
// Competition API client

HttpCompetitionClient::HttpCompetitionClient(std::string host, int port, std::string api_key)
    : host_(std::move(host)), port_(port), api_key_(std::move(api_key)) {}

ClientResponse HttpCompetitionClient::post(const std::string& path, const json& body) {
  httplib::Client cli(host_, port_);
  cli.set_connection_timeout(10);
  cli.set_read_timeout(60);
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
  auto res = cli.Post(path, headers, body.dump(), "application/json");
  if (!res) throw TransientError("competition API: " + httplib::to_string(res.error()));
  if (res->status >= 500 || res->status == 429) {
    throw TransientError("competition API: HTTP " + std::to_string(res->status));
  }
  auto doc = json::parse(res->body, nullptr, false);
  if (res->status >= 400 || doc.is_discarded()) {
    throw Error("competition API rejected request: HTTP " + std::to_string(res->status));
  }
  ClientResponse r;
  std::string status = to_lower(doc.value("status", std::string("failed")));
  r.status = status == "passed" || status == "accepted" ? SubmissionStatus::Passed
                                                        : SubmissionStatus::Failed;
  r.external_id = doc.value("id", std::string{});
  return r;
}

ClientResponse HttpCompetitionClient::submit_pov(const PovSubmission& pov) {
  return post("/v1/task/" + pov.task_id + "/pov/", serialize(pov));
}

ClientResponse HttpCompetitionClient::submit_patch(const PatchSubmission& patch) {
  return post("/v1/task/" + patch.task_id + "/patch/", serialize(patch));
}

ClientResponse HttpCompetitionClient::submit_sarif_assessment(const SarifRecord& record) {
  return post("/v1/task/" + record.task_id + "/sarif/", serialize(record));
}

ClientResponse HttpCompetitionClient::submit_bundle(const std::string& task_id, const Bundle& bundle) {
  return post("/v1/task/" + task_id + "/bundle/", serialize(bundle));
}

}  // namespace crs
