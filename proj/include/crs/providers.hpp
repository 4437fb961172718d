// SPDX-License-Identifier: Apache-2.0
#pragma once

// HTTP-backed model providers. Two wire dialects cover the hosted models:
// the Anthropic messages API and the OpenAI-style chat completions API (also
// served by Gemini's compatibility endpoint and most local gateways).

#include <memory>
#include <string>

#include "crs/router.hpp"

namespace crs {

enum class WireDialect { Anthropic, OpenAiChat };

struct HttpProviderConfig {
  std::string name;         // priority-list name, e.g. "claude-3.7"
  WireDialect dialect = WireDialect::OpenAiChat;
  std::string base_url;     // "https://api.anthropic.com" or "http://127.0.0.1:8080"
  std::string path;         // empty: the dialect's usual path
  std::string model;        // model id sent on the wire
  std::string api_key_env;  // environment variable holding the key; may be empty
  int max_tokens = 4096;
  Duration timeout = seconds(120);
};

HttpProviderConfig http_provider_config_from_json(const nlohmann::json& doc);

class HttpProvider final : public ProviderHandle {
 public:
  explicit HttpProvider(HttpProviderConfig config);

  const std::string& name() const override { return config_.name; }
  CompletionResult complete(const Conversation& conversation) override;

  // Request body for a conversation, exposed for tests.
  nlohmann::json request_body(const Conversation& conversation) const;
  // Maps an HTTP status and body to a completion result.
  CompletionResult interpret(int status, const std::string& body) const;

 private:
  HttpProviderConfig config_;
  std::string api_key_;
};

// Default endpoints for the built-in priority names; keys come from
// ANTHROPIC_API_KEY, OPENAI_API_KEY and GEMINI_API_KEY.
std::vector<HttpProviderConfig> default_http_providers();

}  // namespace crs
