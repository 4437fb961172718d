// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <catch_amalgamated.hpp>

#include <thread>

#include "crs/providers.hpp"
#include "crs/router.hpp"
#include "httplib.h"
#include "test_support.hpp"

using namespace crs;

namespace {

ScriptEntry fail(ProviderErrorKind k) { return {CompletionResult(ProviderError{k, "scripted"}), {}}; }

Conversation ask(const std::string& text = "hello") {
  Conversation c;
  c.system_prompt = "be brief";
  c.add_user(text);
  return c;
}

// Blocks for `delay` of real time, then answers.
class SlowProvider final : public ProviderHandle {
 public:
  SlowProvider(std::string name, std::chrono::milliseconds delay) : name_(std::move(name)), delay_(delay) {}
  const std::string& name() const override { return name_; }
  CompletionResult complete(const Conversation&) override {
    std::this_thread::sleep_for(delay_);
    return std::string("late");
  }

 private:
  std::string name_;
  std::chrono::milliseconds delay_;
};

}  // namespace

TEST_CASE("fallback to the next provider", "[router]") {
  ProviderRegistry reg;
  auto a = std::make_shared<ScriptedProvider>("a", std::vector<ScriptEntry>{fail(ProviderErrorKind::RateLimited)});
  auto b = std::make_shared<ScriptedProvider>("b", test::replies({"from b"}));
  reg.add(a);
  reg.add(b);
  RouterLog log;
  auto r = route_complete(ask(), {{"a", "b"}}, reg, {}, &log);
  REQUIRE(r.provider == "b");
  REQUIRE(r.text == "from b");
  auto entries = log.entries();
  REQUIRE(entries.size() == 1);
  REQUIRE(entries[0].size() == 2);
  REQUIRE(entries[0][0].error == ProviderErrorKind::RateLimited);
}

TEST_CASE("first provider answering stops the route", "[router]") {
  ProviderRegistry reg;
  auto a = std::make_shared<ScriptedProvider>("a", test::replies({"from a"}));
  auto b = std::make_shared<ScriptedProvider>("b", test::replies({"from b"}));
  reg.add(a);
  reg.add(b);
  auto r = route_complete(ask(), {{"a", "b"}}, reg);
  REQUIRE(r.provider == "a");
  REQUIRE(b->calls() == 0);
}

TEST_CASE("all five failing raises exhaustion with every kind", "[router]") {
  ProviderRegistry reg;
  std::vector<ProviderErrorKind> kinds{ProviderErrorKind::RateLimited, ProviderErrorKind::Overloaded,
                                       ProviderErrorKind::Timeout, ProviderErrorKind::Unavailable,
                                       ProviderErrorKind::Malformed};
  auto names = ModelPriorityList::defaults();
  REQUIRE(names.names == std::vector<std::string>{"claude-3.7", "chatgpt-latest", "claude-opus-4", "o3",
                                                  "gemini-2.5-pro"});
  for (std::size_t i = 0; i < 5; ++i) {
    reg.add(std::make_shared<ScriptedProvider>(names.names[i], std::vector<ScriptEntry>{fail(kinds[i])}));
  }
  try {
    route_complete(ask(), names, reg);
    FAIL("expected exhaustion");
  } catch (const AllProvidersExhausted& e) {
    REQUIRE(e.attempts().size() == 5);
    for (std::size_t i = 0; i < 5; ++i) {
      REQUIRE(e.attempts()[i].first == names.names[i]);
      REQUIRE(e.attempts()[i].second == kinds[i]);
    }
  }
}

TEST_CASE("empty replies are malformed and fall through", "[router]") {
  ProviderRegistry reg;
  reg.add(std::make_shared<ScriptedProvider>("a", test::replies({"   \n"})));
  reg.add(std::make_shared<ScriptedProvider>("b", test::replies({"ok"})));
  RouterLog log;
  REQUIRE(route_complete(ask(), {{"a", "b"}}, reg, {}, &log).provider == "b");
  REQUIRE(log.entries()[0][0].error == ProviderErrorKind::Malformed);
}

TEST_CASE("hung providers time out at the attempt deadline", "[router]") {
  ProviderRegistry reg;
  reg.add(std::make_shared<SlowProvider>("slow", std::chrono::milliseconds(400)));
  reg.add(std::make_shared<ScriptedProvider>("b", test::replies({"fast"})));
  RouteOptions opts;
  opts.attempt_deadline = Duration{50};
  RouterLog log;
  auto start = std::chrono::steady_clock::now();
  auto r = route_complete(ask(), {{"slow", "b"}}, reg, opts, &log);
  REQUIRE(std::chrono::steady_clock::now() - start < std::chrono::milliseconds(350));
  REQUIRE(r.provider == "b");
  REQUIRE(log.entries()[0][0].error == ProviderErrorKind::Timeout);
}

TEST_CASE("attempt order follows the priority list", "[router][property]") {
  test::Gen g(17);
  for (int round = 0; round < 200; ++round) {
    std::vector<std::string> names{"m0", "m1", "m2", "m3", "m4"};
    std::shuffle(names.begin(), names.end(), g.engine());
    std::size_t succeed_at = g.index(6);  // 5 means nobody answers
    ProviderRegistry reg;
    std::vector<std::shared_ptr<ScriptedProvider>> providers;
    for (std::size_t i = 0; i < names.size(); ++i) {
      auto entry = i == succeed_at ? test::replies({"yes"}) : std::vector<ScriptEntry>{fail(ProviderErrorKind::Overloaded)};
      providers.push_back(std::make_shared<ScriptedProvider>(names[i], entry));
      reg.add(providers.back());
    }
    RouterLog log;
    try {
      auto r = route_complete(ask(), {names}, reg, {}, &log);
      REQUIRE(r.provider == names[succeed_at]);
    } catch (const AllProvidersExhausted&) {
      REQUIRE(succeed_at == 5);
    }
    auto attempts = log.entries().at(0);
    REQUIRE(attempts.size() == std::min<std::size_t>(succeed_at + 1, 5));
    for (std::size_t i = 0; i < attempts.size(); ++i) REQUIRE(attempts[i].provider == names[i]);
    for (std::size_t i = 0; i < providers.size(); ++i) REQUIRE(providers[i]->calls() == (i <= succeed_at ? 1u : 0u));
  }
}

TEST_CASE("scripted provider semantics", "[router]") {
  ScriptedProvider one("p", test::replies({"A"}));
  REQUIRE(one.complete(ask()).text() == "A");
  auto second = one.complete(ask());
  REQUIRE_FALSE(second.ok());
  REQUIRE(second.error().kind == ProviderErrorKind::Unavailable);
  REQUIRE(one.over_consumed() == 1);

  ScriptedProvider two("q", {fail(ProviderErrorKind::Timeout), {CompletionResult(std::string("B")), {}}});
  REQUIRE(two.complete(ask()).error().kind == ProviderErrorKind::Timeout);
  REQUIRE(two.complete(ask()).text() == "B");
  REQUIRE(two.remaining() == 0);

  REQUIRE_THROWS_AS(register_scripted_provider("empty", {}), InvariantError);

  SimulatedClock clock(test::t0());
  auto slow = register_scripted_provider("s", test::replies({"x"}, seconds(30)), &clock);
  slow->complete(ask());
  REQUIRE(clock.now() - test::t0() == seconds(30));
}

TEST_CASE("concurrent consumers see the script in global call order", "[router][concurrency]") {
  std::vector<ScriptEntry> script;
  for (int i = 0; i < 400; ++i) script.push_back({CompletionResult(std::to_string(i)), {}});
  ScriptedProvider p("p", script);
  std::vector<std::vector<int>> seen(4);
  std::vector<std::thread> ts;
  for (int t = 0; t < 4; ++t) {
    ts.emplace_back([&, t] {
      for (int i = 0; i < 100; ++i) seen[t].push_back(std::stoi(p.complete(ask()).text()));
    });
  }
  for (auto& t : ts) t.join();
  std::vector<int> all;
  for (const auto& s : seen) {
    REQUIRE(std::is_sorted(s.begin(), s.end()));  // each consumer observes increasing positions
    all.insert(all.end(), s.begin(), s.end());
  }
  std::sort(all.begin(), all.end());
  for (int i = 0; i < 400; ++i) REQUIRE(all[i] == i);
  REQUIRE(p.remaining() == 0);
}

TEST_CASE("script documents", "[router]") {
  auto script = parse_script(json::parse(R"(["plain", {"response": "slow", "latency_ms": 5}, {"error": "RateLimited"}])"));
  REQUIRE(script.size() == 3);
  REQUIRE(script[0].result.text() == "plain");
  REQUIRE(script[1].latency == Duration{5});
  REQUIRE(script[2].result.error().kind == ProviderErrorKind::RateLimited);
  REQUIRE_THROWS(parse_script(json::parse(R"([{"error": "Sleepy"}])")));
}

TEST_CASE("priority list invariants and rotation", "[router]") {
  REQUIRE_THROWS_AS(validate(ModelPriorityList{}), InvariantError);
  REQUIRE_THROWS_AS(validate(ModelPriorityList{{"a", "a"}}), InvariantError);
  auto rotated = ModelPriorityList{{"a", "b", "c"}}.starting_at("b");
  REQUIRE(rotated.names == std::vector<std::string>{"b", "c", "a"});
}

TEST_CASE("conversations alternate roles starting with the user", "[router]") {
  Conversation c;
  REQUIRE_THROWS_AS(validate(c), InvariantError);
  c.add_user("a");
  c.add_assistant("b");
  REQUIRE_NOTHROW(validate(c));
  c.add_assistant("c");
  REQUIRE_THROWS_AS(validate(c), InvariantError);
}

TEST_CASE("yes/no parsing and fenced blocks", "[router]") {
  REQUIRE(parse_yes_no("Yes.") == true);
  REQUIRE(parse_yes_no("  NO, because") == false);
  REQUIRE(parse_yes_no("**yes**") == true);
  REQUIRE_FALSE(parse_yes_no("maybe").has_value());
  REQUIRE_FALSE(parse_yes_no("").has_value());

  REQUIRE(first_fenced_block("```py\nprint(1)\n```\n```sh\nls\n```") == "print(1)\n");
  REQUIRE_FALSE(first_fenced_block("just words").has_value());
  REQUIRE(fenced_blocks("```a\n1\n```x```b\n2\n```").size() == 2);
}

TEST_CASE("wire payloads for both dialects", "[router][http]") {
  HttpProviderConfig anthropic{"claude-3.7", WireDialect::Anthropic, "http://localhost", "/v1/messages", "m",
                               "", 100, seconds(5)};
  HttpProvider a(anthropic);
  Conversation c = ask("hi");
  auto body = a.request_body(c);
  REQUIRE(body["system"] == "be brief");
  REQUIRE(body["max_tokens"] == 100);
  REQUIRE(body["messages"].size() == 1);
  REQUIRE(a.interpret(200, R"({"content":[{"type":"text","text":"hello"}]})").text() == "hello");
  REQUIRE(a.interpret(429, "slow down").error().kind == ProviderErrorKind::RateLimited);
  REQUIRE(a.interpret(529, "").error().kind == ProviderErrorKind::Overloaded);
  REQUIRE(a.interpret(200, "not json").error().kind == ProviderErrorKind::Malformed);

  HttpProviderConfig openai = anthropic;
  openai.dialect = WireDialect::OpenAiChat;
  HttpProvider o(openai);
  auto ob = o.request_body(c);
  REQUIRE(ob["messages"].size() == 2);
  REQUIRE(ob["messages"][0]["role"] == "system");
  REQUIRE(o.interpret(200, R"({"choices":[{"message":{"content":"yo"}}]})").text() == "yo");
  REQUIRE(o.interpret(200, R"({"choices":[]})").error().kind == ProviderErrorKind::Malformed);
}

TEST_CASE("HTTP provider against a local endpoint", "[router][http]") {
  httplib::Server server;
  std::string seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen_body = req.body;
    res.set_content(R"({"choices":[{"message":{"content":"served"}}]})", "application/json");
  });
  server.Post("/busy", [](const httplib::Request&, httplib::Response& res) { res.status = 503; });
  int port = server.bind_to_any_port("127.0.0.1");
  std::thread t([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpProviderConfig cfg{"local", WireDialect::OpenAiChat, "http://127.0.0.1:" + std::to_string(port), "", "m",
                         "", 64, seconds(5)};
  HttpProvider ok(cfg);
  auto r = ok.complete(ask("ping"));
  REQUIRE(r.ok());
  REQUIRE(r.text() == "served");
  REQUIRE(json::parse(seen_body)["messages"][1]["content"] == "ping");

  cfg.path = "/busy";
  cfg.name = "busy";
  ProviderRegistry reg;
  reg.add(std::make_shared<HttpProvider>(cfg));
  reg.add(std::make_shared<ScriptedProvider>("backup", test::replies({"backup answer"})));
  REQUIRE(route_complete(ask(), {{"busy", "backup"}}, reg).provider == "backup");

  server.stop();
  t.join();
}
