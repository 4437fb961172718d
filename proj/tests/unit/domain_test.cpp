// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "crs/domain.hpp"
#include "test_support.hpp"

using namespace crs;
using crs::test::Gen;

namespace {

const std::vector<Sanitizer> kSanitizers{Sanitizer::Address, Sanitizer::Memory, Sanitizer::UndefinedBehavior,
                                         Sanitizer::Jazzer};
const std::vector<SubmissionStatus> kStatuses{SubmissionStatus::Pending, SubmissionStatus::Passed,
                                              SubmissionStatus::Failed, SubmissionStatus::Duplicate};
const std::vector<TriState> kTri{TriState::Unknown, TriState::Pass, TriState::Fail};

const char* kDiff =
    "--- a/src/a.c\n+++ b/src/a.c\n@@ -1,2 +1,2 @@\n-int x = 1;\n+int x = 2;\n int y;\n";

std::string path(Gen& g) { return "src/" + g.word(1, 8) + (g.coin() ? ".c" : ".h"); }

CrashSignature gen_signature(Gen& g) {
  if (g.coin()) return CrashSignature::location(path(g), g.range(1, 5000), g.pick(kSanitizers));
  return CrashSignature::heuristic(g.word(16, 16, "0123456789abcdef"), g.pick(kSanitizers));
}

Timestamp gen_time(Gen& g) { return timestamp_ms(1700000000000LL + g.range(0, 1 << 30)); }

FuzzerTarget gen_target(Gen& g, const std::string& task) {
  return {"fuzz_" + g.word(1, 6), g.pick(kSanitizers), task};
}

ChallengeTask gen_task(Gen& g) {
  ChallengeTask t;
  t.task_id = "task-" + g.word(1, 6);
  t.mode = g.pick(std::vector<ChallengeMode>{ChallengeMode::DeltaScan, ChallengeMode::FullScan,
                                             ChallengeMode::SarifAssessment});
  t.project_name = g.word(1, 10);
  t.repo_root = "/work/" + g.word(1, 10);
  if (g.coin()) t.base_state_ref = g.word(7, 7, "0123456789abcdef");
  if (t.mode == ChallengeMode::DeltaScan || g.coin()) t.commit_diff = kDiff;
  for (int i = g.range(1, 4); i > 0; --i) t.harness_names.push_back("fuzz_" + g.word(1, 6));
  t.language = g.coin() ? Language::C_CPP : Language::Java;
  t.time_window = Duration{g.range(1, 1 << 30)};
  t.received_at = gen_time(g);
  return t;
}

PovSubmission gen_pov(Gen& g) {
  PovSubmission p;
  p.pov_id = "pov-" + std::to_string(g.range(1, 999));
  p.task_id = "task-" + g.word(1, 4);
  p.target = gen_target(g, p.task_id);
  p.input_blob = g.bytes(1, 64);
  p.crash_report = "==1==ERROR: " + g.word(0, 40, "abc \n:#0x123");
  p.signature = gen_signature(g);
  p.status = g.pick(kStatuses);
  p.submitted_at = gen_time(g);
  p.originating_strategy = g.word(1, 10);
  return p;
}

PatchSubmission gen_patch(Gen& g) {
  PatchSubmission p;
  p.patch_id = "patch-" + std::to_string(g.range(1, 999));
  p.task_id = "task-" + g.word(1, 4);
  p.diff_text = kDiff;
  p.is_xpatch = g.coin();
  if (!p.is_xpatch && g.coin()) p.pov_signature = gen_signature(g);
  p.status = g.pick(kStatuses);
  p.submitted_at = gen_time(g);
  p.validation = {g.pick(kTri), g.pick(kTri), g.pick(kTri), g.pick(kTri)};
  return p;
}

SarifRecord gen_sarif(Gen& g) {
  SarifRecord r;
  r.sarif_id = "sarif-" + g.word(1, 4);
  r.task_id = "task-" + g.word(1, 4);
  for (int i = g.range(0, 3); i > 0; --i) r.affected_functions.push_back({g.word(1, 8), path(g)});
  for (int i = g.range(r.affected_functions.empty() ? 1 : 0, 3); i > 0; --i) {
    int s = g.range(1, 100);
    r.locations.push_back({path(g), s, s + g.range(0, 10)});
  }
  for (int i = g.range(0, 2); i > 0; --i) r.cwe_ids.push_back("CWE-" + std::to_string(g.range(1, 999)));
  if (g.coin()) r.severity = g.coin() ? "error" : "warning";
  if (g.coin()) r.stack_trace = std::vector<std::string>{path(g) + ":3"};
  r.verdict = g.pick(std::vector<SarifVerdict>{SarifVerdict::Undecided, SarifVerdict::TruePositive,
                                               SarifVerdict::FalsePositive, SarifVerdict::Deferred});
  r.description = g.word(0, 30, "ab cd");
  return r;
}

Bundle gen_bundle(Gen& g) {
  Bundle b;
  b.bundle_id = "bundle-" + std::to_string(g.range(1, 99));
  b.canonical_signature = gen_signature(g);
  int mask = g.range(1, 7);
  if (mask & 1) b.pov_id = "pov-1";
  if (mask & 2) b.patch_id = "patch-1";
  if (mask & 4) b.sarif_id = "sarif-1";
  return b;
}

FunctionRecord gen_function(Gen& g) {
  FunctionRecord f;
  f.name = g.word(1, 10);
  f.file = path(g);
  f.start_line = g.range(1, 500);
  f.end_line = f.start_line + g.range(0, 50);
  if (g.coin()) f.source = "int " + f.name + "() { return 0; }";
  if (g.coin()) f.parameters = std::vector<std::string>{"int a", "char *b"};
  return f;
}

template <typename T>
void check_round_trip(const T& v) {
  json doc = serialize(v);
  // Through text as well, so the document survives an actual wire.
  T back = deserialize<T>(json::parse(doc.dump()));
  REQUIRE(back == v);
}

}  // namespace

TEST_CASE("location signature survives serialization", "[domain]") {
  check_round_trip(CrashSignature::location("src/a.c", 42, Sanitizer::Address));
}

TEST_CASE("empty score inputs survive serialization", "[domain]") {
  ScoreInputs in{0, 0, Duration{0}, minutes(60)};
  check_round_trip(in);
}

TEST_CASE("bundle with only a POV is rejected", "[domain]") {
  Bundle b{"bundle-1", CrashSignature::location("src/a.c", 1, Sanitizer::Address), "pov-1", std::nullopt,
           std::nullopt};
  REQUIRE_THROWS_AS(validate(b), InvariantError);
  b.patch_id = "patch-1";
  REQUIRE_NOTHROW(validate(b));
}

TEST_CASE("every domain type round-trips under random generation", "[domain][property]") {
  Gen g(20240601);
  for (int i = 0; i < 300; ++i) {
    check_round_trip(gen_signature(g));
    check_round_trip(gen_task(g));
    check_round_trip(gen_target(g, "t"));
    check_round_trip(gen_pov(g));
    check_round_trip(gen_patch(g));
    check_round_trip(gen_sarif(g));
    check_round_trip(gen_bundle(g));
    check_round_trip(gen_function(g));
    check_round_trip(ScoreInputs{static_cast<std::uint64_t>(g.range(0, 50)),
                                 static_cast<std::uint64_t>(g.range(0, 50)), Duration{g.range(0, 1000)},
                                 Duration{g.range(1000, 5000)}});
    check_round_trip(ScoreComponents{g.range(0, 4) * 0.5, g.range(0, 12) * 0.5, 0.75, 1.0, 0.875, 7.5});
    check_round_trip(ValidationRecord{g.pick(kTri), g.pick(kTri), g.pick(kTri), g.pick(kTri)});
  }
}

TEST_CASE("call graphs and paths round-trip", "[domain][property]") {
  Gen g(7);
  for (int i = 0; i < 50; ++i) {
    CallGraph graph = test::random_graph(g, static_cast<std::size_t>(g.range(1, 10)), 0.3);
    check_round_trip(graph);
    CallPath p{{graph.functions()[0]}};
    check_round_trip(p);
  }
  CallGraph with_unresolved({{"e", "a.c", 1, 2, std::nullopt, std::nullopt}}, {}, {{"h", 0}}, {"lost"});
  check_round_trip(with_unresolved);
}

TEST_CASE("unknown enum names are parse errors", "[domain]") {
  json doc = serialize(CrashSignature::location("a.c", 1, Sanitizer::Address));
  doc["sanitizer"] = "Thread";
  REQUIRE_THROWS_AS(deserialize<CrashSignature>(doc), ParseError);
}

TEST_CASE("task invariants", "[domain]") {
  ChallengeTask t;
  t.task_id = "t";
  t.mode = ChallengeMode::DeltaScan;
  t.harness_names = {"h"};
  t.time_window = minutes(10);
  REQUIRE_THROWS_AS(validate(t), InvariantError);  // delta without a diff
  t.commit_diff = kDiff;
  REQUIRE_NOTHROW(validate(t));
  t.time_window = Duration{0};
  REQUIRE_THROWS_AS(validate(t), InvariantError);
  t.time_window = minutes(10);
  t.harness_names.clear();
  REQUIRE_THROWS_AS(validate(t), InvariantError);
  t.mode = ChallengeMode::SarifAssessment;
  REQUIRE_NOTHROW(validate(t));
}

TEST_CASE("Jazzer iff Java", "[domain]") {
  REQUIRE_NOTHROW(validate(FuzzerTarget{"h", Sanitizer::Jazzer, "t"}, Language::Java));
  REQUIRE_THROWS_AS(validate(FuzzerTarget{"h", Sanitizer::Address, "t"}, Language::Java), InvariantError);
  REQUIRE_THROWS_AS(validate(FuzzerTarget{"h", Sanitizer::Jazzer, "t"}, Language::C_CPP), InvariantError);
}

TEST_CASE("signature invariants and equality", "[domain]") {
  CrashSignature bad = CrashSignature::location("a.c", 1, Sanitizer::Address);
  bad.line.reset();
  REQUIRE_THROWS_AS(validate(bad), InvariantError);
  CrashSignature h = CrashSignature::heuristic("", Sanitizer::Address);
  REQUIRE_THROWS_AS(validate(h), InvariantError);

  auto a = CrashSignature::location("a.c", 3, Sanitizer::Address);
  auto b = a;
  b.fallback_digest = "ffff";
  REQUIRE(a == b);  // digest is irrelevant for Location
  REQUIRE(a.key() == b.key());
  auto c = a;
  c.sanitizer = Sanitizer::Memory;
  REQUIRE_FALSE(a == c);
}

TEST_CASE("status transitions only leave Pending", "[domain]") {
  for (auto from : kStatuses) {
    for (auto to : kStatuses) {
      bool legal = from == SubmissionStatus::Pending && to != SubmissionStatus::Pending;
      if (legal) {
        REQUIRE(checked_transition(from, to) == to);
      } else {
        REQUIRE_THROWS_AS(checked_transition(from, to), InvariantError);
      }
    }
  }
}

TEST_CASE("submission invariants", "[domain]") {
  Gen g(3);
  PovSubmission pov = gen_pov(g);
  pov.target.task_id = pov.task_id;
  pov.input_blob.clear();
  REQUIRE_THROWS_AS(validate(pov), InvariantError);

  PatchSubmission patch = gen_patch(g);
  patch.is_xpatch = true;
  patch.pov_signature = CrashSignature::location("a.c", 1, Sanitizer::Address);
  REQUIRE_THROWS_AS(validate(patch), InvariantError);
  patch.pov_signature.reset();
  REQUIRE_NOTHROW(validate(patch));
  patch.diff_text = "not a diff at all";
  REQUIRE_THROWS_AS(validate(patch), InvariantError);
}

TEST_CASE("validation record is valid only when all four pass", "[domain][property]") {
  for (auto a : kTri)
    for (auto b : kTri)
      for (auto c : kTri)
        for (auto d : kTri) {
          ValidationRecord r{a, b, c, d};
          bool all = a == TriState::Pass && b == TriState::Pass && c == TriState::Pass && d == TriState::Pass;
          REQUIRE(r.valid() == all);
        }
}

TEST_CASE("score components and inputs invariants", "[domain]") {
  REQUIRE_THROWS_AS(validate(ScoreInputs{0, 0, minutes(11), minutes(10)}), InvariantError);
  REQUIRE_THROWS_AS(validate(ScoreComponents{1, 0, 0, 0, 0.5, 0.5}), InvariantError);
  REQUIRE_THROWS_AS(validate(ScoreComponents{1, 0, 0, 0, 1.0, 3.0}), InvariantError);
  REQUIRE_THROWS_AS(validate(ScoreComponents{-1, 0, 0, 0, 1.0, -1.0}), InvariantError);
  REQUIRE_NOTHROW(validate(ScoreComponents{2, 6, 1, 1, 1.0, 10.0}));
}

TEST_CASE("SARIF record needs functions or locations", "[domain]") {
  SarifRecord r;
  r.sarif_id = "s";
  REQUIRE_THROWS_AS(validate(r), InvariantError);
  r.locations.push_back({"a.c", 5, 3});
  REQUIRE_THROWS_AS(validate(r), InvariantError);
  r.locations[0].end_line = 9;
  REQUIRE_NOTHROW(validate(r));
}

TEST_CASE("call graph construction rejects bad structure", "[domain]") {
  FunctionRecord a{"a", "x.c", 1, 2, std::nullopt, std::nullopt};
  FunctionRecord b{"b", "x.c", 4, 6, std::nullopt, std::nullopt};
  REQUIRE_THROWS_AS(CallGraph({a, b}, {{0, 2}}, {{"h", 0}}), InvariantError);
  REQUIRE_THROWS_AS(CallGraph({a, b}, {}, {{"h", 5}}), InvariantError);
  REQUIRE_THROWS_AS(CallGraph({a, a}, {}, {{"h", 0}}), InvariantError);
  REQUIRE_THROWS_AS(CallGraph({a}, {}, {{"h", 0}}, {"h"}), InvariantError);

  CallGraph g({a, b}, {{0, 1}, {1, 0}}, {{"h", 0}});
  REQUIRE(g.has_edge(0, 1));
  REQUIRE_NOTHROW(validate(CallPath{{a, b}}, g));
  REQUIRE_THROWS_AS(validate(CallPath{{b, b}}, g), InvariantError);
  REQUIRE_NOTHROW(validate(CallPath{{a, b, a}}, g));
  REQUIRE_THROWS_AS(validate(CallPath{{a, b, a, b}}, g), InvariantError);  // intermediate equals an endpoint
  REQUIRE_THROWS_AS(validate(CallPath{}, g), InvariantError);
}
