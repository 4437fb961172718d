// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <thread>

#include "crs/submission.hpp"
#include "test_support.hpp"

using namespace crs;
using crs::test::Gen;

namespace {

const std::string kTask = "task-1";

// Textbook quadratic edit distance, written independently of the service.
std::size_t dp_distance(const std::string& a, const std::string& b) {
  std::vector<std::vector<std::size_t>> d(a.size() + 1, std::vector<std::size_t>(b.size() + 1));
  for (std::size_t i = 0; i <= a.size(); ++i) d[i][0] = i;
  for (std::size_t j = 0; j <= b.size(); ++j) d[0][j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = d[i - 1][j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      d[i][j] = std::min({d[i - 1][j] + 1, d[i][j - 1] + 1, sub});
    }
  }
  return d[a.size()][b.size()];
}

CrashSignature sig(int line, const std::string& file = "src/a.c") {
  return CrashSignature::location(file, line, Sanitizer::Address);
}

std::string report_at(const std::string& file, int line) {
  return "==1==ERROR: AddressSanitizer: heap-buffer-overflow\n    #0 0x1 in f /src/p/" + file + ":" +
         std::to_string(line) + ":3\n";
}

PovSubmission pov(const std::string& id, CrashSignature s, std::string report = "") {
  PovSubmission p;
  p.pov_id = id;
  p.task_id = kTask;
  p.target = {"fuzz", Sanitizer::Address, kTask};
  p.input_blob = to_bytes("AAAA");
  p.signature = s;
  p.crash_report = report.empty() ? report_at(*s.file, *s.line) : report;
  p.originating_strategy = "test";
  return p;
}

std::string diff_with(const std::string& line) {
  return "--- a/src/a.c\n+++ b/src/a.c\n@@ -1,1 +1,1 @@\n-int old;\n+" + line + "\n";
}

PatchSubmission patch(const std::string& id, std::optional<CrashSignature> s, const std::string& line,
                      bool xpatch = false) {
  PatchSubmission p;
  p.patch_id = id;
  p.task_id = kTask;
  p.diff_text = diff_with(line);
  p.pov_signature = s;
  p.is_xpatch = xpatch;
  return p;
}

SarifRecord sarif(const std::string& id, const std::string& file, int start, int end) {
  SarifRecord r;
  r.sarif_id = id;
  r.task_id = kTask;
  r.locations.push_back({file, start, end});
  r.verdict = SarifVerdict::TruePositive;
  r.description = "overflow in f";
  return r;
}

std::shared_ptr<ScriptedProvider> voter(const std::string& name, std::vector<ScriptEntry> script) {
  return std::make_shared<ScriptedProvider>(name, std::move(script));
}

ScriptEntry error_entry() { return {CompletionResult(ProviderError{ProviderErrorKind::Overloaded, "busy"}), {}}; }

struct Fixture {
  SimulatedClock clock{test::t0()};
  LabCompetitionClient client;
  SubmissionService service;
  explicit Fixture(std::vector<ProviderHandle*> evaluators = {}, ProviderHandle* matcher = nullptr,
                   SubmissionConfig config = {})
      : service(client, clock, config, std::move(evaluators), matcher) {
    ChallengeTask t;
    t.task_id = kTask;
    t.mode = ChallengeMode::FullScan;
    t.harness_names = {"fuzz"};
    t.time_window = minutes(60);
    t.received_at = test::t0();
    service.register_task(t);
  }
};

}  // namespace

TEST_CASE("levenshtein examples", "[submission]") {
  REQUIRE(levenshtein("", "abc") == 3);
  REQUIRE(levenshtein("kitten", "sitting") == 3);
  REQUIRE(levenshtein("same", "same") == 0);
  REQUIRE(levenshtein_capped("kitten", "sitting", 2) == 2);
}

TEST_CASE("levenshtein agrees with the DP oracle on random pairs", "[submission][property]") {
  Gen g(1234);
  for (int i = 0; i < 1000; ++i) {
    std::string a = g.word(0, 12, "abc"), b = g.word(0, 12, "abc");
    auto expect = dp_distance(a, b);
    REQUIRE(levenshtein(a, b) == expect);
    REQUIRE(levenshtein(b, a) == expect);
    REQUIRE(levenshtein_capped(a, b, 10) == std::min<std::size_t>(expect, 10));
  }
}

TEST_CASE("evaluator majority for POV equivalence", "[submission]") {
  auto run = [](std::vector<ScriptEntry> a, std::vector<ScriptEntry> b, std::vector<ScriptEntry> c) {
    auto e1 = voter("e1", std::move(a)), e2 = voter("e2", std::move(b)), e3 = voter("e3", std::move(c));
    return judge_pov_equivalence("report a", "report b", {e1.get(), e2.get(), e3.get()});
  };
  REQUIRE(run(test::replies({"yes"}), test::replies({"yes"}), test::replies({"no"})));
  REQUIRE_FALSE(run(test::replies({"yes"}), test::replies({"no"}), {error_entry()}));
  REQUIRE_FALSE(run(test::replies({"no"}), test::replies({"no"}), test::replies({"no"})));
  REQUIRE_FALSE(run(test::replies({"yes"}), test::replies({"I cannot tell"}), test::replies({"no"})));
}

TEST_CASE("first POV is accepted, same signature is a duplicate", "[submission]") {
  Fixture f;
  auto d1 = f.service.submit_pov(pov("pov-1", sig(10)));
  REQUIRE(d1.accepted());
  auto d2 = f.service.submit_pov(pov("pov-2", sig(10)));
  REQUIRE(d2.kind == Decision::Kind::Duplicate);
  REQUIRE(d2.of_id == "pov-1");
  auto d3 = f.service.submit_pov(pov("pov-3", sig(11)));
  REQUIRE(d3.accepted());
  auto ledger = f.service.ledger(kTask);
  REQUIRE(ledger.acc == 2);
  REQUIRE(ledger.inacc == 0);  // duplicates are not inaccurate
  REQUIRE(f.client.calls(LabCompetitionClient::Pov) == 2);
}

TEST_CASE("two of three evaluators can mark a distinct signature redundant", "[submission]") {
  auto e1 = voter("e1", test::replies({"yes"})), e2 = voter("e2", test::replies({"yes"})),
       e3 = voter("e3", test::replies({"no"}));
  Fixture f({e1.get(), e2.get(), e3.get()});
  REQUIRE(f.service.submit_pov(pov("pov-1", sig(10))).accepted());
  auto d = f.service.submit_pov(pov("pov-2", sig(20)));
  REQUIRE(d.kind == Decision::Kind::Duplicate);
  REQUIRE(d.of_id == "pov-1");
}

TEST_CASE("failed POVs count as inaccurate", "[submission]") {
  Fixture f;
  f.client.script(LabCompetitionClient::Pov, {ScriptedOutcome::Failed});
  auto d = f.service.submit_pov(pov("pov-1", sig(10)));
  REQUIRE(d.kind == Decision::Kind::Failed);
  REQUIRE(f.service.ledger(kTask).inacc == 1);
  // A later POV with the same signature is still eligible.
  REQUIRE(f.service.submit_pov(pov("pov-2", sig(10))).accepted());
}

TEST_CASE("transient client failures are retried then rejected", "[submission]") {
  Fixture f;
  f.client.script(LabCompetitionClient::Pov, {ScriptedOutcome::Transient, ScriptedOutcome::Transient,
                                              ScriptedOutcome::Transient, ScriptedOutcome::Transient});
  auto start = f.clock.now();
  auto d = f.service.submit_pov(pov("pov-1", sig(10)));
  REQUIRE(d.kind == Decision::Kind::Rejected);
  REQUIRE(d.reason == "transient");
  REQUIRE(f.clock.now() - start == seconds(1 + 2 + 4));  // exponential backoff
  REQUIRE(f.service.submit_pov(pov("pov-1", sig(10))).accepted());  // retry later works

  Fixture g;
  g.client.script(LabCompetitionClient::Pov, {ScriptedOutcome::Transient, ScriptedOutcome::Passed});
  REQUIRE(g.service.submit_pov(pov("pov-1", sig(10))).accepted());
}

TEST_CASE("patch dedup by edit distance", "[submission]") {
  Fixture f;
  REQUIRE(f.service.submit_patch(patch("patch-1", sig(10), "int fixed = 1;")).accepted());
  f.clock.advance(seconds(60));
  auto d = f.service.submit_patch(patch("patch-2", sig(10), "int fixed = 1;"));
  REQUIRE(d.kind == Decision::Kind::Duplicate);
  auto near = f.service.submit_patch(patch("patch-3", sig(30), "int fixed = 12;"));  // distance 1
  REQUIRE(near.kind == Decision::Kind::Duplicate);
  auto far = f.service.submit_patch(patch("patch-4", sig(30), "return check_bounds(len, sizeof buf);"));
  REQUIRE(far.accepted());
}

TEST_CASE("second patch for a signature within three seconds is discarded", "[submission]") {
  Fixture f;
  REQUIRE(f.service.submit_patch(patch("patch-1", sig(10), "aaaaaaaaaaaaaaaa")).accepted());
  f.clock.advance(seconds(2));
  auto d = f.service.submit_patch(patch("patch-2", sig(10), "bbbbbbbbbbbbbbbb"));
  REQUIRE(d.kind == Decision::Kind::Duplicate);
  f.clock.advance(seconds(1));  // exactly 3 s after the first: still inside
  REQUIRE(f.service.submit_patch(patch("patch-3", sig(10), "cccccccccccccccc")).kind == Decision::Kind::Duplicate);
  f.clock.advance(Duration{1});
  REQUIRE(f.service.submit_patch(patch("patch-4", sig(10), "dddddddddddddddd")).accepted());
  // Different signature inside the window is fine.
  REQUIRE(f.service.submit_patch(patch("patch-5", sig(11), "eeeeeeeeeeeeeeee")).accepted());
}

TEST_CASE("five patches per vulnerability, three XPatches per task", "[submission]") {
  Fixture f;
  for (int i = 0; i < 5; ++i) {
    f.clock.advance(seconds(10));
    auto line = std::string(16, static_cast<char>('a' + i));
    REQUIRE(f.service.submit_patch(patch("patch-" + std::to_string(i), sig(10), line)).accepted());
  }
  f.clock.advance(seconds(10));
  auto sixth = f.service.submit_patch(patch("patch-6", sig(10), std::string(16, 'z')));
  REQUIRE(sixth.kind == Decision::Kind::Duplicate);
  REQUIRE(f.service.ledger(kTask).patch_count.at(sig(10).key()) == 5);

  for (int i = 0; i < 3; ++i) {
    auto line = std::string(16, static_cast<char>('k' + i));
    REQUIRE(f.service.submit_patch(patch("x-" + std::to_string(i), std::nullopt, line, true)).accepted());
  }
  auto fourth = f.service.submit_patch(patch("x-4", std::nullopt, std::string(16, 'y'), true));
  REQUIRE(fourth.kind == Decision::Kind::Duplicate);
  REQUIRE(f.service.ledger(kTask).xpatch_count == 3);
}

TEST_CASE("caps hold under 100 concurrent submitters", "[submission][concurrency]") {
  Fixture f;
  // Failed answers keep every diff eligible, so only the caps limit forwarding.
  f.client.script(LabCompetitionClient::Patch, std::vector<ScriptedOutcome>(200, ScriptedOutcome::Failed));
  std::vector<std::thread> threads;
  for (int i = 0; i < 100; ++i) {
    threads.emplace_back([&f, i] {
      f.service.submit_patch(patch("p-" + std::to_string(i), sig(10), "same"));
      f.service.submit_patch(patch("x-" + std::to_string(i), std::nullopt, "same", true));
      f.service.submit_pov(pov("pov-" + std::to_string(i), sig(50)));
    });
  }
  for (auto& t : threads) t.join();
  auto ledger = f.service.ledger(kTask);
  REQUIRE(ledger.patch_count.at(sig(10).key()) == 5);
  REQUIRE(ledger.xpatch_count == 3);
  REQUIRE(f.client.calls(LabCompetitionClient::Patch) == 8);
  REQUIRE(ledger.accepted_povs.at(sig(50).key()).size() == 1);
  REQUIRE(f.client.calls(LabCompetitionClient::Pov) == 1);
}

TEST_CASE("decisions are deterministic for a fixed order", "[submission][property]") {
  auto run = [] {
    Fixture f;
    std::vector<std::string> kinds;
    Gen g(5);
    for (int i = 0; i < 60; ++i) {
      f.clock.advance(Duration{g.range(0, 4000)});
      if (g.coin()) {
        kinds.push_back(to_string(f.service.submit_pov(pov("pov-" + std::to_string(i), sig(g.range(1, 8)))).kind));
      } else {
        auto line = g.word(4, 14, "ab");
        kinds.push_back(
            to_string(f.service.submit_patch(patch("patch-" + std::to_string(i), sig(g.range(1, 8)), line)).kind));
      }
    }
    return std::make_pair(kinds, f.service.ledger_doc(kTask).dump());
  };
  REQUIRE(run() == run());
}

TEST_CASE("SARIF matched to a POV by crash location", "[submission]") {
  PovSubmission p = pov("pov-1", sig(42, "src/http.c"));
  REQUIRE(sarif_location_in_report(sarif("s", "src/http.c", 40, 44), p));
  REQUIRE_FALSE(sarif_location_in_report(sarif("s", "src/http.c", 43, 50), p));
  REQUIRE_FALSE(sarif_location_in_report(sarif("s", "src/other.c", 40, 44), p));

  auto yes = voter("m", test::replies({"yes, the same vulnerability"}));
  REQUIRE(match_sarif_to_pov(sarif("s", "src/other.c", 1, 2), p, yes.get()));
  auto no = voter("m", test::replies({"no"}));
  REQUIRE_FALSE(match_sarif_to_pov(sarif("s", "src/other.c", 1, 2), p, no.get()));
  auto broken = voter("m", {error_entry()});
  REQUIRE_FALSE(match_sarif_to_pov(sarif("s", "src/other.c", 1, 2), p, broken.get()));
  REQUIRE_FALSE(match_sarif_to_pov(sarif("s", "src/other.c", 1, 2), p, nullptr));
  // Stage 1 hit never consults the evaluator.
  auto unused = voter("m", test::replies({"no"}));
  REQUIRE(match_sarif_to_pov(sarif("s", "src/http.c", 42, 42), p, unused.get()));
  REQUIRE(unused->calls() == 0);
}

TEST_CASE("bundle rules", "[submission]") {
  IdGenerator ids;
  auto loc_match = [](const SarifRecord& s, const PovSubmission& p) { return sarif_location_in_report(s, p); };

  SECTION("POV after a confirmed SARIF creates a two-member bundle") {
    BundleBook book(kTask, &ids);
    REQUIRE(book.sarif_confirmed(sarif("s1", "src/a.c", 10, 10), loc_match).empty());
    auto m = book.pov_passed(pov("pov-1", sig(10)), loc_match);
    REQUIRE(m.size() == 1);
    REQUIRE(m[0].kind == BundleMutation::Kind::Created);
    REQUIRE(m[0].bundle.pov_id == "pov-1");
    REQUIRE(m[0].bundle.sarif_id == "s1");
    REQUIRE(m[0].bundle.canonical_signature == sig(10));
  }
  SECTION("patch extends a POV+SARIF bundle to three members") {
    BundleBook book(kTask, &ids);
    book.pov_passed(pov("pov-1", sig(10)), loc_match);
    auto s = book.sarif_confirmed(sarif("s1", "src/a.c", 9, 11), loc_match);
    REQUIRE(s.size() == 1);
    auto m = book.patch_passed(patch("patch-1", sig(10), "x"));
    REQUIRE(m.size() == 1);
    REQUIRE(m[0].kind == BundleMutation::Kind::Extended);
    REQUIRE(m[0].bundle.member_count() == 3);
    REQUIRE(m[0].bundle.bundle_id == s[0].bundle.bundle_id);
    REQUIRE(book.bundles().size() == 1);
  }
  SECTION("SARIF without a matching POV changes nothing") {
    BundleBook book(kTask, &ids);
    book.pov_passed(pov("pov-1", sig(10)), loc_match);
    REQUIRE(book.sarif_confirmed(sarif("s1", "src/zzz.c", 1, 100), loc_match).empty());
    REQUIRE(book.bundles().empty());  // a lone POV is pending, not exported
  }
  SECTION("distinct signatures never share a bundle") {
    BundleBook book(kTask, &ids);
    book.pov_passed(pov("pov-1", sig(10)), loc_match);
    book.pov_passed(pov("pov-2", sig(20)), loc_match);
    book.patch_passed(patch("patch-1", sig(10), "x"));
    book.patch_passed(patch("patch-2", sig(20), "y"));
    auto all = book.bundles();
    REQUIRE(all.size() == 2);
    for (const auto& b : all) {
      REQUIRE_NOTHROW(validate(b));
      REQUIRE(b.member_count() == 2);
    }
    REQUIRE_FALSE(all[0].canonical_signature == all[1].canonical_signature);
  }
}

TEST_CASE("service bundles POV, SARIF and patch and scores them", "[submission]") {
  Fixture f;
  REQUIRE(f.service.submit_pov(pov("pov-1", sig(10))).accepted());
  f.clock.advance(minutes(6));
  REQUIRE(f.service.submit_sarif_assessment(sarif("s1", "src/a.c", 10, 10)).accepted());
  f.clock.advance(minutes(6));
  REQUIRE(f.service.submit_patch(patch("patch-1", sig(10), "fixed")).accepted());
  auto bundles = f.service.bundles(kTask);
  REQUIRE(bundles.size() == 1);
  REQUIRE(bundles[0].member_count() == 3);
  REQUIRE(f.client.calls(LabCompetitionClient::BundleKind) == 2);  // created, then extended

  // tau at t: 0.5 + (60 - t) / 120, with t in minutes.
  auto tau = [](double t) { return 0.5 + (60.0 - t) / 120.0; };
  auto s = f.service.score(kTask);
  REQUIRE_THAT(s.vds, Catch::Matchers::WithinAbs(2 * tau(0), 1e-12));
  REQUIRE_THAT(s.sas, Catch::Matchers::WithinAbs(tau(6), 1e-12));
  REQUIRE_THAT(s.prs, Catch::Matchers::WithinAbs(6 * tau(12), 1e-12));
  REQUIRE_THAT(s.bdl, Catch::Matchers::WithinAbs(tau(12), 1e-12));
  REQUIRE_THAT(s.total, Catch::Matchers::WithinAbs(2 * tau(0) + tau(6) + 7 * tau(12), 1e-12));

  // The ledger document rescored offline gives the same components.
  auto doc = f.service.ledger_doc(kTask);
  REQUIRE(score_from_document(json::parse(doc.dump())) == s);
}

TEST_CASE("SARIF assessments are submitted once", "[submission]") {
  Fixture f;
  auto rec = sarif("s1", "src/a.c", 1, 2);
  auto first = f.service.submit_sarif_assessment(rec);
  REQUIRE(first.accepted());
  rec.verdict = SarifVerdict::FalsePositive;
  auto again = f.service.submit_sarif_assessment(rec);
  REQUIRE(again.external_id == first.external_id);
  REQUIRE(f.client.calls(LabCompetitionClient::Sarif) == 1);
  REQUIRE(f.service.sarif_verdict(kTask, "s1") == SarifVerdict::TruePositive);

  rec.sarif_id = "s2";
  rec.verdict = SarifVerdict::Deferred;
  REQUIRE(f.service.submit_sarif_assessment(rec).kind == Decision::Kind::Rejected);
}

TEST_CASE("invalid submissions are rejected without reaching the client", "[submission]") {
  Fixture f;
  auto p = pov("pov-1", sig(10));
  p.input_blob.clear();
  REQUIRE(f.service.submit_pov(p).kind == Decision::Kind::Rejected);
  auto x = patch("x", sig(10), "a", true);  // XPatch with a signature
  REQUIRE(f.service.submit_patch(x).kind == Decision::Kind::Rejected);
  REQUIRE(f.client.calls(LabCompetitionClient::Pov) == 0);
  REQUIRE(f.client.calls(LabCompetitionClient::Patch) == 0);
}
