// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include "crs/lab.hpp"
#include "crs/sarif.hpp"
#include "crs/signature.hpp"
#include "test_support.hpp"

using namespace crs;

namespace {

PovSubmission overflow_pov(const std::string& task_id) {
  auto lab = load_lab_target(test::fixture_path("targets/c-overflow/target.json"));
  Bytes input = to_bytes("TLV1\x40");
  input.resize(69, 'A');
  auto out = run_harness(lab, input);
  REQUIRE(out.crashed);
  PovSubmission pov;
  pov.pov_id = "pov-1";
  pov.task_id = task_id;
  pov.target = {"fuzz_record", Sanitizer::Address, task_id};
  pov.input_blob = input;
  pov.crash_report = out.text;
  pov.signature = parse_crash_report(out.text, Sanitizer::Address, lab.signature_markers);
  pov.status = SubmissionStatus::Passed;
  return pov;
}

SarifRecord fixture_record(const std::string& file, const std::string& id, const std::string& task = "t") {
  return parse_sarif(test::load_fixture_json("sarif/" + file), task, id);
}

SourceReader repo_reader() {
  return [](const std::string& file) -> std::optional<std::string> {
    auto p = test::fixture_path("targets/c-overflow/repo") / file;
    if (!fs::exists(p)) return std::nullopt;
    return test::read_text(p);
  };
}

// Evaluator answering the false-positive question with `fp` and the
// true-positive question with `tp`; "err" scripts a provider error.
std::shared_ptr<ScriptedProvider> evaluator(const std::string& name, const std::string& fp, const std::string& tp) {
  auto entry = [](const std::string& a) -> ScriptEntry {
    if (a == "err") return {CompletionResult(ProviderError{ProviderErrorKind::Overloaded, "busy"}), {}};
    return {CompletionResult(a), {}};
  };
  return std::make_shared<ScriptedProvider>(name, std::vector<ScriptEntry>{entry(fp), entry(tp)});
}

}  // namespace

TEST_CASE("parse examples", "[sarif]") {
  json minimal = json::parse(R"({"runs": [{"results": [{"message": {"text": "m"},
      "locations": [{"physicalLocation": {"artifactLocation": {"uri": "a.c"}, "region": {"startLine": 3}}}]}]}]})");
  auto r = parse_sarif(minimal, "t", "s");
  REQUIRE(r.locations.size() == 1);
  REQUIRE(r.locations[0].file == "a.c");
  REQUIRE(r.locations[0].start_line == 3);
  REQUIRE(r.affected_functions.empty());
  REQUIRE(r.verdict == SarifVerdict::Undecided);

  json cwe = json::parse(R"({"runs": [{"results": [{"ruleId": "CWE-125", "message": {"text": "read"},
      "locations": [{"physicalLocation": {"artifactLocation": {"uri": "b.c"}, "region": {"startLine": 9, "endLine": 11}},
                     "logicalLocations": [{"name": "get", "kind": "function"}]}]}]}]})");
  auto c = parse_sarif(cwe, "t", "s2");
  REQUIRE(c.cwe_ids == std::vector<std::string>{"CWE-125"});
  REQUIRE(c.affected_functions.size() == 1);
  REQUIRE(c.affected_functions[0].function_name == "get");

  REQUIRE_THROWS_AS(parse_sarif(json::parse(R"({"runs": []})"), "t", "s"), ParseError);
  REQUIRE_THROWS_AS(parse_sarif(json::parse(R"({"version": "2.1.0"})"), "t", "s"), ParseError);

  auto fixture = fixture_record("c-overflow-true.sarif.json", "sarif-1");
  REQUIRE(fixture.cwe_ids == std::vector<std::string>{"CWE-121"});
  REQUIRE(fixture.severity == "error");
  REQUIRE(fixture.description.find("memcpy") != std::string::npos);
}

TEST_CASE("several results get numbered ids", "[sarif]") {
  json doc = test::load_fixture_json("sarif/c-overflow-true.sarif.json");
  doc["runs"][0]["results"].push_back(doc["runs"][0]["results"][0]);
  auto all = parse_sarif_all(doc, "t", "s");
  REQUIRE(all.size() == 2);
  REQUIRE(all[0].sarif_id == "s-1");
  REQUIRE(all[1].sarif_id == "s-2");
}

TEST_CASE("consensus truth table over every vote combination", "[sarif][property]") {
  // Each of the six votes is yes, no or an abstention: 3^6 combinations.
  int seen[3] = {0, 0, 0};
  for (int code = 0; code < 729; ++code) {
    std::vector<Vote> votes;
    int c = code;
    std::vector<int> fp_yes_by, tp_yes_by;
    for (int e = 0; e < 3; ++e) {
      for (CheckKind k : {CheckKind::FalsePositiveCheck, CheckKind::TruePositiveCheck}) {
        int v = c % 3;
        c /= 3;
        std::optional<bool> answer = v == 0 ? std::optional<bool>() : std::optional<bool>(v == 1);
        votes.push_back({"e" + std::to_string(e), answer, k});
        if (v == 1) (k == CheckKind::TruePositiveCheck ? tp_yes_by : fp_yes_by).push_back(e);
      }
    }
    // Oracle: a check has a majority when two distinct evaluators affirm it.
    bool tp_majority = tp_yes_by.size() >= 2;
    bool fp_majority = fp_yes_by.size() >= 2;
    ConsensusVerdict expected = tp_majority == fp_majority ? ConsensusVerdict::Inconclusive
                                : tp_majority              ? ConsensusVerdict::TruePositive
                                                           : ConsensusVerdict::FalsePositive;
    auto got = consensus_from_votes(votes);
    REQUIRE(got == expected);
    ++seen[static_cast<int>(got)];
    // Vote order never matters.
    std::reverse(votes.begin(), votes.end());
    REQUIRE(consensus_from_votes(votes) == got);
  }
  REQUIRE(seen[0] > 0);
  REQUIRE(seen[1] > 0);
  REQUIRE(seen[2] > 0);
}

TEST_CASE("assessment examples with scripted evaluators", "[sarif]") {
  auto record = fixture_record("c-overflow-true.sarif.json", "sarif-1");
  auto graph = load_graph_file(test::fixture_path("graphs/c-overflow.json").string());

  auto a = evaluator("a", "no", "yes"), b = evaluator("b", "no", "yes"), c = evaluator("c", "No.", "Yes, clearly");
  auto unanimous = assess(record, &graph, {"fuzz_record"}, {a.get(), b.get(), c.get()}, repo_reader());
  REQUIRE(unanimous.verdict == ConsensusVerdict::TruePositive);
  REQUIRE(unanimous.reachable);
  REQUIRE(unanimous.votes.size() == 6);
  REQUIRE(unanimous.votes[0].check == CheckKind::FalsePositiveCheck);
  REQUIRE(unanimous.votes[0].evaluator == "a");
  // Evaluators see the excerpt around the flagged lines.
  auto question = a->transcript()[0].turns[0].content;
  REQUIRE(question.find("17 | ") != std::string::npos);
  REQUIRE(question.find("reachable from a fuzzer harness") != std::string::npos);

  auto d = evaluator("d", "yes", "yes"), e = evaluator("e", "yes", "yes"), f = evaluator("f", "no", "no");
  REQUIRE(assess(record, &graph, {"fuzz_record"}, {d.get(), e.get(), f.get()}, repo_reader()).verdict ==
          ConsensusVerdict::Inconclusive);

  auto g = evaluator("g", "err", "err"), h = evaluator("h", "err", "err"), i = evaluator("i", "no", "yes");
  auto errs = assess(record, &graph, {"fuzz_record"}, {g.get(), h.get(), i.get()}, repo_reader());
  REQUIRE(errs.verdict == ConsensusVerdict::Inconclusive);
  REQUIRE_FALSE(errs.votes[0].answer.has_value());

  // Unreachable findings are still validated.
  auto j = evaluator("j", "yes", "no"), k = evaluator("k", "yes", "no"), l = evaluator("l", "yes", "no");
  auto unreachable = assess(record, &graph, {"no_such_harness"}, {j.get(), k.get(), l.get()}, repo_reader());
  REQUIRE_FALSE(unreachable.reachable);
  REQUIRE(unreachable.verdict == ConsensusVerdict::FalsePositive);
}

TEST_CASE("source excerpts span twenty lines and stop at 200", "[sarif]") {
  SarifRecord r;
  r.locations = {{"big.c", 100, 100}, {"big.c", 400, 600}, {"gone.c", 1, 1}};
  std::string big;
  for (int i = 1; i <= 1000; ++i) big += "line" + std::to_string(i) + "\n";
  SourceReader reader = [&](const std::string& f) -> std::optional<std::string> {
    if (f == "big.c") return big;
    return std::nullopt;
  };
  auto text = source_excerpts(r, reader);
  REQUIRE(text.find("80 | line80\n") != std::string::npos);
  REQUIRE(text.find("\n79 | ") == std::string::npos);
  REQUIRE(text.find("120 | line120\n") != std::string::npos);
  REQUIRE(text.find("\n121 | ") == std::string::npos);
  int numbered = 0;
  for (const auto& line : split_lines(text)) numbered += line.find(" | ") != std::string::npos;
  REQUIRE(numbered == 200);
}

TEST_CASE("stage-1 matching on fixtures", "[sarif]") {
  auto pov = overflow_pov("t");
  auto tp = fixture_record("c-overflow-true.sarif.json", "sarif-tp");
  auto fp = fixture_record("c-overflow-false.sarif.json", "sarif-fp");
  REQUIRE(sarif_location_in_report(tp, pov));
  REQUIRE_FALSE(sarif_location_in_report(fp, pov));
  REQUIRE(match_sarif_to_pov(tp, pov, nullptr));
  REQUIRE_FALSE(match_sarif_to_pov(fp, pov, nullptr));
  // Another task's report never matches.
  auto other = fixture_record("c-overflow-true.sarif.json", "sarif-x", "other");
  REQUIRE_FALSE(match_sarif_to_pov(other, pov, nullptr));
}

TEST_CASE("POV arrival confirms matching pending records", "[sarif]") {
  auto pov = overflow_pov("t");
  auto tp = fixture_record("c-overflow-true.sarif.json", "sarif-tp");
  auto fp = fixture_record("c-overflow-false.sarif.json", "sarif-fp");
  tp.verdict = fp.verdict = SarifVerdict::Deferred;
  REQUIRE(on_pov_accepted(pov, {}, nullptr).empty());
  auto one = on_pov_accepted(pov, {tp}, nullptr);
  REQUIRE(one.size() == 1);
  REQUIRE(one[0].verdict == SarifVerdict::TruePositive);
  auto two = on_pov_accepted(pov, {fp, tp}, nullptr);
  REQUIRE(two.size() == 1);
  REQUIRE(two[0].sarif_id == "sarif-tp");
}

TEST_CASE("assessor lifecycle with deferral and confirmation", "[sarif]") {
  SimulatedClock clock(test::t0());
  LabCompetitionClient client;
  SubmissionService svc(client, clock);
  ChallengeTask task;
  task.task_id = "t";
  task.time_window = minutes(60);
  task.received_at = test::t0();
  svc.register_task(task);
  auto graph = load_graph_file(test::fixture_path("graphs/c-overflow.json").string());

  // Split votes on both records: both deferred.
  std::vector<ScriptEntry> split;
  for (int i = 0; i < 2; ++i) {
    split.push_back({CompletionResult(std::string("no")), {}});
    split.push_back({CompletionResult(std::string("no")), {}});
  }
  auto a = std::make_shared<ScriptedProvider>("a", split);
  auto b = std::make_shared<ScriptedProvider>("b", split);
  auto c = std::make_shared<ScriptedProvider>("c", split);
  SarifAssessor assessor(&svc, {a.get(), b.get(), c.get()}, nullptr, repo_reader());

  auto out_tp = assessor.ingest(fixture_record("c-overflow-true.sarif.json", "sarif-tp"), &graph, {"fuzz_record"});
  auto out_fp = assessor.ingest(fixture_record("c-overflow-false.sarif.json", "sarif-fp"), &graph, {"fuzz_record"});
  REQUIRE(out_tp.record.verdict == SarifVerdict::Deferred);
  REQUIRE_FALSE(out_tp.decision.has_value());
  REQUIRE(out_tp.broadcast.has_value());
  REQUIRE((*out_tp.broadcast)["strategy"] == "sarif_POV0");
  REQUIRE(client.calls(LabCompetitionClient::Sarif) == 0);

  auto pov = overflow_pov("t");
  pov.status = SubmissionStatus::Pending;
  REQUIRE(svc.submit_pov(pov).accepted());
  auto confirmed = assessor.pov_accepted(pov);
  REQUIRE(confirmed.size() == 1);
  REQUIRE(confirmed[0].sarif_id == "sarif-tp");
  REQUIRE(assessor.record("sarif-tp")->verdict == SarifVerdict::TruePositive);
  REQUIRE(assessor.record("sarif-fp")->verdict == SarifVerdict::Deferred);
  REQUIRE(svc.sarif_verdict("t", "sarif-tp") == SarifVerdict::TruePositive);
  REQUIRE(client.calls(LabCompetitionClient::Sarif) == 1);

  // A final verdict never flips and is not reassessed.
  auto again = assessor.ingest(fixture_record("c-overflow-true.sarif.json", "sarif-tp"), &graph, {"fuzz_record"});
  REQUIRE(again.record.verdict == SarifVerdict::TruePositive);
  REQUIRE(a->calls() == 4);
  REQUIRE(assessor.records("t").size() == 2);
}

TEST_CASE("guidance broadcasts", "[sarif]") {
  auto r = fixture_record("c-overflow-true.sarif.json", "sarif-1");
  r.verdict = SarifVerdict::TruePositive;
  auto doc = forward_for_guidance(r, false);
  REQUIRE(doc.has_value());
  REQUIRE((*doc)["cwe_ids"] == json::array({"CWE-121"}));
  REQUIRE((*doc)["functions"].size() == 1);
  REQUIRE((*doc)["locations"].size() == 1);
  REQUIRE_FALSE(forward_for_guidance(r, true).has_value());
  r.verdict = SarifVerdict::FalsePositive;
  REQUIRE_FALSE(forward_for_guidance(r, false).has_value());
  r.verdict = SarifVerdict::Deferred;
  REQUIRE(forward_for_guidance(r, true).has_value());
  auto hint = render_sarif_hint(r);
  REQUIRE(hint.find("Location: src/parse.c:16-17") != std::string::npos);
  REQUIRE(hint.find("Function: parse_record") != std::string::npos);
}
