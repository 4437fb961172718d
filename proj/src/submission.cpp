// SPDX-License-Identifier: Apache-2.0
#include "crs/submission.hpp"

#include <algorithm>
#include <future>
#include <numeric>

#include "crs/signature.hpp"

namespace crs {

// ---------------------------------------------------------------------------
// Edit distance

std::size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t levenshtein_capped(std::string_view a, std::string_view b, std::size_t limit) {
  if (limit == 0) return 0;
  std::size_t diff = a.size() > b.size() ? a.size() - b.size() : b.size() - a.size();
  if (diff >= limit) return limit;
  // Cells farther than `limit` from the diagonal cannot hold a value < limit.
  const std::size_t inf = limit;
  std::vector<std::size_t> prev(b.size() + 1, inf), cur(b.size() + 1, inf);
  for (std::size_t j = 0; j <= std::min(b.size(), limit); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t lo = i > limit ? i - limit : 0;
    std::size_t hi = std::min(b.size(), i + limit);
    std::fill(cur.begin(), cur.end(), inf);
    if (lo == 0) cur[0] = std::min(i, inf);
    std::size_t row_min = cur[0];
    for (std::size_t j = std::max<std::size_t>(lo, 1); j <= hi; ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      std::size_t v = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
      cur[j] = std::min(v, inf);
      row_min = std::min(row_min, cur[j]);
    }
    if (row_min >= limit) return limit;
    std::swap(prev, cur);
  }
  return std::min(prev[b.size()], limit);
}

// ---------------------------------------------------------------------------
// Evaluator checks

namespace {

const char* kCompareSystem =
    "You review crash reports produced by fuzzing with sanitizers. Answer the question with "
    "yes or no on the first line, then optionally explain.";

std::string fenced(const std::string& text) {
  return "```\n" + truncate_output(text, 200) + "\n```\n";
}

bool path_suffix_match(const std::string& a, const std::string& b) {
  const std::string& longer = a.size() >= b.size() ? a : b;
  const std::string& shorter = a.size() >= b.size() ? b : a;
  if (shorter.empty() || !ends_with(longer, shorter)) return false;
  return longer.size() == shorter.size() || longer[longer.size() - shorter.size() - 1] == '/';
}

}  // namespace

bool judge_pov_equivalence(const std::string& report_a, const std::string& report_b,
                           const std::vector<ProviderHandle*>& evaluators) {
  std::string question = "Crash report A:\n" + fenced(report_a) + "\nCrash report B:\n" +
                         fenced(report_b) +
                         "\nDo both reports stem from the same root cause, making one of them "
                         "redundant? Answer yes or no.";
  int yes = 0;
  for (auto* e : evaluators) {
    if (!e) continue;
    if (ask_yes_no(*e, kCompareSystem, question).value_or(false)) ++yes;
  }
  return yes >= 2;
}

bool sarif_location_in_report(const SarifRecord& sarif, const PovSubmission& pov) {
  auto frames = parse_frames(pov.crash_report, grammar_for(pov.target.sanitizer));
  for (const auto& loc : sarif.locations) {
    int last = std::max(loc.start_line, loc.end_line);
    for (const auto& f : frames) {
      if (f.file.empty() || f.line <= 0) continue;
      if (path_suffix_match(loc.file, f.file) && f.line >= loc.start_line && f.line <= last) {
        return true;
      }
    }
  }
  return false;
}

bool match_sarif_to_pov(const SarifRecord& sarif, const PovSubmission& pov,
                        ProviderHandle* evaluator) {
  if (sarif.task_id != pov.task_id) return false;
  if (sarif_location_in_report(sarif, pov)) return true;
  if (!evaluator) return false;
  std::string locs;
  for (const auto& l : sarif.locations) {
    locs += "- " + l.file + ":" + std::to_string(l.start_line) + "-" + std::to_string(l.end_line) + "\n";
  }
  for (const auto& f : sarif.affected_functions) locs += "- function " + f.function_name + " in " + f.file + "\n";
  std::string cwes;
  for (const auto& c : sarif.cwe_ids) cwes += (cwes.empty() ? "" : ", ") + c;
  std::string question = "Static analysis report (" + (cwes.empty() ? std::string("no CWE") : cwes) +
                         "):\n" + sarif.description + "\nLocations:\n" + locs +
                         "\nCrash report:\n" + fenced(pov.crash_report) +
                         "\nDo the static analysis report and the crash describe the same "
                         "vulnerability? Answer yes or no.";
  return ask_yes_no(*evaluator, kCompareSystem, question).value_or(false);
}

// ---------------------------------------------------------------------------
// Lab client

void LabCompetitionClient::script(Kind kind, std::vector<ScriptedOutcome> outcomes) {
  std::lock_guard<std::mutex> lock(mu_);
  scripts_[kind].assign(outcomes.begin(), outcomes.end());
}

ClientResponse LabCompetitionClient::answer(Kind kind, const std::string& key) {
  std::lock_guard<std::mutex> lock(mu_);
  ++calls_[kind];
  auto it = answered_.find(key);
  if (it != answered_.end()) return it->second;
  ScriptedOutcome o = ScriptedOutcome::Passed;
  if (!scripts_[kind].empty()) {
    o = scripts_[kind].front();
    scripts_[kind].pop_front();
  }
  if (o == ScriptedOutcome::Transient) throw TransientError("scripted transport failure");
  ClientResponse r;
  r.status = o == ScriptedOutcome::Passed ? SubmissionStatus::Passed : SubmissionStatus::Failed;
  r.external_id = "ext-" + std::to_string(next_id_++);
  answered_[key] = r;
  return r;
}

ClientResponse LabCompetitionClient::submit_pov(const PovSubmission& pov) {
  return answer(Pov, "pov:" + pov.pov_id);
}
ClientResponse LabCompetitionClient::submit_patch(const PatchSubmission& patch) {
  return answer(Patch, "patch:" + patch.patch_id);
}
ClientResponse LabCompetitionClient::submit_sarif_assessment(const SarifRecord& record) {
  return answer(Sarif, "sarif:" + record.sarif_id);
}
ClientResponse LabCompetitionClient::submit_bundle(const std::string& task_id, const Bundle& b) {
  return answer(BundleKind, "bundle:" + task_id + ":" + b.bundle_id + ":" + b.pov_id.value_or("") +
                                ":" + b.patch_id.value_or("") + ":" + b.sarif_id.value_or(""));
}

std::size_t LabCompetitionClient::calls(Kind kind) const {
  std::lock_guard<std::mutex> lock(mu_);
  return calls_[kind];
}

// ---------------------------------------------------------------------------
// Decisions

std::string to_string(Decision::Kind k) {
  switch (k) {
    case Decision::Kind::Accepted:
      return "Accepted";
    case Decision::Kind::Failed:
      return "Failed";
    case Decision::Kind::Duplicate:
      return "Duplicate";
    case Decision::Kind::Rejected:
      return "Rejected";
  }
  return "Rejected";
}

json to_json_doc(const Decision& d) {
  json j{{"decision", to_string(d.kind)}};
  if (!d.external_id.empty()) j["external_id"] = d.external_id;
  if (!d.of_id.empty()) j["of"] = d.of_id;
  if (!d.reason.empty()) j["reason"] = d.reason;
  return j;
}

// ---------------------------------------------------------------------------
// Bundles

BundleMutation BundleBook::promote(Entry& e, bool was_exported) {
  if (e.bundle.bundle_id.empty()) e.bundle.bundle_id = ids_->next("bundle");
  return {was_exported ? BundleMutation::Kind::Extended : BundleMutation::Kind::Created, e.bundle};
}

std::vector<BundleMutation> BundleBook::pov_passed(const PovSubmission& pov,
                                                   const SarifMatcher& match) {
  for (const auto& e : entries_) {
    if (e.bundle.canonical_signature == pov.signature) return {};
  }
  Entry e;
  e.pov = pov;
  e.bundle.canonical_signature = pov.signature;
  e.bundle.pov_id = pov.pov_id;
  std::vector<BundleMutation> out;
  for (auto it = unbundled_sarifs_.begin(); it != unbundled_sarifs_.end(); ++it) {
    if (match(*it, pov)) {
      e.bundle.sarif_id = it->sarif_id;
      unbundled_sarifs_.erase(it);
      out.push_back(promote(e, false));
      break;
    }
  }
  entries_.push_back(std::move(e));
  return out;
}

std::vector<BundleMutation> BundleBook::patch_passed(const PatchSubmission& patch) {
  if (!patch.pov_signature) return {};
  for (auto& e : entries_) {
    if (!(e.bundle.canonical_signature == *patch.pov_signature)) continue;
    if (e.bundle.patch_id) return {};
    bool exported = e.bundle.member_count() >= 2;
    e.bundle.patch_id = patch.patch_id;
    return {promote(e, exported)};
  }
  return {};
}

std::vector<BundleMutation> BundleBook::sarif_confirmed(const SarifRecord& sarif,
                                                        const SarifMatcher& match) {
  for (auto& e : entries_) {
    if (e.bundle.sarif_id) continue;
    if (!match(sarif, e.pov)) continue;
    bool exported = e.bundle.member_count() >= 2;
    e.bundle.sarif_id = sarif.sarif_id;
    return {promote(e, exported)};
  }
  unbundled_sarifs_.push_back(sarif);
  return {};
}

std::vector<Bundle> BundleBook::bundles() const {
  std::vector<Bundle> out;
  for (const auto& e : entries_) {
    if (e.bundle.member_count() >= 2) out.push_back(e.bundle);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Ledger scoring

namespace {

std::string score_kind_name(ScoreKind k) {
  switch (k) {
    case ScoreKind::POV:
      return "POV";
    case ScoreKind::Patch:
      return "Patch";
    case ScoreKind::Sarif:
      return "Sarif";
    case ScoreKind::Bundle:
      return "Bundle";
  }
  return "POV";
}

ScoreKind score_kind_from(const std::string& s) {
  for (auto k : {ScoreKind::POV, ScoreKind::Patch, ScoreKind::Sarif, ScoreKind::Bundle}) {
    if (score_kind_name(k) == s) return k;
  }
  throw ParseError("unknown score kind '" + s + "'");
}

double tau_at(Timestamp at, Timestamp received_at, Duration window) {
  Duration elapsed = at - received_at;
  Duration rem = window - elapsed;
  if (rem < Duration{0}) rem = Duration{0};
  if (rem > window) rem = window;
  return time_multiplier(rem, window);
}

}  // namespace

ScoreComponents score_ledger(const LedgerSnapshot& ledger, Timestamp received_at,
                             Duration time_window) {
  ScoreComponents c;
  for (const auto& item : ledger.items) {
    double pts = component_points(item.kind, item.passed, tau_at(item.at, received_at, time_window));
    switch (item.kind) {
      case ScoreKind::POV:
        c.vds += pts;
        break;
      case ScoreKind::Patch:
        c.prs += pts;
        break;
      case ScoreKind::Sarif:
        c.sas += pts;
        break;
      case ScoreKind::Bundle:
        c.bdl += pts;
        break;
    }
  }
  return challenge_score(c, {ledger.acc, ledger.inacc, Duration{0}, time_window});
}

json ledger_document(const LedgerSnapshot& ledger, Timestamp received_at, Duration time_window) {
  json entries = json::array();
  for (const auto& item : ledger.items) {
    entries.push_back({{"kind", score_kind_name(item.kind)},
                       {"id", item.id},
                       {"submitted_at", to_ms(item.at)},
                       {"passed", item.passed}});
  }
  json povs = json::object();
  for (const auto& [k, ids] : ledger.accepted_povs) povs[k] = ids;
  json patches = json::object();
  for (const auto& [k, ids] : ledger.accepted_patches) patches[k] = ids;
  return {{"task_id", ledger.task_id},
          {"received_at", to_ms(received_at)},
          {"time_window", to_ms(time_window)},
          {"acc", ledger.acc},
          {"inacc", ledger.inacc},
          {"accepted_povs", povs},
          {"accepted_patches", patches},
          {"patch_count", ledger.patch_count},
          {"xpatch_count", ledger.xpatch_count},
          {"entries", entries}};
}

ScoreComponents score_from_document(const json& doc) {
  try {
    LedgerSnapshot l;
    l.task_id = doc.value("task_id", std::string{});
    l.acc = doc.value("acc", std::uint64_t{0});
    l.inacc = doc.value("inacc", std::uint64_t{0});
    Timestamp received = timestamp_ms(doc.value("received_at", std::int64_t{0}));
    Duration window{doc.at("time_window").get<std::int64_t>()};
    if (window.count() <= 0) throw ParseError("time_window must be positive");
    if (doc.contains("entries")) {
      for (const auto& e : doc.at("entries")) {
        l.items.push_back({score_kind_from(e.at("kind").get<std::string>()),
                           e.value("id", std::string{}),
                           timestamp_ms(e.at("submitted_at").get<std::int64_t>()),
                           e.at("passed").get<bool>()});
      }
    }
    return score_ledger(l, received, window);
  } catch (const json::exception& e) {
    throw ParseError(std::string("ledger: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Service

struct SubmissionService::TaskState {
  std::string task_id;
  std::optional<ChallengeTask> task;

  std::mutex qmu;
  std::condition_variable qcv;
  std::deque<std::function<void()>> queue;
  bool stopping = false;
  std::thread worker;

  // Written only by the worker, under the service mutex.
  LedgerSnapshot ledger;
  std::vector<PovSubmission> povs;
  std::vector<PatchSubmission> patches;
  std::map<std::string, std::pair<SarifVerdict, Decision>> sarifs;
  std::unique_ptr<BundleBook> book;

  void loop() {
    while (true) {
      std::function<void()> job;
      {
        std::unique_lock<std::mutex> lock(qmu);
        qcv.wait(lock, [&] { return stopping || !queue.empty(); });
        if (queue.empty()) return;
        job = std::move(queue.front());
        queue.pop_front();
      }
      job();
    }
  }
};

SubmissionService::SubmissionService(CompetitionClient& client, Clock& clock,
                                     SubmissionConfig config,
                                     std::vector<ProviderHandle*> dedup_evaluators,
                                     ProviderHandle* sarif_matcher)
    : client_(client),
      clock_(clock),
      config_(config),
      evaluators_(std::move(dedup_evaluators)),
      sarif_matcher_(sarif_matcher) {}

SubmissionService::~SubmissionService() {
  std::lock_guard<std::mutex> lock(mu_);
  for (auto& [_, st] : tasks_) {
    {
      std::lock_guard<std::mutex> q(st->qmu);
      st->stopping = true;
    }
    st->qcv.notify_all();
  }
  for (auto& [_, st] : tasks_) {
    if (st->worker.joinable()) st->worker.join();
  }
}

SubmissionService::TaskState& SubmissionService::state_for(const std::string& task_id) {
  std::lock_guard<std::mutex> lock(mu_);
  auto& slot = tasks_[task_id];
  if (!slot) {
    slot = std::make_unique<TaskState>();
    slot->task_id = task_id;
    slot->ledger.task_id = task_id;
    slot->book = std::make_unique<BundleBook>(task_id, &ids_);
    TaskState* raw = slot.get();
    slot->worker = std::thread([raw] { raw->loop(); });
  }
  return *slot;
}

const SubmissionService::TaskState* SubmissionService::find_state(const std::string& task_id) const {
  auto it = tasks_.find(task_id);
  return it == tasks_.end() ? nullptr : it->second.get();
}

void SubmissionService::register_task(const ChallengeTask& task) {
  auto& st = state_for(task.task_id);
  std::lock_guard<std::mutex> lock(mu_);
  st.task = task;
}

Decision SubmissionService::run_serialized(TaskState& st, std::function<Decision()> fn) {
  auto job = std::make_shared<std::packaged_task<Decision()>>(std::move(fn));
  auto result = job->get_future();
  {
    std::lock_guard<std::mutex> lock(st.qmu);
    st.queue.push_back([job] { (*job)(); });
  }
  st.qcv.notify_one();
  return result.get();
}

template <typename Call>
std::optional<ClientResponse> SubmissionService::call_client(Call&& call) {
  Duration backoff = config_.backoff_base;
  for (int attempt = 0;; ++attempt) {
    try {
      return call();
    } catch (const TransientError&) {
      if (attempt >= config_.transient_retries) return std::nullopt;
      clock_.sleep_for(backoff);
      backoff *= 2;
    }
  }
}

Decision SubmissionService::submit_pov(PovSubmission pov) {
  pov.submitted_at = clock_.now();
  auto& st = state_for(pov.task_id);
  return run_serialized(st, [this, &st, pov = std::move(pov)]() mutable {
    return decide_pov(st, std::move(pov));
  });
}

Decision SubmissionService::submit_patch(PatchSubmission patch) {
  patch.submitted_at = clock_.now();
  auto& st = state_for(patch.task_id);
  return run_serialized(st, [this, &st, patch = std::move(patch)]() mutable {
    return decide_patch(st, std::move(patch));
  });
}

Decision SubmissionService::submit_sarif_assessment(SarifRecord record) {
  auto& st = state_for(record.task_id);
  return run_serialized(st, [this, &st, record = std::move(record)]() mutable {
    return decide_sarif(st, std::move(record));
  });
}

Decision SubmissionService::decide_pov(TaskState& st, PovSubmission pov) {
  Decision d;
  try {
    validate(pov);
  } catch (const InvariantError& e) {
    d.kind = Decision::Kind::Rejected;
    d.reason = e.what();
    return d;
  }
  const std::string key = pov.signature.key();
  auto dup = st.ledger.accepted_povs.find(key);
  if (dup != st.ledger.accepted_povs.end() && !dup->second.empty()) {
    d.kind = Decision::Kind::Duplicate;
    d.of_id = dup->second.front();
    d.reason = "same crash signature";
  } else if (evaluators_.size() >= 2) {
    for (const auto& prior : st.povs) {
      if (prior.status != SubmissionStatus::Passed) continue;
      if (judge_pov_equivalence(prior.crash_report, pov.crash_report, evaluators_)) {
        d.kind = Decision::Kind::Duplicate;
        d.of_id = prior.pov_id;
        d.reason = "evaluators judged the crash redundant";
        break;
      }
    }
  }
  if (d.kind == Decision::Kind::Duplicate) {
    std::lock_guard<std::mutex> lock(mu_);
    st.povs.push_back(with_status(std::move(pov), SubmissionStatus::Duplicate));
    return d;
  }
  auto resp = call_client([&] { return client_.submit_pov(pov); });
  if (!resp) {
    d.kind = Decision::Kind::Rejected;
    d.reason = "transient";
    return d;
  }
  d.external_id = resp->external_id;
  std::vector<BundleMutation> mutations;
  {
    std::lock_guard<std::mutex> lock(mu_);
    bool passed = resp->status == SubmissionStatus::Passed;
    d.kind = passed ? Decision::Kind::Accepted : Decision::Kind::Failed;
    st.ledger.items.push_back({ScoreKind::POV, pov.pov_id, pov.submitted_at, passed});
    if (passed) {
      ++st.ledger.acc;
      st.ledger.accepted_povs[key].push_back(pov.pov_id);
    } else {
      ++st.ledger.inacc;
    }
    st.povs.push_back(with_status(pov, resp->status));
  }
  if (d.kind == Decision::Kind::Accepted) {
    auto matcher = [this](const SarifRecord& s, const PovSubmission& p) {
      return match_sarif_to_pov(s, p, sarif_matcher_);
    };
    PovSubmission passed_pov = st.povs.back();
    mutations = st.book->pov_passed(passed_pov, matcher);
    apply_mutations(st, mutations);
  }
  return d;
}

Decision SubmissionService::decide_patch(TaskState& st, PatchSubmission patch) {
  Decision d;
  try {
    validate(patch);
  } catch (const InvariantError& e) {
    d.kind = Decision::Kind::Rejected;
    d.reason = e.what();
    return d;
  }
  auto duplicate = [&](const std::string& of, const std::string& why) {
    d.kind = Decision::Kind::Duplicate;
    d.of_id = of;
    d.reason = why;
    std::lock_guard<std::mutex> lock(mu_);
    st.patches.push_back(with_status(std::move(patch), SubmissionStatus::Duplicate));
    return d;
  };
  for (const auto& prior : st.patches) {
    if (prior.status != SubmissionStatus::Passed) continue;
    if (levenshtein_capped(prior.diff_text, patch.diff_text, config_.levenshtein_threshold) <
        config_.levenshtein_threshold) {
      return duplicate(prior.patch_id, "diff within edit distance threshold");
    }
  }
  if (patch.pov_signature) {
    for (const auto& prior : st.patches) {
      if (prior.status != SubmissionStatus::Passed || !prior.pov_signature) continue;
      if (!(*prior.pov_signature == *patch.pov_signature)) continue;
      auto gap = patch.submitted_at - prior.submitted_at;
      if (gap < Duration{0}) gap = -gap;
      if (gap <= config_.patch_window) return duplicate(prior.patch_id, "same vulnerability within window");
    }
  }
  const std::string key = patch.is_xpatch ? std::string("xpatch")
                          : patch.pov_signature ? patch.pov_signature->key()
                                                : std::string("unattributed");
  if (patch.is_xpatch) {
    if (st.ledger.xpatch_count >= config_.max_xpatches_per_task) return duplicate("", "xpatch cap reached");
  } else {
    auto it = st.ledger.patch_count.find(key);
    if (it != st.ledger.patch_count.end() && it->second >= config_.max_patches_per_signature) {
      return duplicate("", "per-vulnerability patch cap reached");
    }
  }
  auto resp = call_client([&] { return client_.submit_patch(patch); });
  if (!resp) {
    d.kind = Decision::Kind::Rejected;
    d.reason = "transient";
    return d;
  }
  d.external_id = resp->external_id;
  bool passed = resp->status == SubmissionStatus::Passed;
  d.kind = passed ? Decision::Kind::Accepted : Decision::Kind::Failed;
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (patch.is_xpatch) {
      ++st.ledger.xpatch_count;
    } else {
      ++st.ledger.patch_count[key];
    }
    st.ledger.items.push_back({ScoreKind::Patch, patch.patch_id, patch.submitted_at, passed});
    if (passed) {
      ++st.ledger.acc;
      st.ledger.accepted_patches[key].push_back(patch.patch_id);
    } else {
      ++st.ledger.inacc;
    }
    st.patches.push_back(with_status(patch, resp->status));
  }
  if (passed) apply_mutations(st, st.book->patch_passed(st.patches.back()));
  return d;
}

Decision SubmissionService::decide_sarif(TaskState& st, SarifRecord record) {
  auto prior = st.sarifs.find(record.sarif_id);
  if (prior != st.sarifs.end()) return prior->second.second;
  Decision d;
  if (record.verdict != SarifVerdict::TruePositive && record.verdict != SarifVerdict::FalsePositive) {
    d.kind = Decision::Kind::Rejected;
    d.reason = "only final verdicts can be submitted";
    return d;
  }
  auto resp = call_client([&] { return client_.submit_sarif_assessment(record); });
  if (!resp) {
    d.kind = Decision::Kind::Rejected;
    d.reason = "transient";
    return d;
  }
  d.external_id = resp->external_id;
  bool passed = resp->status == SubmissionStatus::Passed;
  d.kind = passed ? Decision::Kind::Accepted : Decision::Kind::Failed;
  {
    std::lock_guard<std::mutex> lock(mu_);
    st.ledger.items.push_back({ScoreKind::Sarif, record.sarif_id, clock_.now(), passed});
    if (passed) {
      ++st.ledger.acc;
    } else {
      ++st.ledger.inacc;
    }
    st.sarifs[record.sarif_id] = {record.verdict, d};
  }
  if (passed && record.verdict == SarifVerdict::TruePositive) {
    auto matcher = [this](const SarifRecord& s, const PovSubmission& p) {
      return match_sarif_to_pov(s, p, sarif_matcher_);
    };
    apply_mutations(st, st.book->sarif_confirmed(record, matcher));
  }
  return d;
}

void SubmissionService::apply_mutations(TaskState& st, const std::vector<BundleMutation>& mutations) {
  for (const auto& m : mutations) {
    auto resp = call_client([&] { return client_.submit_bundle(st.task_id, m.bundle); });
    if (!resp) continue;
    std::lock_guard<std::mutex> lock(mu_);
    bool passed = resp->status == SubmissionStatus::Passed;
    // A bundle scores once, at the time of its latest submission.
    auto it = std::find_if(st.ledger.items.begin(), st.ledger.items.end(), [&](const ScoredItem& i) {
      return i.kind == ScoreKind::Bundle && i.id == m.bundle.bundle_id;
    });
    if (it == st.ledger.items.end()) {
      st.ledger.items.push_back({ScoreKind::Bundle, m.bundle.bundle_id, clock_.now(), passed});
    } else {
      it->at = clock_.now();
      it->passed = passed;
    }
  }
}

std::vector<Bundle> SubmissionService::bundles(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto* st = find_state(task_id);
  return st ? st->book->bundles() : std::vector<Bundle>{};
}

LedgerSnapshot SubmissionService::ledger(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto* st = find_state(task_id);
  if (!st) {
    LedgerSnapshot empty;
    empty.task_id = task_id;
    return empty;
  }
  return st->ledger;
}

ScoreComponents SubmissionService::score(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto* st = find_state(task_id);
  if (!st || !st->task) return {};
  return score_ledger(st->ledger, st->task->received_at, st->task->time_window);
}

json SubmissionService::ledger_doc(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto* st = find_state(task_id);
  if (!st || !st->task) throw Error("unknown task '" + task_id + "'");
  return ledger_document(st->ledger, st->task->received_at, st->task->time_window);
}

std::vector<PovSubmission> SubmissionService::povs(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto* st = find_state(task_id);
  return st ? st->povs : std::vector<PovSubmission>{};
}

std::vector<PatchSubmission> SubmissionService::patches(const std::string& task_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto* st = find_state(task_id);
  return st ? st->patches : std::vector<PatchSubmission>{};
}

std::vector<PovSubmission> SubmissionService::accepted_povs(const std::string& task_id) const {
  std::vector<PovSubmission> out;
  for (auto& p : povs(task_id)) {
    if (p.status == SubmissionStatus::Passed) out.push_back(std::move(p));
  }
  return out;
}

bool SubmissionService::has_accepted_pov(const std::string& task_id) const {
  return !accepted_povs(task_id).empty();
}

std::optional<SarifVerdict> SubmissionService::sarif_verdict(const std::string& task_id,
                                                             const std::string& sarif_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto* st = find_state(task_id);
  if (!st) return std::nullopt;
  auto it = st->sarifs.find(sarif_id);
  if (it == st->sarifs.end()) return std::nullopt;
  return it->second.first;
}

}  // namespace crs
