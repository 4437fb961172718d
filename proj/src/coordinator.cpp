// SPDX-License-Identifier: Apache-2.0
#include "crs/coordinator.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "crs/signature.hpp"

namespace crs {

void validate(const BudgetPolicy& p) {
  if (p.llm_fuzz_cap.count() <= 0 || p.llm_fuzz_cap_after_pov_elsewhere.count() <= 0) {
    throw InvariantError("BudgetPolicy: LLM fuzzing caps must be positive");
  }
  if (p.llm_fuzz_cap_after_pov_elsewhere > p.llm_fuzz_cap) {
    throw InvariantError("BudgetPolicy: reduced cap exceeds the full cap");
  }
  if (p.corpus_ttl.count() <= 0 || p.sweep_period.count() <= 0) {
    throw InvariantError("BudgetPolicy: corpus TTL and sweep period must be positive");
  }
}

BudgetPolicy apply_policy_overrides(BudgetPolicy p, const json& o) {
  if (!o.is_object()) throw ConfigError("policy overrides: expected an object");
  auto number = [&](const std::string& key) {
    if (!o[key].is_number() || o[key].get<double>() < 0) {
      throw ConfigError("policy overrides: " + key + " must be a non-negative number");
    }
    return o[key].get<double>();
  };
  for (const auto& [key, value] : o.items()) {
    if (key == "llm_fuzz_cap_min") {
      p.llm_fuzz_cap = Duration{static_cast<std::int64_t>(number(key) * 60000)};
    } else if (key == "llm_fuzz_cap_after_pov_elsewhere_min") {
      p.llm_fuzz_cap_after_pov_elsewhere = Duration{static_cast<std::int64_t>(number(key) * 60000)};
    } else if (key == "msan_harness_threshold") {
      p.msan_harness_threshold = static_cast<std::size_t>(number(key));
    } else if (key == "corpus_ttl_s") {
      p.corpus_ttl = Duration{static_cast<std::int64_t>(number(key) * 1000)};
    } else if (key == "sweep_period_s") {
      p.sweep_period = Duration{static_cast<std::int64_t>(number(key) * 1000)};
    } else if (key == "disabled_sanitizers") {
      if (!value.is_array()) throw ConfigError("policy overrides: disabled_sanitizers must be an array");
      p.disabled_sanitizers.clear();
      for (const auto& s : value) {
        try {
          p.disabled_sanitizers.insert(sanitizer_from_string(s.get<std::string>()));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("policy overrides: ") + e.what());
        }
      }
    } else {
      throw ConfigError("policy overrides: unknown key " + key);
    }
  }
  try {
    validate(p);
  } catch (const InvariantError& e) {
    throw ConfigError(e.what());
  }
  return p;
}

BudgetPolicy load_policy_file(const fs::path& path, BudgetPolicy base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read policy file " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("policy file " + path.string() + ": " + e.what());
  }
  return apply_policy_overrides(std::move(base), doc);
}

std::vector<FuzzerTarget> decompose(const ChallengeTask& task, const BudgetPolicy& policy) {
  std::vector<Sanitizer> sanitizers;
  if (task.language == Language::Java) {
    sanitizers = {Sanitizer::Jazzer};
  } else {
    sanitizers = {Sanitizer::Address, Sanitizer::Memory, Sanitizer::UndefinedBehavior};
  }
  std::vector<FuzzerTarget> out;
  for (const auto& h : task.harness_names) {
    for (auto s : sanitizers) {
      if (s == Sanitizer::UndefinedBehavior) continue;
      if (s == Sanitizer::Memory && task.harness_names.size() > policy.msan_harness_threshold) continue;
      if (policy.disabled_sanitizers.count(s)) continue;
      out.push_back({h, s, task.task_id});
    }
  }
  if (out.empty()) throw ConfigError("task " + task.task_id + ": no fuzzer targets left after pruning");
  return out;
}

const std::vector<RosterEntry>& strategy_table() {
  using M = ChallengeMode;
  static const std::vector<RosterEntry> table = {
      {"xs0_delta", M::DeltaScan, true, true, Stage::PovGeneration},
      {"as0_delta", M::DeltaScan, true, true, Stage::PovGeneration},
      {"patch_delta", M::DeltaScan, true, true, Stage::PatchGeneration},
      {"patch0_delta", M::DeltaScan, true, true, Stage::PatchGeneration},
      {"patch1_delta", M::DeltaScan, true, true, Stage::PatchGeneration},
      {"patch2_delta", M::DeltaScan, true, true, Stage::PatchGeneration},
      {"patch3_delta", M::DeltaScan, true, true, Stage::PatchGeneration},
      {"xpatch_delta", M::DeltaScan, true, true, Stage::PatchGeneration},
      {"xs0_c_full", M::FullScan, true, false, Stage::PovGeneration},
      {"xs0_java_full", M::FullScan, false, true, Stage::PovGeneration},
      {"xs1_c_full", M::FullScan, true, false, Stage::PovGeneration},
      {"xs1_java_full", M::FullScan, false, true, Stage::PovGeneration},
      {"xs2_java_full", M::FullScan, false, true, Stage::PovGeneration},
      {"as0_full", M::FullScan, true, true, Stage::PovGeneration},
      {"patch_full", M::FullScan, true, true, Stage::PatchGeneration},
      {"patch0_full", M::FullScan, true, true, Stage::PatchGeneration},
      {"patch1_full", M::FullScan, true, true, Stage::PatchGeneration},
      {"patch2_full", M::FullScan, true, true, Stage::PatchGeneration},
      {"patch3_full", M::FullScan, true, true, Stage::PatchGeneration},
      {"xpatch_full", M::FullScan, true, true, Stage::PatchGeneration},
      {"sarif_POV0", M::SarifAssessment, true, true, Stage::PovGeneration},
      {"xpatch_sarif", M::SarifAssessment, true, true, Stage::PatchGeneration},
  };
  return table;
}

std::vector<std::string> roster_for(ChallengeMode mode, Language language) {
  std::vector<std::string> out;
  if (mode == ChallengeMode::SarifAssessment) return out;
  for (const auto& e : strategy_table()) {
    bool lang_ok = language == Language::Java ? e.java : e.c_cpp;
    if (lang_ok && (e.mode == mode || e.mode == ChallengeMode::SarifAssessment)) out.push_back(e.name);
  }
  return out;
}

namespace {

const RosterEntry* table_entry(const std::string& name) {
  for (const auto& e : strategy_table()) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

bool is_xpatch(const std::string& name) { return starts_with(name, "xpatch"); }

}  // namespace

json to_json_doc(const WorkerAssignment& a) {
  json targets = json::array();
  for (const auto& t : a.targets) targets.push_back(serialize(t));
  return {{"worker", a.worker}, {"targets", targets}, {"roster", a.roster}};
}

std::vector<WorkerAssignment> dispatch(const std::vector<FuzzerTarget>& targets,
                                       std::size_t worker_count, const ChallengeTask& task) {
  if (worker_count == 0) throw ConfigError("dispatch: empty worker pool");
  std::vector<WorkerAssignment> pool(worker_count);
  auto roster = roster_for(task.mode, task.language);
  for (std::size_t w = 0; w < worker_count; ++w) {
    pool[w].worker = w;
    pool[w].roster = roster;
  }
  for (std::size_t i = 0; i < targets.size(); ++i) pool[i % worker_count].targets.push_back(targets[i]);
  std::vector<WorkerAssignment> out;
  for (auto& a : pool) {
    if (!a.targets.empty()) out.push_back(std::move(a));
  }
  return out;
}

Duration llm_budget(const FuzzerTarget& target, const TaskBudgetState& state,
                    const BudgetPolicy& policy) {
  for (const auto& t : state.targets_with_pov) {
    if (t.task_id == target.task_id && !(t == target)) return policy.llm_fuzz_cap_after_pov_elsewhere;
  }
  return policy.llm_fuzz_cap;
}

std::string to_string(FuzzerDecision d) { return d == FuzzerDecision::Stop ? "Stop" : "Continue"; }

FuzzerDecision fuzzer_stop_decision(const FuzzerState& s, Duration half_time) {
  bool stop = (s.povs_found && s.elapsed > half_time) ||
              (s.povs_found && s.multi_fuzzer_on_vm && s.elapsed * 2 > half_time) ||
              (!s.povs_found && s.elapsed >= half_time);
  return stop ? FuzzerDecision::Stop : FuzzerDecision::Continue;
}

// ---------------------------------------------------------------------------
// Corpus

std::optional<CorpusEntry> corpus_entry_from_path(const fs::path& path) {
  std::string name = path.filename().string();
  if (!ends_with(name, ".bin")) return std::nullopt;
  auto dash = name.find('-');
  if (dash == 0 || dash == std::string::npos) return std::nullopt;
  std::int64_t ms = 0;
  for (std::size_t i = 0; i < dash; ++i) {
    if (name[i] < '0' || name[i] > '9') return std::nullopt;
    ms = ms * 10 + (name[i] - '0');
  }
  return CorpusEntry{path, timestamp_ms(ms)};
}

std::vector<CorpusEntry> list_corpus(const fs::path& dir) {
  std::vector<CorpusEntry> out;
  std::error_code ec;
  for (fs::directory_iterator it(dir, ec), end; !ec && it != end; it.increment(ec)) {
    if (auto e = corpus_entry_from_path(it->path())) out.push_back(*e);
  }
  std::sort(out.begin(), out.end(),
            [](const CorpusEntry& a, const CorpusEntry& b) { return a.path.filename() < b.path.filename(); });
  return out;
}

std::vector<fs::path> corpus_sweep(const fs::path& dir, Timestamp now, Duration ttl) {
  std::vector<fs::path> deleted;
  for (const auto& e : list_corpus(dir)) {
    if (now - e.created_at <= ttl) continue;
    std::error_code ec;
    if (fs::remove(e.path, ec)) {
      deleted.push_back(e.path);
    } else if (ec) {
      std::cerr << "corpus sweep: cannot remove " << e.path.string() << ": " << ec.message() << "\n";
    }
  }
  return deleted;
}

CorpusManager::CorpusManager(fs::path root, Clock& clock) : root_(std::move(root)), clock_(clock) {
  fs::create_directories(root_);
}

fs::path CorpusManager::dir_for(const FuzzerTarget& target) const {
  return root_ / (target.harness_name + "-" + to_lower(to_string(target.sanitizer)));
}

void CorpusManager::deposit(const FuzzerTarget& target, const Bytes& input) {
  std::uint64_t seq;
  {
    std::lock_guard<std::mutex> lock(mu_);
    seq = ++seq_;
  }
  fs::path dir = dir_for(target);
  fs::create_directories(dir);
  std::string hash = sha256_hex(std::string_view(reinterpret_cast<const char*>(input.data()), input.size()), 8);
  std::string name = std::to_string(to_ms(clock_.now())) + "-" + std::to_string(seq) + "-" + hash + ".bin";
  fs::path tmp = dir / (".tmp-" + name);
  {
    std::ofstream out(tmp, std::ios::binary);
    out.write(reinterpret_cast<const char*>(input.data()), static_cast<std::streamsize>(input.size()));
    if (!out) throw InfraError("corpus: cannot write " + tmp.string());
  }
  fs::rename(tmp, dir / name);
  std::lock_guard<std::mutex> lock(mu_);
  ++deposited_;
}

std::vector<Bytes> CorpusManager::entries(const FuzzerTarget& target) const {
  std::vector<Bytes> out;
  for (const auto& e : list_corpus(dir_for(target))) {
    std::ifstream in(e.path, std::ios::binary);
    if (!in) continue;  // swept meanwhile
    out.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  return out;
}

std::vector<fs::path> CorpusManager::sweep(Duration ttl) {
  std::vector<fs::path> all;
  std::error_code ec;
  for (fs::directory_iterator it(root_, ec), end; !ec && it != end; it.increment(ec)) {
    if (!it->is_directory()) continue;
    auto d = corpus_sweep(it->path(), clock_.now(), ttl);
    all.insert(all.end(), d.begin(), d.end());
  }
  std::lock_guard<std::mutex> lock(mu_);
  swept_ += all.size();
  return all;
}

std::size_t CorpusManager::deposited() const {
  std::lock_guard<std::mutex> lock(mu_);
  return deposited_;
}

std::size_t CorpusManager::swept() const {
  std::lock_guard<std::mutex> lock(mu_);
  return swept_;
}

// ---------------------------------------------------------------------------
// Orchestration

namespace {

class TaskRun {
 public:
  TaskRun(const ChallengeTask& task, OrchestratorServices& s, const OrchestratorConfig& cfg)
      : task_(task), s_(s), cfg_(cfg) {
    end_ = task.received_at + task.time_window;
    roster_ = cfg.roster ? *cfg.roster : roster_for(task.mode, task.language);
    for (const auto& name : roster_) {
      if (!table_entry(name)) throw ConfigError("unknown strategy in roster: " + name);
    }
    auto reports = cfg.sarif_reports;
    std::stable_sort(reports.begin(), reports.end(),
                     [](const ScheduledSarif& a, const ScheduledSarif& b) { return a.at < b.at; });
    sarif_queue_.assign(reports.begin(), reports.end());
    last_sweep_ = s.clock->now();
  }

  json run() {
    json report;
    report["task"] = serialize(task_);
    report["roster"] = roster_;
    if (task_.mode == ChallengeMode::SarifAssessment) {
      drain_sarif(true);
      return finish(std::move(report));
    }
    targets_ = decompose(task_, cfg_.policy);
    auto assignments = dispatch(targets_, cfg_.workers, task_);
    json targets = json::array();
    for (const auto& t : targets_) targets.push_back(serialize(t));
    report["targets"] = targets;
    json assigned = json::array();
    for (auto& a : assignments) {
      a.roster = roster_;
      assigned.push_back(to_json_doc(a));
    }
    report["assignments"] = assigned;
    inboxes_.clear();
    for (std::size_t i = 0; i < assignments.size(); ++i) inboxes_.push_back(std::make_unique<Channel<WorkerMessage>>());

    if (cfg_.parallel) {
      std::atomic<bool> stop{false};
      std::mutex sweep_mu;
      std::condition_variable sweep_cv;
      std::thread sweeper([&] {
        std::unique_lock<std::mutex> lock(sweep_mu);
        while (!stop.load()) {
          sweep_cv.wait_for(lock, cfg_.policy.sweep_period, [&] { return stop.load(); });
          if (s_.corpus) s_.corpus->sweep(cfg_.policy.corpus_ttl);
        }
      });
      std::vector<std::thread> workers;
      for (std::size_t i = 0; i < assignments.size(); ++i) {
        workers.emplace_back([this, &assignments, i] { worker(i, assignments[i]); });
      }
      for (auto& w : workers) w.join();
      {
        std::lock_guard<std::mutex> lock(sweep_mu);
        stop.store(true);
      }
      sweep_cv.notify_all();
      sweeper.join();
    } else {
      for (std::size_t i = 0; i < assignments.size(); ++i) worker(i, assignments[i]);
    }

    xpatch_phase();
    drain_sarif(true);
    for (std::size_t i = 0; i < assignments.size(); ++i) drain_inbox(i, assignments[i]);
    return finish(std::move(report));
  }

 private:
  // --- shared helpers ------------------------------------------------------

  Timestamp now() const { return s_.clock->now(); }
  bool expired() const { return now() >= end_; }

  bool target_has_pov(const FuzzerTarget& t) {
    std::lock_guard<std::mutex> lock(mu_);
    return budget_.targets_with_pov.count(t) > 0;
  }

  void record(const char* list, json entry) {
    std::lock_guard<std::mutex> lock(mu_);
    lists_[list].push_back(std::move(entry));
  }

  void error(const std::string& where, const std::string& what) {
    record("errors", {{"where", where}, {"error", what}});
  }

  static std::string target_label(const FuzzerTarget& t) {
    return t.harness_name + "/" + to_string(t.sanitizer);
  }

  bool in_roster(const std::string& name) const {
    return std::find(roster_.begin(), roster_.end(), name) != roster_.end();
  }

  PovServices pov_services(const FuzzerTarget& target) {
    PovServices ps;
    ps.router = s_.router;
    ps.graph = s_.graph;
    ps.runner = s_.runner;
    ps.coverage = s_.coverage;
    ps.executor = s_.executor;
    ps.corpus = s_.corpus;
    ps.submissions = s_.submissions;
    ps.clock = s_.clock;
    ps.ids = s_.ids;
    ps.workdirs = s_.workdirs;
    ps.evaluator = s_.ranking_model;
    ps.project_markers = s_.project_markers;
    ps.cancelled = [this, target] { return expired() || target_has_pov(target); };
    return ps;
  }

  PatchServices patch_services() {
    PatchServices ps;
    ps.router = s_.router;
    ps.evaluator = s_.ranking_model;
    ps.graph = s_.graph;
    ps.runner = s_.runner;
    ps.coverage = s_.coverage;
    ps.build = s_.build;
    ps.tests = s_.tests;
    ps.fuzz = s_.fuzz;
    ps.submissions = s_.submissions;
    ps.clock = s_.clock;
    ps.ids = s_.ids;
    ps.workdirs = s_.workdirs;
    ps.catalog = s_.catalog;
    ps.repo_root = s_.repo_root;
    ps.cancelled = [this] { return expired(); };
    return ps;
  }

  // SARIF arrivals, sweeps and inbox delivery happen at checkpoints, so a
  // sequential run interleaves them with strategy work deterministically.
  void checkpoint(std::optional<std::size_t> worker_index = {},
                  const WorkerAssignment* assignment = nullptr) {
    drain_sarif(false);
    if (!cfg_.parallel && s_.corpus) {
      std::lock_guard<std::mutex> lock(mu_);
      if (now() - last_sweep_ >= cfg_.policy.sweep_period) {
        last_sweep_ = now();
        s_.corpus->sweep(cfg_.policy.corpus_ttl);
      }
    }
    if (worker_index && assignment) drain_inbox(*worker_index, *assignment);
  }

  // Ingests reports whose arrival time has come; with `all`, waits for the
  // rest as long as the window allows.
  void drain_sarif(bool all) {
    std::lock_guard<std::mutex> lock(sarif_mu_);
    while (!sarif_queue_.empty()) {
      auto due = task_.received_at + sarif_queue_.front().at;
      if (due > now()) {
        if (!all || due >= end_) break;
        s_.clock->sleep_until(due);
      }
      ScheduledSarif item = sarif_queue_.front();
      sarif_queue_.pop_front();
      ingest_sarif(item.record);
    }
    if (all) {
      for (const auto& item : sarif_queue_) {
        record("errors", {{"where", "sarif " + item.record.sarif_id}, {"error", "arrived after the time window"}});
      }
      sarif_queue_.clear();
    }
  }

  void ingest_sarif(const SarifRecord& rec) {
    if (!s_.sarif) {
      error("sarif " + rec.sarif_id, "no assessor configured");
      return;
    }
    try {
      auto out = s_.sarif->ingest(rec, s_.graph, task_.harness_names);
      json votes = json::array();
      for (const auto& v : out.consensus.votes) {
        votes.push_back({{"evaluator", v.evaluator},
                         {"check", to_string(v.check)},
                         {"answer", v.answer ? json(*v.answer) : json(nullptr)}});
      }
      record("sarif_events", {{"sarif_id", rec.sarif_id},
                              {"at", to_ms(now())},
                              {"consensus", to_string(out.consensus.verdict)},
                              {"reachable", out.consensus.reachable},
                              {"verdict", serialize(out.record.verdict)},
                              {"votes", votes},
                              {"decision", out.decision ? to_json_doc(*out.decision) : json(nullptr)},
                              {"broadcast", out.broadcast.has_value()}});
      if (out.broadcast && in_roster("sarif_POV0")) {
        for (auto& inbox : inboxes_) inbox->push({WorkerMessage::Kind::SarifGuidance, *out.broadcast});
      }
    } catch (const std::exception& e) {
      error("sarif " + rec.sarif_id, e.what());
    }
  }

  void drain_inbox(std::size_t index, const WorkerAssignment& a) {
    if (index >= inboxes_.size()) return;
    while (auto msg = inboxes_[index]->try_pop()) {
      if (msg->kind != WorkerMessage::Kind::SarifGuidance) continue;
      auto record = s_.sarif ? s_.sarif->record(msg->body.value("sarif_id", std::string{})) : std::nullopt;
      if (!record) continue;
      for (const auto& t : a.targets) {
        if (expired() || target_has_pov(t)) continue;
        PromptContext ctx;
        ctx.sarif_hint = render_sarif_hint(*record);
        run_pov_strategy_on(index, t, "sarif_POV0", ctx);
      }
    }
  }

  // --- POV and patch stages --------------------------------------------------

  void worker(std::size_t index, const WorkerAssignment& a) {
    for (const auto& t : a.targets) {
      try {
        llm_phase(index, a, t);
      } catch (const std::exception& e) {
        error("target " + target_label(t), e.what());
      }
    }
    try {
      fuzzer_phase(index, a);
    } catch (const std::exception& e) {
      error("fuzzer worker " + std::to_string(index), e.what());
    }
  }

  void llm_phase(std::size_t index, const WorkerAssignment& a, const FuzzerTarget& t) {
    Timestamp started = now();
    for (const auto& name : roster_) {
      const RosterEntry* e = table_entry(name);
      if (e->stage != Stage::PovGeneration || e->mode == ChallengeMode::SarifAssessment) continue;
      checkpoint(index, &a);
      if (expired() || target_has_pov(t)) break;
      Duration budget;
      {
        std::lock_guard<std::mutex> lock(mu_);
        budget = llm_budget(t, budget_, cfg_.policy);
      }
      Timestamp deadline = std::min(started + budget, end_);
      if (now() >= deadline) {
        record("strategy_runs", {{"worker", index}, {"strategy", name}, {"target", serialize(t)},
                                 {"skipped", "LLM budget exhausted"}});
        break;
      }
      run_pov_strategy_on(index, t, name, {}, deadline);
    }
  }

  void run_pov_strategy_on(std::size_t index, const FuzzerTarget& t, const std::string& name,
                           PromptContext ctx, std::optional<Timestamp> deadline = {}) {
    PovStrategyConfig config = PovStrategyConfig::named(name, task_.language);
    Timestamp limit = std::min(deadline.value_or(end_), end_);
    config.timeout = std::min(config.timeout, limit - now());
    if (config.timeout.count() <= 0) return;
    auto hs = s_.harness_sources.find(t.harness_name);
    if (hs != s_.harness_sources.end()) ctx.harness_source = hs->second;
    bool delta = task_.mode == ChallengeMode::DeltaScan && task_.commit_diff.has_value();
    std::vector<FunctionRecord> modified;
    if (delta && s_.graph) {
      try {
        modified = modified_functions(*s_.graph, *task_.commit_diff);
      } catch (const ParseError& e) {
        error("commit diff", e.what());
      }
    }
    if (config.inject_modified_functions) ctx.modified_functions = modified;
    if (config.rank_functions && s_.graph && s_.ranking_model) {
      ctx.ranked_functions = rank_reachable_functions(*s_.graph, t.harness_name, task_.language, *s_.ranking_model);
    }
    if (config.delta && !delta) {
      record("strategy_runs", {{"worker", index}, {"strategy", name}, {"target", serialize(t)},
                               {"skipped", "strategy needs a commit diff"}});
      return;
    }
    PovServices ps = pov_services(t);
    PovRunResult r = run_pov_strategy(task_, t, config, ps, ctx);
    if (!r.pov && config.use_call_paths && !modified.empty() && s_.graph && !ps.cancelled()) {
      PovRunResult paths = call_path_prompt_rounds(task_, t, modified, config, ps, ctx);
      paths.llm_calls += r.llm_calls;
      paths.iterations += r.iterations;
      paths.notes.insert(paths.notes.begin(), r.notes.begin(), r.notes.end());
      r = std::move(paths);
    }
    json doc = to_json_doc(r);
    doc.erase("conversation");
    record("strategy_runs", {{"worker", index}, {"strategy", name}, {"target", serialize(t)}, {"result", doc}});
    if (r.pov && r.decision && r.decision->accepted()) pov_accepted(*r.pov, r.conversation);
  }

  void pov_accepted(const PovSubmission& pov, const std::optional<Conversation>& conversation) {
    {
      std::lock_guard<std::mutex> lock(mu_);
      budget_.targets_with_pov.insert(pov.target);
    }
    if (s_.sarif) {
      for (const auto& c : s_.sarif->pov_accepted(pov)) {
        record("sarif_events", {{"sarif_id", c.sarif_id}, {"at", to_ms(now())}, {"confirmed_by", pov.pov_id}});
      }
    }
    patch_phase(pov, conversation);
  }

  void patch_phase(const PovSubmission& pov, const std::optional<Conversation>& conversation) {
    std::vector<PovSubmission> known;
    for (const auto& p : s_.submissions->accepted_povs(task_.task_id)) {
      if (p.signature == pov.signature) known.push_back(p);
    }
    if (known.empty()) known.push_back(pov);
    for (const auto& name : roster_) {
      const RosterEntry* e = table_entry(name);
      if (e->stage != Stage::PatchGeneration || is_xpatch(name)) continue;
      if (expired()) return;
      PatchStrategyConfig config = PatchStrategyConfig::named(name);
      try {
        validate(config, task_.mode);
      } catch (const ConfigError& ex) {
        record("strategy_runs", {{"strategy", name}, {"pov", pov.pov_id}, {"skipped", ex.what()}});
        continue;
      }
      config.parallel_processes = cfg_.patch_processes;
      config.timeout = std::min(config.timeout, end_ - now());
      PatchRunResult r;
      try {
        r = run_patch_processes(task_, known, config, patch_services(), conversation, !cfg_.parallel);
      } catch (const std::exception& ex) {
        error("patch " + name, ex.what());
        continue;
      }
      record("strategy_runs", {{"strategy", name}, {"pov", pov.pov_id}, {"result", to_json_doc(r)}});
      if (r.decision && r.decision->accepted()) return;
    }
  }

  // Simulated libFuzzer: slices of `fuzz_slice` over the worker's targets,
  // seeded from the shared corpus, until the stop policy says otherwise.
  void fuzzer_phase(std::size_t index, const WorkerAssignment& a) {
    if (!cfg_.traditional_fuzzer || !s_.fuzz) return;
    const Duration half = cfg_.policy.fuzzer_half_time(task_);
    const bool multi = targets_.size() > 1;
    std::vector<FuzzerTarget> active = a.targets;
    std::map<FuzzerTarget, json> stats;
    std::uint64_t slice = 0;
    while (!active.empty() && !expired()) {
      for (auto it = active.begin(); it != active.end();) {
        checkpoint(index, &a);
        FuzzerState st{target_has_pov(*it), now() - task_.received_at, multi};
        auto& doc = stats[*it];
        if (doc.is_null()) doc = {{"target", serialize(*it)}, {"slices", 0}, {"executions", 0}, {"crashes", 0}};
        if (expired() || fuzzer_stop_decision(st, half) == FuzzerDecision::Stop) {
          doc["stopped_at"] = to_ms(now());
          doc["stop_reason"] = expired() ? "window closed" : (st.povs_found ? "POV found" : "half-time reached");
          it = active.erase(it);
          continue;
        }
        std::vector<Bytes> corpus;
        if (s_.corpus) corpus = s_.corpus->entries(*it);
        std::uint64_t seed = cfg_.seed * 1000003u + index * 7919u + slice;
        Duration d = std::min(cfg_.fuzz_slice, end_ - now());
        FuzzOutcome out = s_.fuzz->fuzz(*it, s_.repo_root, d, seed, corpus);
        doc["slices"] = doc["slices"].get<int>() + 1;
        doc["executions"] = doc["executions"].get<std::uint64_t>() + out.executions;
        if (out.crash_found) {
          doc["crashes"] = doc["crashes"].get<int>() + 1;
          fuzzer_crash(*it, out);
        }
        ++it;
      }
      ++slice;
    }
    for (auto& [t, doc] : stats) record("fuzzer", doc);
  }

  void fuzzer_crash(const FuzzerTarget& t, const FuzzOutcome& out) {
    CrashSignature sig = parse_crash_report(out.report, t.sanitizer, s_.project_markers);
    {
      std::lock_guard<std::mutex> lock(mu_);
      if (!fuzzer_signatures_.insert(sig.key()).second) return;
    }
    for (const auto& p : s_.submissions->accepted_povs(task_.task_id)) {
      if (p.signature == sig) return;
    }
    PovSubmission pov;
    pov.pov_id = s_.ids->next("pov");
    pov.task_id = task_.task_id;
    pov.target = t;
    pov.input_blob = out.input;
    pov.crash_report = out.report;
    pov.signature = sig;
    pov.originating_strategy = "libfuzzer";
    Decision d = s_.submissions->submit_pov(pov);
    record("strategy_runs", {{"strategy", "libfuzzer"}, {"target", serialize(t)},
                             {"result", {{"pov_id", pov.pov_id}, {"decision", to_json_doc(d)}}}});
    if (d.accepted()) {
      auto stored = s_.submissions->povs(task_.task_id);
      for (const auto& p : stored) {
        if (p.pov_id == pov.pov_id) pov = p;
      }
      pov_accepted(pov, std::nullopt);
    }
  }

  void xpatch_phase() {
    std::string name;
    for (const auto& n : roster_) {
      if (n == "xpatch_delta" || n == "xpatch_full") name = n;
    }
    if (name.empty() || s_.submissions->has_accepted_pov(task_.task_id)) return;
    Timestamp gate = task_.received_at +
                     Duration{static_cast<std::int64_t>(cfg_.xpatch.trigger_fraction *
                                                        static_cast<double>(task_.time_window.count()))};
    if (gate >= end_) return;
    s_.clock->sleep_until(gate);
    drain_sarif(false);
    PatchStrategyConfig config = PatchStrategyConfig::named(name);
    config.timeout = std::min(config.timeout, end_ - now());
    try {
      PatchRunResult r = xpatch_run(task_, targets_, cfg_.xpatch, config, patch_services());
      record("strategy_runs", {{"strategy", name}, {"at", to_ms(now())}, {"result", to_json_doc(r)}});
    } catch (const std::exception& e) {
      error("xpatch", e.what());
    }
  }

  json finish(json report) {
    const auto& id = task_.task_id;
    json povs = json::array(), patches = json::array(), bundles = json::array(), sarifs = json::array();
    for (const auto& p : s_.submissions->povs(id)) povs.push_back(serialize(p));
    for (const auto& p : s_.submissions->patches(id)) patches.push_back(serialize(p));
    for (const auto& b : s_.submissions->bundles(id)) bundles.push_back(serialize(b));
    if (s_.sarif) {
      for (const auto& r : s_.sarif->records(id)) sarifs.push_back(serialize(r));
    }
    report["povs"] = povs;
    report["patches"] = patches;
    report["bundles"] = bundles;
    report["sarif"] = sarifs;
    for (const char* list : {"strategy_runs", "fuzzer", "sarif_events", "errors"}) {
      report[list] = lists_.count(list) ? lists_[list] : json::array();
    }
    report["ledger"] = s_.submissions->ledger_doc(id);
    report["score"] = serialize(s_.submissions->score(id));
    if (s_.corpus) {
      report["corpus"] = {{"deposited", s_.corpus->deposited()}, {"swept", s_.corpus->swept()}};
    }
    report["finished_at"] = to_ms(now());
    return report;
  }

  const ChallengeTask& task_;
  OrchestratorServices& s_;
  const OrchestratorConfig& cfg_;
  Timestamp end_;
  std::vector<std::string> roster_;
  std::vector<FuzzerTarget> targets_;
  std::vector<std::unique_ptr<Channel<WorkerMessage>>> inboxes_;

  std::mutex mu_;  // budget_, lists_, last_sweep_, fuzzer_signatures_
  TaskBudgetState budget_;
  std::map<std::string, json> lists_;
  Timestamp last_sweep_{};
  std::set<std::string> fuzzer_signatures_;

  std::mutex sarif_mu_;
  std::deque<ScheduledSarif> sarif_queue_;
};

}  // namespace

json orchestrate(const ChallengeTask& task, OrchestratorServices& services, const OrchestratorConfig& config) {
  validate(task);
  validate(config.policy);
  if (!services.router || !services.submissions || !services.clock || !services.ids || !services.workdirs) {
    throw ConfigError("orchestrate: router, submissions, clock, ids and workdirs are required");
  }
  services.submissions->register_task(task);
  TaskRun run(task, services, config);
  return run.run();
}

}  // namespace crs
