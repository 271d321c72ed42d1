#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "pdenff/email.hpp"
#include "pdenff/errors.hpp"
#include "pdenff/features.hpp"
#include "pdenff/metrics.hpp"
#include "pdenff/profile.hpp"
#include "pdenff/refine.hpp"
#include "pdenff/rules.hpp"
#include "pdenff/store.hpp"

namespace pdenff {

enum class VectorMode { Short, Long };

inline const char* vector_mode_name(VectorMode m) { return m == VectorMode::Short ? "short" : "long"; }

struct RunConfig {
  std::optional<std::filesystem::path> registry_path;
  VectorMode mode = VectorMode::Short;
  std::filesystem::path store_path;
  EcmParams ecm;
  InferenceParams inference;
  RefineParams refine;
  ProfileSchedule schedule;
  std::string label_header = "X-PDENFF-Label";
  int label_lag = 0;  // messages between a verdict and its label arriving
  std::string socket_path;
  std::string feedback_socket_path;
  std::size_t max_message_bytes = 1 << 20;
  // serve mode: append a metrics record to the audit log every N labeled
  // feedbacks (0 disables)
  std::int64_t report_every = 0;

  int dim() const { return mode == VectorMode::Short ? 4 : static_cast<int>(kLongVectorBits); }

  void validate() const {
    ecm.validate();
    inference.validate();
    refine.validate();
    schedule.validate(refine.min_refine_samples);
    if (label_lag < 0) throw Error(Errc::bad_config, "label_lag must be >= 0");
  }
};

inline RunConfig config_from_json(const nlohmann::json& j) {
  RunConfig c;
  try {
    if (j.contains("registry")) c.registry_path = j["registry"].get<std::string>();
    if (j.contains("mode"))
      c.mode = j["mode"].get<std::string>() == "long" ? VectorMode::Long : VectorMode::Short;
    if (j.contains("store")) c.store_path = j["store"].get<std::string>();
    if (j.contains("ecm")) {
      const auto& e = j["ecm"];
      c.ecm.dthr = e.value("dthr", c.ecm.dthr);
      if (e.contains("metric")) c.ecm.metric = metric_from_name(e["metric"].get<std::string>());
      c.ecm.ecmc_max_iters = e.value("ecmc_max_iters", c.ecm.ecmc_max_iters);
    }
    if (j.contains("inference")) {
      const auto& e = j["inference"];
      c.inference.m_active = e.value("m_active", c.inference.m_active);
      c.inference.decision_threshold = e.value("decision_threshold", c.inference.decision_threshold);
      c.inference.lambda = e.value("lambda", c.inference.lambda);
      c.inference.prune_window = e.value("prune_window", c.inference.prune_window);
      c.inference.sigma_min = e.value("sigma_min", c.inference.sigma_min);
      c.inference.fire_strength_min = e.value("fire_strength_min", c.inference.fire_strength_min);
      c.inference.rls_init_cov = e.value("rls_init_cov", c.inference.rls_init_cov);
    }
    if (j.contains("refine")) {
      const auto& e = j["refine"];
      c.refine.learning_rate = e.value("learning_rate", c.refine.learning_rate);
      c.refine.epochs = e.value("epochs", c.refine.epochs);
      c.refine.l2 = e.value("l2", c.refine.l2);
      c.refine.min_refine_samples = e.value("min_refine_samples", c.refine.min_refine_samples);
    }
    if (j.contains("schedule")) {
      const auto& e = j["schedule"];
      c.schedule.window_size = e.value("window_size", c.schedule.window_size);
      if (e.contains("refine_trigger"))
        c.schedule.refine_trigger = e["refine_trigger"].get<std::string>() == "timed"
                                        ? RefineTrigger::Timed
                                        : RefineTrigger::OnWindowFull;
      c.schedule.consolidation_every = e.value("consolidation_every", c.schedule.consolidation_every);
      c.schedule.timed_interval = std::chrono::seconds(
          e.value("timed_interval_s", static_cast<std::int64_t>(c.schedule.timed_interval.count())));
      c.schedule.background_refine = e.value("background_refine", c.schedule.background_refine);
    }
    if (j.contains("serve")) {
      const auto& e = j["serve"];
      c.socket_path = e.value("socket", c.socket_path);
      c.feedback_socket_path = e.value("feedback_socket", c.feedback_socket_path);
      c.max_message_bytes = e.value("max_message_bytes", c.max_message_bytes);
      c.report_every = e.value("report_every", c.report_every);
    }
    c.label_header = j.value("label_header", c.label_header);
    c.label_lag = j.value("label_lag", c.label_lag);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_config, std::string("bad config: ") + e.what());
  }
  return c;
}

inline RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(Errc::io, "cannot read config " + path.string());
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_config, std::string("config is not valid JSON: ") + e.what());
  }
  return config_from_json(j);
}

// Reads the evaluation label stamped on a corpus message, if any.
inline std::optional<Label> label_from_raw(std::string_view raw, const std::string& header_name) {
  std::size_t hdr_end = raw.find("\r\n\r\n");
  const std::size_t lf2 = raw.find("\n\n");
  if (hdr_end == std::string_view::npos || (lf2 != std::string_view::npos && lf2 < hdr_end))
    hdr_end = lf2;
  const auto headers =
      detail::parse_headers(hdr_end == std::string_view::npos ? raw : raw.substr(0, hdr_end));
  if (const std::string* v = detail::find_header(headers, header_name)) {
    const std::string lv = to_lower(trim(*v));
    if (lv == "phish" || lv == "1" || lv == "spam") return Label::Phish;
    if (lv == "ham" || lv == "0") return Label::Ham;
  }
  return std::nullopt;
}

struct TrainSummary {
  std::int64_t version = 0;
  std::size_t samples = 0;
  std::size_t labeled = 0;
  std::size_t rules = 0;
};

// Builds the initial rule base: one unsupervised ECM pass over every sample,
// ECMc refinement, rule seeding from labels, batch consequent fit.
inline RuleBase train_rulebase(const std::vector<Vec>& all, const std::vector<std::pair<Vec, Label>>& labeled,
                               const RunConfig& cfg) {
  if (all.empty()) throw Error(Errc::empty_input, "training corpus is empty");
  bool has_phish = false, has_ham = false;
  for (const auto& [x, y] : labeled) (y == Label::Phish ? has_phish : has_ham) = true;
  if (!has_phish || !has_ham)
    throw Error(Errc::single_class_corpus, "training corpus must contain both phish and ham");

  RuleBase rb;
  rb.dim = cfg.dim();
  rb.ecm = cfg.ecm;
  rb.inf = cfg.inference;
  for (const Vec& x : all) {
    ecm_update(rb.clusters, x, rb.ecm, rb.sample_ordinal);
    rb.sample_ordinal++;
  }
  const EcmcResult er = ecmc_refine(all, rb.clusters, rb.ecm);
  rb.clusters = er.clusters;
  rb.rules = clusters_to_rule_seeds(rb.clusters, labeled, rb.ecm, rb.inf);
  rb.next_rule_id = static_cast<int>(rb.rules.size());
  for (auto& r : rb.rules) r.last_fired_at = rb.sample_ordinal;
  std::vector<Sample> samples;
  samples.reserve(labeled.size());
  for (const auto& [x, y] : labeled) samples.push_back({x, y, 0});
  fit_consequents(rb, samples, cfg.refine.l2);
  rb.stats.rules_created = static_cast<std::int64_t>(rb.rules.size());
  rb.profile_version = 1;
  return rb;
}

// Owns the live rule base. Classification runs against an immutable snapshot
// that is replaced wholesale (atomic pointer semantics); all learning funnels
// through one writer mutex; offline refinement may run in a background task.
class DetectionEngine {
 public:
  DetectionEngine(RunConfig cfg, FeatureRegistry registry)
      : cfg_(std::move(cfg)), registry_(std::move(registry)), store_(cfg_.store_path) {
    cfg_.validate();
    manager_ = std::make_unique<ProfileManager>(cfg_.schedule);
    if (auto rb = store_.load_active()) {
      if (rb->dim != cfg_.dim())
        throw Error(Errc::bad_config, "active profile dimension does not match configured mode");
      working_ = std::move(*rb);
      publish();
      has_profile_ = true;
    }
    if (cfg_.schedule.background_refine) {
      worker_ = std::thread([this] { worker_loop(); });
    }
  }

  ~DetectionEngine() {
    {
      std::lock_guard lock(job_mu_);
      stopping_ = true;
    }
    job_cv_.notify_all();
    if (worker_.joinable()) worker_.join();
  }

  const RunConfig& config() const { return cfg_; }
  const FeatureRegistry& registry() const { return registry_; }
  ProfileStore& store() { return store_; }
  bool has_profile() const { return has_profile_.load(); }

  Vec vector_for(const EmailMessage& msg) const {
    const LongVector lv = extract_long(msg, registry_);
    if (cfg_.mode == VectorMode::Long) return lv.as_vec();
    return reduce_short(lv, registry_).as_vec();
  }

  std::shared_ptr<const RuleBase> snapshot() const {
    std::lock_guard lock(snap_mu_);
    return snapshot_;
  }

  Verdict classify_vec(const Vec& x) const {
    auto snap = snapshot();
    if (!snap || snap->rules.empty())
      throw Error(Errc::no_active_profile, "no active profile; run train first");
    return classify(*snap, x);
  }

  // Classifies and remembers the message vector so a later feedback(id,label)
  // can learn from it.
  Verdict classify_message(const EmailMessage& msg, std::string_view raw) {
    const Vec x = vector_for(msg);
    Verdict v = classify_vec(x);
    remember(msg.identifier(raw), x, v.label);
    return v;
  }

  // Supervised online step; returns the refinement job if this sample closed
  // a window (job already dispatched per schedule).
  void learn(const Vec& x, Label y) {
    std::optional<RefinementJob> job;
    {
      std::lock_guard lock(writer_mu_);
      learn_online(working_, x, y);
      publish();
      job = manager_->ingest({x, y, 0}, working_);
    }
    if (job) dispatch(std::move(*job));
  }

  void observe_unlabeled(const Vec& x) {
    std::lock_guard lock(writer_mu_);
    observe(working_, x);
    publish();
  }

  bool feedback(const std::string& id, Label y) {
    std::optional<std::pair<Vec, Label>> hit;
    {
      std::lock_guard lock(mem_mu_);
      auto it = remembered_.find(id);
      if (it != remembered_.end()) {
        hit = it->second;
        remembered_.erase(it);
      }
    }
    if (!hit) return false;
    learn(hit->first, y);
    record_outcome(hit->second, y);
    return true;
  }

  // Rolling quality counters over feedback-confirmed verdicts; same report
  // schema as batch evaluation.
  MetricsReport live_report() const {
    std::lock_guard lock(live_mu_);
    MetricsReport r = metrics_from_counts(live_counts_);
    r.rule_count = static_cast<std::int64_t>(snapshot() ? snapshot()->rules.size() : 0);
    return r;
  }

  TrainSummary train(const std::vector<Vec>& all, const std::vector<std::pair<Vec, Label>>& labeled) {
    RuleBase rb = train_rulebase(all, labeled, cfg_);
    TrainSummary s;
    s.samples = all.size();
    s.labeled = labeled.size();
    s.rules = rb.rules.size();
    {
      std::lock_guard lock(writer_mu_);
      rb.profile_version = next_version_unlocked();
      store_.persist(rb);
      store_.activate(rb.profile_version);
      store_.append_audit({{"event", "train"},
                           {"to_version", rb.profile_version},
                           {"samples", s.samples},
                           {"rules", s.rules}});
      working_ = std::move(rb);
      publish();
      has_profile_ = true;
      s.version = working_.profile_version;
    }
    return s;
  }

  // Blocks until the background queue is drained (tests and shutdown).
  void wait_idle() {
    std::unique_lock lock(job_mu_);
    idle_cv_.wait(lock, [this] { return !running_ && !pending_.has_value(); });
  }

  std::int64_t refinements_run() const { return refinements_run_.load(); }

 private:
  void remember(const std::string& id, const Vec& x, Label predicted) {
    std::lock_guard lock(mem_mu_);
    if (remembered_.size() >= kRememberCap) {
      while (!remember_order_.empty() && remembered_.size() >= kRememberCap) {
        remembered_.erase(remember_order_.front());
        remember_order_.pop_front();
      }
    }
    remember_order_.push_back(id);
    remembered_[id] = {x, predicted};
  }

  void record_outcome(Label predicted, Label truth) {
    bool emit = false;
    MetricsReport report;
    {
      std::lock_guard lock(live_mu_);
      if (truth == Label::Phish) {
        (predicted == Label::Phish ? live_counts_.tp : live_counts_.fn)++;
      } else {
        (predicted == Label::Phish ? live_counts_.fp : live_counts_.tn)++;
      }
      feedbacks_seen_++;
      if (cfg_.report_every > 0 && feedbacks_seen_ % cfg_.report_every == 0) {
        report = metrics_from_counts(live_counts_);
        emit = true;
      }
    }
    if (emit) {
      auto rec = report_to_json(report);
      rec["event"] = "live_metrics";
      store_.append_audit(std::move(rec));
    }
  }

  // Caller holds writer_mu_.
  void publish() {
    auto snap = std::make_shared<const RuleBase>(working_);
    std::lock_guard lock(snap_mu_);
    snapshot_ = std::move(snap);
  }

  std::int64_t next_version_unlocked() {
    const auto versions = store_.versions();
    const std::int64_t latest = versions.empty() ? 0 : versions.back();
    return std::max(latest, working_.profile_version) + 1;
  }

  void dispatch(RefinementJob job) {
    if (!cfg_.schedule.background_refine) {
      run_refinement(job);
      return;
    }
    std::lock_guard lock(job_mu_);
    if (pending_.has_value()) {
      // Queue depth is one: the newest window wins the slot, the previously
      // queued job is dropped with an audit trace.
      store_.append_audit({{"event", "job_dropped"}, {"job_id", pending_->job_id}});
    }
    pending_ = std::move(job);
    job_cv_.notify_one();
  }

  void worker_loop() {
    for (;;) {
      RefinementJob job;
      {
        std::unique_lock lock(job_mu_);
        job_cv_.wait(lock, [this] { return stopping_ || pending_.has_value(); });
        if (stopping_ && !pending_.has_value()) return;
        job = std::move(*pending_);
        pending_.reset();
        running_ = true;
      }
      try {
        run_refinement(job);
      } catch (const std::exception& e) {
        store_.append_audit({{"event", "refine_error"}, {"job_id", job.job_id}, {"error", e.what()}});
      }
      {
        std::lock_guard lock(job_mu_);
        running_ = false;
      }
      idle_cv_.notify_all();
    }
  }

  void run_refinement(const RefinementJob& job) {
    const RefineResult res = pdenff::refine(job.window, cfg_.refine);
    refinements_run_++;
    if (!res.improved) {
      store_.append_audit({{"event", job.consolidation ? "consolidate_skipped" : "refine_skipped"},
                           {"job_id", job.job_id},
                           {"window_mse", res.mse_before},
                           {"reason", "NO_IMPROVEMENT"}});
    } else {
      swap_in(res, job);
    }
    bool consolidate_now = false;
    {
      std::lock_guard lock(writer_mu_);
      if (!job.consolidation) consolidate_now = manager_->refinement_cycle_done();
    }
    if (consolidate_now) run_consolidation();
  }

  void swap_in(const RefineResult& res, const RefinementJob& job) {
    std::lock_guard lock(writer_mu_);
    RuleBase refined = res.rulebase;
    const std::int64_t from = working_.profile_version;
    refined.profile_version = next_version_unlocked();
    refined.sample_ordinal = working_.sample_ordinal;
    for (auto& r : refined.rules) r.last_fired_at = refined.sample_ordinal;
    // Persist first; activation is the commit point. A failure here leaves
    // the previous version active and live.
    store_.persist(refined);
    store_.activate(refined.profile_version);
    store_.append_audit({{"event", job.consolidation ? "consolidate_swap" : "swap"},
                         {"job_id", job.job_id},
                         {"from_version", from},
                         {"to_version", refined.profile_version},
                         {"window_samples", job.window.samples.size()},
                         {"mse_before", res.mse_before},
                         {"mse_after", res.mse_after}});
    working_ = std::move(refined);
    publish();
  }

  void run_consolidation() {
    RefinementJob job;
    {
      std::lock_guard lock(writer_mu_);
      job.job_id = -manager_->cycles_completed();  // negative ids mark consolidations
      job.consolidation = true;
      job.window.samples = manager_->consolidation_samples(cfg_.schedule.consolidation_every);
      job.window.snapshot = working_;
    }
    run_refinement(job);
  }

  RunConfig cfg_;
  FeatureRegistry registry_;
  ProfileStore store_;
  std::unique_ptr<ProfileManager> manager_;

  RuleBase working_;
  std::shared_ptr<const RuleBase> snapshot_;
  mutable std::mutex snap_mu_;
  std::mutex writer_mu_;
  std::atomic<bool> has_profile_{false};
  std::atomic<std::int64_t> refinements_run_{0};

  static constexpr std::size_t kRememberCap = 10000;
  std::unordered_map<std::string, std::pair<Vec, Label>> remembered_;
  std::deque<std::string> remember_order_;
  std::mutex mem_mu_;
  ConfusionCounts live_counts_;
  std::int64_t feedbacks_seen_ = 0;
  mutable std::mutex live_mu_;

  std::optional<RefinementJob> pending_;
  bool running_ = false;
  bool stopping_ = false;
  std::mutex job_mu_;
  std::condition_variable job_cv_;
  std::condition_variable idle_cv_;
  std::thread worker_;
};

// Prequential stream evaluation: every message is scored before any label at
// or after its position is consumed; labels optionally arrive `label_lag`
// messages late to model operator feedback.
struct StreamOutcome {
  MetricsReport report;
  std::vector<std::pair<Verdict, Label>> scored;  // labeled messages only
  std::vector<Verdict> verdicts;                  // all messages, stream order
};

inline StreamOutcome run_stream(DetectionEngine& engine, const std::vector<CorpusEntry>& corpus) {
  if (corpus.empty()) throw Error(Errc::empty_input, "stream corpus is empty");
  if (!engine.has_profile())
    throw Error(Errc::no_active_profile, "no active profile; run train first");

  const int lag = engine.config().label_lag;
  StreamOutcome out;
  std::deque<std::pair<Vec, std::optional<Label>>> pending;  // due after lag

  auto consume_due = [&](bool flush) {
    while (!pending.empty() && (flush || pending.size() > static_cast<std::size_t>(lag))) {
      auto [x, y] = std::move(pending.front());
      pending.pop_front();
      if (y) engine.learn(x, *y);
      else engine.observe_unlabeled(x);
    }
  };

  for (const auto& entry : corpus) {
    const Vec x = engine.vector_for(entry.parsed.message);
    const Verdict v = engine.classify_vec(x);
    out.verdicts.push_back(v);
    const auto label = label_from_raw(entry.raw, engine.config().label_header);
    if (label) out.scored.emplace_back(v, *label);
    pending.emplace_back(x, label);
    consume_due(false);
  }
  consume_due(true);
  engine.wait_idle();

  if (!out.scored.empty()) {
    auto snap = engine.snapshot();
    RunStats rs;
    rs.rule_count = static_cast<std::int64_t>(snap->rules.size());
    rs.rules_created = snap->stats.rules_created;
    rs.rules_updated = snap->stats.rules_updated;
    rs.rules_deleted = snap->stats.rules_deleted;
    out.report = score_run(out.scored, &rs);
  } else {
    throw Error(Errc::empty_input, "stream contained no labeled messages to score");
  }
  return out;
}

}  // namespace pdenff
