// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Each criterion pins its tolerance in code.

#include <Eigen/Dense>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "pdenff/email.hpp"
#include "pdenff/engine.hpp"
#include "pdenff/features.hpp"
#include "pdenff/filter.hpp"
#include "pdenff/metrics.hpp"
#include "pdenff/refine.hpp"
#include "support/builders.hpp"
#include "support/synth.hpp"

using namespace pdenff;
using testsupport::MsgKind;
using testsupport::random_rulebase;
using testsupport::random_vec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const char* tag) {
    path = std::filesystem::temp_directory_path() /
           (std::string("pdenff_acc_") + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

double elapsed_s(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- criterion 1: ECM radius bound + coverage over 1e5 samples, < 10 s ----
Outcome criterion_ecm_invariants() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(10001);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EcmParams params;  // dthr 0.18, normalized euclidean
  std::vector<Cluster> state;
  for (int n = 0; n < 100000; ++n) {
    const Vec x = {u(rng), u(rng), u(rng), u(rng)};
    const EcmResult res = ecm_update(state, x, params, n);
    const Cluster& c = state[res.index];
    if (c.radius > params.dthr + 1e-12) {
      return {false, "radius bound violated at sample " + std::to_string(n)};
    }
    const double d = distance(x, c.center, params.metric);
    const bool covered = res.event == EcmEvent::Created ? (d == 0.0) : (d <= c.radius + 1e-9);
    if (!covered) return {false, "coverage violated at sample " + std::to_string(n)};
  }
  const double secs = elapsed_s(t0);
  if (secs >= 10.0) return {false, "runtime " + std::to_string(secs) + "s exceeds 10s"};
  std::ostringstream ss;
  ss << state.size() << " clusters over 1e5 samples, all radii <= dthr, all covered, "
     << std::fixed << std::setprecision(2) << secs << "s";
  return {true, ss.str()};
}

// ---- criterion 2: RLS vs batch normal equations, 50 datasets, 1e-4 ----
Outcome criterion_rls_oracle() {
  std::mt19937 rng(10002);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int n = 20 + static_cast<int>(rng() % 81);  // <= 100 samples
    Eigen::MatrixXd z(n, 5);
    Eigen::VectorXd y(n);
    FuzzyRule rule;
    rule.center = {0, 0, 0, 0};
    rule.width = {0.1, 0.1, 0.1, 0.1};
    const Vec truth = {u(rng), u(rng), u(rng), u(rng), u(rng)};
    std::vector<Vec> xs;
    std::vector<double> ys;
    for (int i = 0; i < n; ++i) {
      const Vec x = random_vec(rng, 4);
      double target = truth[0];
      for (int j = 0; j < 4; ++j) target += truth[static_cast<std::size_t>(j + 1)] * x[static_cast<std::size_t>(j)];
      target += noise(rng);
      xs.push_back(x);
      ys.push_back(target);
      z(i, 0) = 1.0;
      for (int j = 0; j < 4; ++j) z(i, j + 1) = x[static_cast<std::size_t>(j)];
      y(i) = target;
    }
    for (int i = 0; i < n; ++i) {
      rls_update(rule, xs[static_cast<std::size_t>(i)], ys[static_cast<std::size_t>(i)], 1.0, 1.0,
                 1e8);
    }
    const Eigen::VectorXd oracle = (z.transpose() * z).ldlt().solve(z.transpose() * y);
    for (int j = 0; j < 5; ++j) {
      worst = std::max(worst, std::abs(rule.coeffs[static_cast<std::size_t>(j)] - oracle(j)));
    }
  }
  if (worst >= 1e-4) return {false, "max |online - batch| = " + std::to_string(worst)};
  std::ostringstream ss;
  ss << "50 datasets, max |online - batch| = " << std::scientific << std::setprecision(2) << worst;
  return {true, ss.str()};
}

// ---- criterion 3: analytic vs finite-difference gradients, 20 rule bases ----
Outcome criterion_gradient_check() {
  std::mt19937 rng(10003);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n_rules = 1 + static_cast<int>(rng() % 5);
    RuleBase rb = random_rulebase(rng, 4, n_rules, n_rules);
    ProfileWindow w;
    w.snapshot = rb;
    const int n = 30 + static_cast<int>(rng() % 71);
    for (int i = 0; i < n; ++i) {
      w.samples.push_back({random_vec(rng, 4), (rng() % 2) ? Label::Phish : Label::Ham, 0});
    }
    worst = std::max(worst, gradient_check(w, rb, 1e-5));
  }
  if (worst >= 1e-4) return {false, "max relative error " + std::to_string(worst)};
  std::ostringstream ss;
  ss << "20 rule bases, max relative error " << std::scientific << std::setprecision(2) << worst;
  return {true, ss.str()};
}

// ---- criterion 4: firing normalization + bounded scores, 1e4 pairs ----
Outcome criterion_firing_normalization() {
  std::mt19937 rng(10004);
  double worst_sum_err = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const int n_rules = 1 + static_cast<int>(rng() % 10);
    const RuleBase rb = random_rulebase(rng, 4, n_rules, 3, 0.05, 0.5);
    const Vec x = random_vec(rng, 4);
    const Verdict v = classify(rb, x);
    double sum = 0.0;
    for (const auto& f : v.fired) sum += f.weight;
    worst_sum_err = std::max(worst_sum_err, std::abs(sum - 1.0));
    if (std::abs(sum - 1.0) > 1e-9) {
      return {false, "weight sum off by " + std::to_string(sum - 1.0) + " at trial " +
                         std::to_string(trial)};
    }
    if (v.score < 0.0 || v.score > 1.0) {
      return {false, "score " + std::to_string(v.score) + " out of [0,1]"};
    }
  }
  std::ostringstream ss;
  ss << "1e4 pairs, max |sum(w)-1| = " << std::scientific << std::setprecision(2) << worst_sum_err;
  return {true, ss.str()};
}

MetricsReport run_mode(VectorMode mode, const std::filesystem::path& store,
                       const std::vector<CorpusEntry>& train_corpus,
                       const std::vector<CorpusEntry>& stream_corpus) {
  RunConfig cfg;
  cfg.mode = mode;
  cfg.store_path = store;
  cfg.schedule.window_size = 800;
  cfg.refine.min_refine_samples = 50;

  DetectionEngine engine(cfg, default_registry());
  std::vector<Vec> all;
  std::vector<std::pair<Vec, Label>> labeled;
  for (const auto& e : train_corpus) {
    const Vec x = engine.vector_for(e.parsed.message);
    all.push_back(x);
    if (auto l = label_from_raw(e.raw, cfg.label_header)) labeled.emplace_back(x, *l);
  }
  engine.train(all, labeled);
  return run_stream(engine, stream_corpus).report;
}

// ---- criterion 5: short mode strictly fewer rules + lower latency ----
Outcome criterion_short_vs_long() {
  std::mt19937 rng(10005);
  std::vector<CorpusEntry> train_corpus, stream_corpus;
  for (const auto& [raw, kind] : testsupport::synth_stream(rng, 300, 0.5)) {
    CorpusEntry e;
    e.parsed = parse_email(raw);
    e.raw = raw;
    train_corpus.push_back(std::move(e));
  }
  for (const auto& [raw, kind] : testsupport::synth_stream(rng, 2000, 0.5, true, 1000)) {
    CorpusEntry e;
    e.parsed = parse_email(raw);
    e.raw = raw;
    stream_corpus.push_back(std::move(e));
  }

  TempDir tmp_s("short"), tmp_l("long");
  const MetricsReport s = run_mode(VectorMode::Short, tmp_s.path, train_corpus, stream_corpus);
  const MetricsReport l = run_mode(VectorMode::Long, tmp_l.path, train_corpus, stream_corpus);
  const RunDeltas deltas = compare_runs(s, l);

  std::ostringstream ss;
  ss << "rules short/long = " << s.rule_count << "/" << l.rule_count << " (ratio "
     << std::fixed << std::setprecision(3) << deltas.rule_count_ratio.value_or(-1)
     << "), mean latency "
     << std::chrono::duration<double, std::micro>(s.mean_latency).count() << "us/"
     << std::chrono::duration<double, std::micro>(l.mean_latency).count() << "us (ratio "
     << deltas.latency_ratio.value_or(-1) << "), accuracy delta "
     << deltas.accuracy_delta.value_or(0);
  if (s.rule_count >= l.rule_count)
    return {false, "short mode not strictly fewer rules: " + ss.str()};
  if (s.mean_latency >= l.mean_latency) return {false, "short mode not faster: " + ss.str()};
  return {true, ss.str()};
}

// ---- criterion 6: zero-day drift adaptation, < 60 s ----
Outcome criterion_zero_day_adaptation() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937 rng(10006);

  // pre-drift world for bootstrap
  std::vector<CorpusEntry> train_corpus;
  for (const auto& [raw, kind] : testsupport::synth_stream(rng, 300, 0.4)) {
    CorpusEntry e;
    e.parsed = parse_email(raw);
    e.raw = raw;
    train_corpus.push_back(std::move(e));
  }

  // 3000-message stream; the drift recipe appears from message 1000 on
  std::vector<CorpusEntry> stream_corpus;
  std::vector<bool> is_drift;
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 3000; ++i) {
    MsgKind kind;
    const double r = u(rng);
    if (i < 1000) {
      kind = r < 0.6 ? MsgKind::Ham
                     : (r < 0.75 ? MsgKind::PhishClassic
                                 : (r < 0.9 ? MsgKind::PhishSpammy : MsgKind::PhishHeader));
    } else {
      kind = r < 0.45 ? MsgKind::Ham
                      : (r < 0.8 ? MsgKind::PhishDrift
                                 : (r < 0.9 ? MsgKind::PhishClassic : MsgKind::PhishSpammy));
    }
    CorpusEntry e;
    e.raw = testsupport::synth_email(rng, kind, 5000 + i);
    e.parsed = parse_email(e.raw);
    stream_corpus.push_back(std::move(e));
    is_drift.push_back(kind == MsgKind::PhishDrift);
  }

  TempDir tmp("drift");
  RunConfig cfg;
  cfg.store_path = tmp.path;
  cfg.schedule.window_size = 800;
  cfg.label_lag = 150;  // operator feedback arrives late; zero-day window
  DetectionEngine engine(cfg, default_registry());
  std::vector<Vec> all;
  std::vector<std::pair<Vec, Label>> labeled;
  for (const auto& e : train_corpus) {
    const Vec x = engine.vector_for(e.parsed.message);
    all.push_back(x);
    if (auto l = label_from_raw(e.raw, cfg.label_header)) labeled.emplace_back(x, *l);
  }
  engine.train(all, labeled);
  const StreamOutcome out = run_stream(engine, stream_corpus);

  auto drift_accuracy = [&](std::size_t from, std::size_t to) {
    int n = 0, correct = 0;
    for (std::size_t i = from; i < to && i < out.verdicts.size(); ++i) {
      if (!is_drift[i]) continue;
      n++;
      if (out.verdicts[i].label == Label::Phish) correct++;
    }
    return std::make_pair(n, n ? static_cast<double>(correct) / n : 0.0);
  };
  const auto [n_early, acc_early] = drift_accuracy(1000, 1200);
  const auto [n_late, acc_late] = drift_accuracy(2500, 3000);
  const double secs = elapsed_s(t0);

  std::ostringstream ss;
  ss << "drift-class accuracy first 200 post-drift = " << std::fixed << std::setprecision(3)
     << acc_early << " (" << n_early << " msgs), final 500 = " << acc_late << " (" << n_late
     << " msgs), gain " << (acc_late - acc_early) << ", " << std::setprecision(1) << secs << "s";
  if (n_early == 0 || n_late == 0) return {false, "degenerate drift segments: " + ss.str()};
  if (secs >= 60.0) return {false, "runtime exceeds 60s: " + ss.str()};
  if (acc_late - acc_early < 0.10) return {false, ss.str()};
  return {true, ss.str()};
}

// ---- criterion 7: lifecycle (800-sample job, atomic swap, crash safety) ----
Outcome criterion_lifecycle() {
  std::ostringstream ss;

  // (a) exactly one refinement job for exactly 800 serve-mode feedbacks
  {
    TempDir tmp("serve");
    RunConfig cfg;
    cfg.store_path = tmp.path / "store";
    cfg.schedule.window_size = 800;
    cfg.schedule.background_refine = true;
    DetectionEngine engine(cfg, default_registry());

    std::mt19937 rng(10007);
    std::vector<Vec> all;
    std::vector<std::pair<Vec, Label>> labeled;
    for (const auto& [raw, kind] : testsupport::synth_stream(rng, 200, 0.5)) {
      const auto parsed = parse_email(raw);
      const Vec x = engine.vector_for(parsed.message);
      all.push_back(x);
      labeled.emplace_back(x, testsupport::is_phish(kind) ? Label::Phish : Label::Ham);
    }
    engine.train(all, labeled);

    FilterServer server(engine, (tmp.path / "clf.sock").string(), (tmp.path / "fb.sock").string());
    server.start();
    {
      FilterClient clf((tmp.path / "clf.sock").string());
      FilterClient fb((tmp.path / "fb.sock").string());
      const auto msgs = testsupport::synth_stream(rng, 800, 0.5, false, 20000);
      for (int i = 0; i < 800; ++i) {
        const auto reply = clf.request(msgs[static_cast<std::size_t>(i)].first);
        if (!reply) return {false, "classify request " + std::to_string(i) + " got no reply"};
        const auto j = nlohmann::json::parse(*reply);
        const std::string label =
            testsupport::is_phish(msgs[static_cast<std::size_t>(i)].second) ? "phish" : "ham";
        const auto ack =
            fb.request(nlohmann::json{{"id", j["id"]}, {"label", label}}.dump());
        if (!ack || nlohmann::json::parse(*ack)["status"] != "ok") {
          return {false, "feedback " + std::to_string(i) + " rejected"};
        }
      }
    }
    engine.wait_idle();
    server.stop();
    if (engine.refinements_run() != 1) {
      return {false, "expected exactly 1 refinement job after 800 feedbacks, got " +
                         std::to_string(engine.refinements_run())};
    }
    ss << "800 feedbacks -> 1 refinement job";
  }

  // (b) atomic swap under concurrent classification
  {
    TempDir tmp("swap");
    RunConfig cfg;
    cfg.store_path = tmp.path;
    cfg.schedule.window_size = 800;
    cfg.refine.min_refine_samples = 50;
    DetectionEngine engine(cfg, default_registry());

    std::mt19937 rng(10008);
    std::normal_distribution<double> noise(0.0, 0.03);
    std::uniform_real_distribution<double> u(0, 1);
    auto blob = [&](bool phish) {
      Vec x = phish ? Vec{0.7, 0.8, 0.6, 0.7} : Vec{0.05, 0.1, 0.05, 0.1};
      for (double& v : x) v = clamp01(v + noise(rng));
      return x;
    };
    // 10% label noise: the batch refit then reliably beats the
    // recency-weighted online estimate, so the refinement gets accepted
    auto noisy = [&](Label y) {
      if (u(rng) < 0.1) return y == Label::Phish ? Label::Ham : Label::Phish;
      return y;
    };
    std::vector<Vec> all;
    std::vector<std::pair<Vec, Label>> labeled;
    for (int i = 0; i < 100; ++i) {
      all.push_back(blob(false));
      labeled.emplace_back(all.back(), Label::Ham);
      all.push_back(blob(true));
      labeled.emplace_back(all.back(), Label::Phish);
    }
    engine.train(all, labeled);

    // fill the window to 799, then hammer readers while the 800th sample
    // triggers a synchronous refinement and swap
    for (int i = 0; i < 799; ++i) {
      engine.learn(blob(i % 2 == 0), noisy(i % 2 == 0 ? Label::Phish : Label::Ham));
    }
    const RuleBase v1a = *engine.snapshot();
    RuleBase v1b = v1a;
    const Vec last_x = blob(true);
    learn_online(v1b, last_x, Label::Phish);  // predicted post-learn pre-swap state

    const std::vector<Vec> probes = {blob(true), blob(false), {0.4, 0.4, 0.4, 0.4}};
    std::vector<std::vector<std::pair<std::int64_t, double>>> valid(probes.size());

    std::atomic<bool> go{true};
    std::atomic<int> bad{0};
    std::vector<std::thread> readers;
    std::vector<std::vector<std::pair<std::size_t, std::pair<std::int64_t, double>>>> seen(4);
    for (int t = 0; t < 4; ++t) {
      readers.emplace_back([&, t] {
        std::size_t i = 0;
        while (go) {
          const std::size_t p = i++ % probes.size();
          const Verdict v = engine.classify_vec(probes[p]);
          seen[static_cast<std::size_t>(t)].push_back({p, {v.profile_version, v.score}});
        }
      });
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    engine.learn(last_x, Label::Phish);  // 800th labeled sample: refine + swap
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
    go = false;
    for (auto& t : readers) t.join();

    const RuleBase v2 = *engine.snapshot();
    for (std::size_t p = 0; p < probes.size(); ++p) {
      valid[p] = {{v1a.profile_version, classify(v1a, probes[p]).score},
                  {v1b.profile_version, classify(v1b, probes[p]).score},
                  {v2.profile_version, classify(v2, probes[p]).score}};
    }
    std::size_t checked = 0;
    for (const auto& reader : seen) {
      for (const auto& [p, obs] : reader) {
        checked++;
        bool ok = false;
        for (const auto& v : valid[p]) {
          if (v.first == obs.first && v.second == obs.second) ok = true;
        }
        if (!ok) bad++;
      }
    }
    if (v2.profile_version <= v1a.profile_version) {
      return {false, "no version bump from the swap (improvement guard rejected?)"};
    }
    if (bad > 0) {
      return {false, std::to_string(bad.load()) + " of " + std::to_string(checked) +
                         " concurrent verdicts matched no single version"};
    }
    ss << "; " << checked << " concurrent verdicts all single-version";
  }

  // (c) crash injection around the two-step commit
  {
    TempDir tmp("crash");
    RunConfig cfg;
    cfg.store_path = tmp.path;
    std::mt19937 rng(10009);
    std::vector<Vec> all;
    std::vector<std::pair<Vec, Label>> labeled;
    const auto registry = default_registry();
    for (const auto& [raw, kind] : testsupport::synth_stream(rng, 120, 0.5)) {
      const auto parsed = parse_email(raw);
      const Vec x = reduce_short(extract_long(parsed.message, registry), registry).as_vec();
      all.push_back(x);
      if (auto l = label_from_raw(raw, cfg.label_header)) labeled.emplace_back(x, *l);
    }
    {
      DetectionEngine engine(cfg, default_registry());
      engine.train(all, labeled);
      RuleBase v2 = *engine.snapshot();
      v2.profile_version = 2;
      engine.store().persist(v2);  // crash before activation
      std::ofstream(tmp.path / "ACTIVE.tmp") << "gar";  // torn pointer write
    }
    {
      DetectionEngine reopened(cfg, default_registry());
      if (!reopened.has_profile() || reopened.snapshot()->profile_version != 1) {
        return {false, "crash between persist and activate lost the active profile"};
      }
      reopened.store().activate(2);
    }
    {
      DetectionEngine reopened(cfg, default_registry());
      if (reopened.snapshot()->profile_version != 2) {
        return {false, "completed activation did not survive restart"};
      }
    }
    ss << "; crash injection kept the active profile loadable";
  }

  return {true, ss.str()};
}

// ---- criterion 8: metric identities on 100 random confusion matrices ----
Outcome criterion_metric_identities() {
  std::mt19937 rng(10010);
  std::uniform_int_distribution<int> d(0, 40);
  for (int trial = 0; trial < 100; ++trial) {
    ConfusionCounts c{d(rng), d(rng), d(rng), d(rng)};
    if (c.total() == 0) c.tp = 1;

    std::vector<std::pair<Verdict, Label>> run;
    auto add = [&run](Label pred, Label truth, std::int64_t n) {
      Verdict v;
      v.label = pred;
      v.latency = std::chrono::nanoseconds(100);
      for (std::int64_t i = 0; i < n; ++i) run.emplace_back(v, truth);
    };
    add(Label::Phish, Label::Phish, c.tp);
    add(Label::Ham, Label::Ham, c.tn);
    add(Label::Phish, Label::Ham, c.fp);
    add(Label::Ham, Label::Phish, c.fn);

    const MetricsReport r = score_run(run);
    const double tp = c.tp, tn = c.tn, fp = c.fp, fn = c.fn;
    if (r.counts.tp != c.tp || r.counts.tn != c.tn || r.counts.fp != c.fp || r.counts.fn != c.fn) {
      return {false, "confusion counts mangled at trial " + std::to_string(trial)};
    }
    auto mismatch = [](const std::optional<double>& got, bool defined, double want) {
      if (!defined) return got.has_value();
      return !got || *got != want;
    };
    if (mismatch(r.sensitivity, c.tp + c.fn > 0, tp / (tp + fn)) ||
        mismatch(r.precision, c.tp + c.fp > 0, tp / (tp + fp)) ||
        mismatch(r.accuracy, true, (tp + tn) / (tp + tn + fp + fn)) ||
        mismatch(r.fp_rate, c.fp + c.tn > 0, fp / (fp + tn)) ||
        mismatch(r.fn_rate, c.fn + c.tp > 0, fn / (fn + tp))) {
      return {false, "metric identity failed at trial " + std::to_string(trial)};
    }
    if (r.precision && r.sensitivity && *r.precision + *r.sensitivity > 0) {
      const double f = 2.0 * (*r.precision) * (*r.sensitivity) / (*r.precision + *r.sensitivity);
      if (!r.f_measure || *r.f_measure != f) {
        return {false, "f-measure identity failed at trial " + std::to_string(trial)};
      }
    }
  }
  return {true, "100 random confusion matrices reproduced exactly"};
}

// ---- criterion 9: ingestion totality + fixture bits ----
Outcome criterion_ingestion_totality() {
  const std::string fixtures = PDENFF_FIXTURE_DIR;
  std::mt19937 rng(10011);
  std::vector<std::string> seeds;
  seeds.push_back(read_file_bytes(fixtures + "/phish_ip_url.eml"));
  seeds.push_back(read_file_bytes(fixtures + "/ham_plain.eml"));
  seeds.push_back(read_file_bytes(fixtures + "/encoded.eml"));
  for (const auto& [raw, kind] : testsupport::synth_stream(rng, 20, 0.5)) seeds.push_back(raw);

  std::size_t parsed_ok = 0;
  const auto registry = default_registry();
  for (int i = 0; i < 10000; ++i) {
    std::string raw;
    if (i % 4 == 0) {
      raw.resize(rng() % 4096);
      for (auto& c : raw) c = static_cast<char>(rng() & 0xff);
    } else {
      raw = seeds[rng() % seeds.size()];
      const int mutations = 1 + static_cast<int>(rng() % 64);
      for (int m = 0; m < mutations && !raw.empty(); ++m) {
        const std::size_t pos = rng() % raw.size();
        switch (rng() % 4) {
          case 0: raw[pos] = static_cast<char>(rng() & 0xff); break;
          case 1: raw.erase(pos, rng() % 64); break;
          case 2: raw.insert(pos, 1, static_cast<char>(rng() & 0xff)); break;
          default: raw.insert(pos, "\r\n--b1\r\n"); break;  // boundary confusion
        }
      }
    }
    try {
      const ParseResult res = parse_email(raw);
      extract_long(res.message, registry);  // feature path must be total too
      parsed_ok++;
    } catch (const std::exception& e) {
      return {false, "parse failed on fuzz case " + std::to_string(i) + ": " + e.what()};
    }
  }

  // fixture bits, hand-evaluated (same table as the unit suite)
  const auto res = parse_email(read_file_bytes(fixtures + "/phish_ip_url.eml"));
  const LongVector lv = extract_long(res.message, registry);
  const std::array<int, 21> expected = {1, 1, 1, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 1, 0, 0, 0, 1};
  for (std::size_t i = 0; i < kLongVectorBits; ++i) {
    if (lv.bits[i] != (expected[i] == 1)) {
      return {false, "fixture bit " + std::to_string(i) + " (" + registry.entries()[i].id +
                         ") does not match the hand evaluation"};
    }
  }
  const auto ham = parse_email(read_file_bytes(fixtures + "/ham_plain.eml"));
  if (extract_long(ham.message, registry).bits.count() > 1) {
    return {false, "ham fixture sets more than one bit"};
  }
  return {true, std::to_string(parsed_ok) + " fuzz cases parsed, fixture bits match bit-for-bit"};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    std::function<Outcome()> fn;
  };
  const std::vector<Criterion> criteria = {
      {"ECM invariants (radius bound + coverage, 1e5 samples, <10s)", criterion_ecm_invariants},
      {"RLS matches batch normal equations (50 datasets, 1e-4)", criterion_rls_oracle},
      {"antecedent gradients match finite differences (20 rule bases, 1e-4)",
       criterion_gradient_check},
      {"firing weights normalize and scores stay in [0,1] (1e4 pairs)",
       criterion_firing_normalization},
      {"short mode beats long mode on rule count and latency (2000-message stream)",
       criterion_short_vs_long},
      {"zero-day drift adaptation (+0.10 accuracy on drifted class, <60s)",
       criterion_zero_day_adaptation},
      {"lifecycle: 800-sample window, atomic swap, crash safety", criterion_lifecycle},
      {"metric identities reproduce hand-computed values exactly", criterion_metric_identities},
      {"ingestion totality (10k fuzz cases) + fixture bits", criterion_ingestion_totality},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << (i + 1) << ": "
              << criteria[i].name << " -- " << o.detail << "\n";
    std::cout.flush();
    if (!o.pass) failures++;
  }
  if (failures) {
    std::cout << failures << " of " << criteria.size() << " criteria failed\n";
    return 1;
  }
  std::cout << "all " << criteria.size() << " criteria passed\n";
  return 0;
}
