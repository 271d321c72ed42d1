// pdenff: phishing-email detection engine CLI and MTA/MUA filter.
//
// Subcommands: extract | train | stream | serve | profile | registry.
// Exit codes: 0 ok (or ham in pipe mode), 1 phish (pipe mode), 2 usage
// error, 3 runtime error.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "pdenff/email.hpp"
#include "pdenff/engine.hpp"
#include "pdenff/features.hpp"
#include "pdenff/filter.hpp"
#include "pdenff/serde.hpp"

namespace {

std::atomic<bool> g_stop{false};

void handle_signal(int) { g_stop = true; }

struct CommonOpts {
  std::string config_path;
  std::string registry_path;
  std::string store_path;
  std::string mode;
  double dthr = -1;
  int label_lag = -1;
};

// Precedence: flag > PDENFF_STORE env (store path only) > config file.
pdenff::RunConfig resolve_config(const CommonOpts& o) {
  pdenff::RunConfig cfg;
  if (!o.config_path.empty()) cfg = pdenff::load_config(o.config_path);
  if (const char* env = std::getenv("PDENFF_STORE"); env && *env) cfg.store_path = env;
  if (!o.store_path.empty()) cfg.store_path = o.store_path;
  if (!o.registry_path.empty()) cfg.registry_path = o.registry_path;
  if (!o.mode.empty())
    cfg.mode = o.mode == "long" ? pdenff::VectorMode::Long : pdenff::VectorMode::Short;
  if (o.dthr > 0) cfg.ecm.dthr = o.dthr;
  if (o.label_lag >= 0) cfg.label_lag = o.label_lag;
  return cfg;
}

pdenff::FeatureRegistry resolve_registry(const pdenff::RunConfig& cfg) {
  if (cfg.registry_path) return pdenff::load_registry(*cfg.registry_path);
  return pdenff::default_registry();
}

void add_common(CLI::App* cmd, CommonOpts& o, bool with_store = true) {
  cmd->add_option("--config", o.config_path, "JSON config file");
  cmd->add_option("--registry", o.registry_path, "feature registry JSON (default: built-in)");
  if (with_store) cmd->add_option("--store", o.store_path, "profile store directory");
  cmd->add_option("--mode", o.mode, "feature vector mode: short | long")
      ->check(CLI::IsMember({"short", "long"}));
  cmd->add_option("--dthr", o.dthr, "ECM distance threshold");
  cmd->add_option("--label-lag", o.label_lag, "messages between verdict and label consumption");
}

struct LabeledCorpus {
  std::vector<pdenff::Vec> all;
  std::vector<std::pair<pdenff::Vec, pdenff::Label>> labeled;
};

LabeledCorpus vectorize_corpus(const std::vector<pdenff::CorpusEntry>& corpus,
                               const pdenff::FeatureRegistry& registry,
                               const pdenff::RunConfig& cfg) {
  LabeledCorpus out;
  for (const auto& e : corpus) {
    const pdenff::LongVector lv = pdenff::extract_long(e.parsed.message, registry);
    const pdenff::Vec x = cfg.mode == pdenff::VectorMode::Long
                              ? lv.as_vec()
                              : pdenff::reduce_short(lv, registry).as_vec();
    out.all.push_back(x);
    if (auto label = pdenff::label_from_raw(e.raw, cfg.label_header)) {
      out.labeled.emplace_back(x, *label);
    }
  }
  return out;
}

int cmd_extract(const CommonOpts& opts, const std::string& input) {
  const auto cfg = resolve_config(opts);
  const auto registry = resolve_registry(cfg);
  const auto corpus = pdenff::read_corpus(input);
  for (const auto& e : corpus) {
    const pdenff::LongVector lv = pdenff::extract_long(e.parsed.message, registry);
    const pdenff::ShortVector sv = pdenff::reduce_short(lv, registry);
    nlohmann::json bits = nlohmann::json::array();
    for (std::size_t i = 0; i < pdenff::kLongVectorBits; ++i) bits.push_back(lv.bits[i] ? 1 : 0);
    nlohmann::json rec = {{"id", e.parsed.message.identifier(e.raw)},
                          {"bits", bits},
                          {"scores",
                           {{"spam", sv.spam_score},
                            {"body", sv.body_score},
                            {"url", sv.url_score},
                            {"header", sv.header_score}}}};
    std::cout << rec.dump() << "\n";
  }
  return 0;
}

int cmd_train(const CommonOpts& opts, const std::string& input) {
  auto cfg = resolve_config(opts);
  if (cfg.store_path.empty()) throw pdenff::Error(pdenff::Errc::bad_config, "train needs --store");
  auto registry = resolve_registry(cfg);
  const auto corpus = pdenff::read_corpus(input);
  const LabeledCorpus lc = vectorize_corpus(corpus, registry, cfg);

  pdenff::DetectionEngine engine(cfg, std::move(registry));
  const pdenff::TrainSummary s = engine.train(lc.all, lc.labeled);
  std::cout << nlohmann::json{{"event", "trained"},
                              {"version", s.version},
                              {"samples", s.samples},
                              {"labeled", s.labeled},
                              {"rules", s.rules}}
                   .dump()
            << "\n";
  return 0;
}

int cmd_stream(const CommonOpts& opts, const std::string& input) {
  auto cfg = resolve_config(opts);
  if (cfg.store_path.empty()) throw pdenff::Error(pdenff::Errc::bad_config, "stream needs --store");
  auto registry = resolve_registry(cfg);
  const auto corpus = pdenff::read_corpus(input);

  pdenff::DetectionEngine engine(cfg, std::move(registry));
  const pdenff::StreamOutcome out = pdenff::run_stream(engine, corpus);
  std::cout << pdenff::report_to_json(out.report).dump(2) << "\n";
  return 0;
}

int cmd_serve(const CommonOpts& opts, const std::string& io_mode, const std::string& socket,
              const std::string& feedback_socket) {
  auto cfg = resolve_config(opts);
  if (cfg.store_path.empty()) throw pdenff::Error(pdenff::Errc::bad_config, "serve needs --store");
  if (!socket.empty()) cfg.socket_path = socket;
  if (!feedback_socket.empty()) cfg.feedback_socket_path = feedback_socket;
  auto registry = resolve_registry(cfg);

  if (io_mode == "pipe") {
    pdenff::DetectionEngine engine(cfg, std::move(registry));
    if (!engine.has_profile())
      throw pdenff::Error(pdenff::Errc::no_active_profile, "no active profile; run train first");
    std::string raw((std::istreambuf_iterator<char>(std::cin)), std::istreambuf_iterator<char>());
    const pdenff::PipeOutcome out = pdenff::run_pipe_filter(engine, raw);
    std::cout << out.output;
    return out.exit_code;
  }

  cfg.schedule.background_refine = true;
  if (cfg.socket_path.empty()) cfg.socket_path = (cfg.store_path / "pdenff.sock").string();
  if (cfg.feedback_socket_path.empty()) cfg.feedback_socket_path = cfg.socket_path + ".fb";
  pdenff::DetectionEngine engine(cfg, std::move(registry));
  if (!engine.has_profile())
    throw pdenff::Error(pdenff::Errc::no_active_profile, "no active profile; run train first");

  pdenff::FilterServer server(engine, cfg.socket_path, cfg.feedback_socket_path);
  server.start();
  std::cerr << "listening on " << cfg.socket_path << " (feedback: " << cfg.feedback_socket_path
            << ")\n";
  std::signal(SIGINT, handle_signal);
  std::signal(SIGTERM, handle_signal);
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.stop();
  engine.wait_idle();
  return 0;
}

int cmd_profile(const CommonOpts& opts, const std::string& action, std::int64_t version) {
  const auto cfg = resolve_config(opts);
  if (cfg.store_path.empty()) throw pdenff::Error(pdenff::Errc::bad_config, "profile needs --store");
  pdenff::ProfileStore store(cfg.store_path);
  if (action == "list") {
    const auto active = store.active_version();
    nlohmann::json out = nlohmann::json::array();
    for (const auto v : store.versions()) {
      out.push_back({{"version", v}, {"active", active && *active == v}});
    }
    std::cout << out.dump(2) << "\n";
    return 0;
  }
  if (action == "show") {
    std::cout << pdenff::rulebase_to_json(store.load(version)).dump(2) << "\n";
    return 0;
  }
  if (action == "activate") {
    store.activate(version);
    store.append_audit({{"event", "manual_activate"}, {"to_version", version}});
    std::cout << nlohmann::json{{"event", "activated"}, {"version", version}}.dump() << "\n";
    return 0;
  }
  throw pdenff::Error(pdenff::Errc::bad_config, "unknown profile action " + action);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pdenff - streaming phishing email detection engine"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string input, io_mode = "pipe", socket, feedback_socket, profile_action;
  std::int64_t profile_version = 0;

  auto* extract = app.add_subcommand("extract", "dump long/short feature vectors for a corpus");
  add_common(extract, opts, /*with_store=*/false);
  extract->add_option("--input", input, "eml file, mbox file, or directory of .eml")->required();

  auto* train = app.add_subcommand("train", "bootstrap-train an initial profile from a labeled corpus");
  add_common(train, opts);
  train->add_option("--input", input)->required();

  auto* stream = app.add_subcommand("stream", "prequential stream evaluation with online learning");
  add_common(stream, opts);
  stream->add_option("--input", input)->required();

  auto* serve = app.add_subcommand("serve", "run as a mail filter (pipe or socket mode)");
  add_common(serve, opts);
  serve->add_option("--io", io_mode, "pipe | socket")->check(CLI::IsMember({"pipe", "socket"}));
  serve->add_option("--socket", socket, "classification socket path");
  serve->add_option("--feedback-socket", feedback_socket, "label feedback socket path");

  auto* profile = app.add_subcommand("profile", "inspect or activate stored profile versions");
  add_common(profile, opts);
  profile->add_option("action", profile_action, "list | show | activate")
      ->required()
      ->check(CLI::IsMember({"list", "show", "activate"}));
  profile->add_option("version", profile_version, "profile version for show/activate");

  auto* registry = app.add_subcommand("registry", "dump the feature registry");
  add_common(registry, opts, /*with_store=*/false);
  std::string registry_action = "dump";
  registry->add_option("action", registry_action)->check(CLI::IsMember({"dump"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return e.get_exit_code() == 0 ? 0 : 2;
  }

  try {
    if (extract->parsed()) return cmd_extract(opts, input);
    if (train->parsed()) return cmd_train(opts, input);
    if (stream->parsed()) return cmd_stream(opts, input);
    if (serve->parsed()) return cmd_serve(opts, io_mode, socket, feedback_socket);
    if (profile->parsed()) return cmd_profile(opts, profile_action, profile_version);
    if (registry->parsed()) {
      const auto cfg = resolve_config(opts);
      std::cout << pdenff::registry_to_json(resolve_registry(cfg)).dump(2) << "\n";
      return 0;
    }
  } catch (const pdenff::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.code() == pdenff::Errc::bad_config ? 2 : 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 2;
}
