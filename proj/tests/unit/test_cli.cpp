#include <gtest/gtest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "support/synth.hpp"

namespace {

const std::string kCli = PDENFF_CLI_PATH;
const std::string kFixtures = PDENFF_FIXTURE_DIR;

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run(const std::string& cmd) {
  RunResult r;
  FILE* p = popen((cmd + " 2>/dev/null").c_str(), "r");
  if (!p) return r;
  std::array<char, 4096> buf;
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), p)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(p);
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

struct TempDir {
  std::filesystem::path path;
  TempDir() {
    path = std::filesystem::temp_directory_path() /
           ("pdenff_cli_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
};

std::filesystem::path make_labeled_mbox(const TempDir& tmp, int n, unsigned seed,
                                        const char* name = "corpus.mbox") {
  std::mt19937 rng(seed);
  const auto msgs = pdenff::testsupport::synth_stream(rng, n, 0.5);
  const auto path = tmp.path / name;
  pdenff::testsupport::write_mbox(path, msgs);
  return path;
}

}  // namespace

TEST(Cli, RegistryDumpIsValidJsonWith21Entries) {
  const RunResult r = run(kCli + " registry dump");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["schema"], "pdenff.registry/1");
  EXPECT_EQ(j["entries"].size(), 21u);
}

TEST(Cli, ExtractEmitsOneRecordPerMessage) {
  const RunResult r = run(kCli + " extract --input " + kFixtures + "/three.mbox");
  ASSERT_EQ(r.exit_code, 0);
  int lines = 0;
  std::istringstream ss(r.out);
  std::string line;
  while (std::getline(ss, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["bits"].size(), 21u);
    EXPECT_TRUE(j.contains("scores"));
    lines++;
  }
  EXPECT_EQ(lines, 3);
}

TEST(Cli, ExtractMatchesSharedFixtureExpectations) {
  const RunResult r = run(kCli + " extract --input " + kFixtures + "/phish_ip_url.eml");
  ASSERT_EQ(r.exit_code, 0);
  const auto j = nlohmann::json::parse(r.out);
  // same hand-evaluated bits as the feature-extraction unit test
  const std::array<int, 21> expected = {1, 1, 1, 0, 1, 1, 0, 0, 0, 0, 0, 1, 1, 1, 1, 0, 1, 0, 0, 0, 1};
  for (std::size_t i = 0; i < 21; ++i) {
    EXPECT_EQ(j["bits"][i].get<int>(), expected[i]) << "bit " << i;
  }
  EXPECT_DOUBLE_EQ(j["scores"]["url"].get<double>(), 3.0 / 8.0);
  EXPECT_DOUBLE_EQ(j["scores"]["header"].get<double>(), 0.8);
}

TEST(Cli, ExtractUnreadableInputFails) {
  const RunResult r = run(kCli + " extract --input /no/such/corpus");
  EXPECT_EQ(r.exit_code, 3);
}

TEST(Cli, UnknownFlagIsUsageError) {
  const RunResult r = run(kCli + " extract --definitely-not-a-flag x");
  EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, TrainThenStreamProducesMetricsReport) {
  TempDir tmp;
  const auto corpus = make_labeled_mbox(tmp, 160, 42);
  const std::string store = (tmp.path / "store").string();

  const RunResult t = run(kCli + " train --input " + corpus.string() + " --store " + store);
  ASSERT_EQ(t.exit_code, 0) << t.out;
  const auto tj = nlohmann::json::parse(t.out);
  EXPECT_EQ(tj["version"], 1);
  EXPECT_GE(tj["rules"].get<int>(), 2);

  const RunResult s = run(kCli + " stream --input " + corpus.string() + " --store " + store);
  ASSERT_EQ(s.exit_code, 0);
  const auto sj = nlohmann::json::parse(s.out);
  EXPECT_EQ(sj["schema"], "pdenff.metrics/1");
  EXPECT_EQ(sj["samples"], 160);
  EXPECT_GE(sj["accuracy"].get<double>(), 0.8);
}

TEST(Cli, TrainRejectsSingleClassCorpus) {
  TempDir tmp;
  std::mt19937 rng(7);
  std::vector<std::pair<std::string, pdenff::testsupport::MsgKind>> msgs;
  for (int i = 0; i < 20; ++i) {
    msgs.emplace_back(pdenff::testsupport::synth_email(rng, pdenff::testsupport::MsgKind::Ham, i),
                      pdenff::testsupport::MsgKind::Ham);
  }
  const auto path = tmp.path / "ham_only.mbox";
  pdenff::testsupport::write_mbox(path, msgs);
  const RunResult r = run(kCli + " train --input " + path.string() + " --store " +
                          (tmp.path / "store").string());
  EXPECT_EQ(r.exit_code, 3);
}

TEST(Cli, StreamWithoutProfileIsAnError) {
  TempDir tmp;
  const auto corpus = make_labeled_mbox(tmp, 10, 3);
  const RunResult r = run(kCli + " stream --input " + corpus.string() + " --store " +
                          (tmp.path / "store").string());
  EXPECT_EQ(r.exit_code, 3);
}

TEST(Cli, PipeModeStampsAndExitsPerVerdict) {
  TempDir tmp;
  const auto corpus = make_labeled_mbox(tmp, 160, 99);
  const std::string store = (tmp.path / "store").string();
  ASSERT_EQ(run(kCli + " train --input " + corpus.string() + " --store " + store).exit_code, 0);

  const RunResult ham =
      run(kCli + " serve --io pipe --store " + store + " < " + kFixtures + "/ham_plain.eml");
  EXPECT_EQ(ham.exit_code, 0);
  EXPECT_EQ(ham.out.rfind("X-PDENFF-Verdict: ham;", 0), 0u);

  const RunResult phish =
      run(kCli + " serve --io pipe --store " + store + " < " + kFixtures + "/phish_ip_url.eml");
  EXPECT_EQ(phish.exit_code, 1);
  EXPECT_EQ(phish.out.rfind("X-PDENFF-Verdict: phish;", 0), 0u);

  // filter transparency: output minus the two stamped lines equals the input
  std::ifstream f(kFixtures + "/phish_ip_url.eml", std::ios::binary);
  std::string original((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  std::size_t cut = phish.out.find('\n');
  cut = phish.out.find('\n', cut + 1);
  EXPECT_EQ(phish.out.substr(cut + 1), original);
}

TEST(Cli, ProfileListShowActivate) {
  TempDir tmp;
  const auto corpus = make_labeled_mbox(tmp, 160, 5);
  const std::string store = (tmp.path / "store").string();
  ASSERT_EQ(run(kCli + " train --input " + corpus.string() + " --store " + store).exit_code, 0);

  const RunResult list = run(kCli + " profile list --store " + store);
  ASSERT_EQ(list.exit_code, 0);
  const auto lj = nlohmann::json::parse(list.out);
  ASSERT_EQ(lj.size(), 1u);
  EXPECT_EQ(lj[0]["version"], 1);
  EXPECT_TRUE(lj[0]["active"].get<bool>());

  const RunResult show = run(kCli + " profile show 1 --store " + store);
  ASSERT_EQ(show.exit_code, 0);
  EXPECT_EQ(nlohmann::json::parse(show.out)["schema"], "pdenff.profile/1");

  const RunResult act = run(kCli + " profile activate 1 --store " + store);
  EXPECT_EQ(act.exit_code, 0);
  const RunResult missing = run(kCli + " profile show 9 --store " + store);
  EXPECT_EQ(missing.exit_code, 3);
}

TEST(Cli, RegistryParameterOverrideChangesBits) {
  TempDir tmp;
  // dump the default registry, tighten the many-links threshold to 1
  const RunResult dump = run(kCli + " registry dump");
  ASSERT_EQ(dump.exit_code, 0);
  auto reg = nlohmann::json::parse(dump.out);
  for (auto& e : reg["entries"]) {
    if (e["id"] == "url_many_links") e["parameters"]["max_links"] = 1;
  }
  const auto reg_path = tmp.path / "tight.json";
  std::ofstream(reg_path) << reg.dump();

  // the phish fixture has 2 links: bit off by default, on with the override
  const std::string input = kFixtures + "/phish_ip_url.eml";
  const auto def = nlohmann::json::parse(run(kCli + " extract --input " + input).out);
  const auto tight = nlohmann::json::parse(
      run(kCli + " extract --input " + input + " --registry " + reg_path.string()).out);
  EXPECT_EQ(def["bits"][9].get<int>(), 0);
  EXPECT_EQ(tight["bits"][9].get<int>(), 1) << "threshold from the registry file must apply";
}

TEST(Cli, ConfigFileAppliesAndFlagsOverride) {
  TempDir tmp;
  const auto corpus = make_labeled_mbox(tmp, 160, 77);
  const auto cfg_path = tmp.path / "cfg.json";
  std::ofstream(cfg_path) << nlohmann::json{{"store", (tmp.path / "store_from_cfg").string()},
                                            {"ecm", {{"dthr", 0.25}}}}
                                 .dump();
  const RunResult t =
      run(kCli + " train --input " + corpus.string() + " --config " + cfg_path.string());
  ASSERT_EQ(t.exit_code, 0);
  EXPECT_TRUE(std::filesystem::exists(tmp.path / "store_from_cfg" / "ACTIVE"));

  // flag wins over config
  const RunResult t2 = run(kCli + " train --input " + corpus.string() + " --config " +
                           cfg_path.string() + " --store " + (tmp.path / "store_flag").string());
  ASSERT_EQ(t2.exit_code, 0);
  EXPECT_TRUE(std::filesystem::exists(tmp.path / "store_flag" / "ACTIVE"));
}

TEST(Cli, InvalidConfigIsUsageError) {
  TempDir tmp;
  const auto cfg_path = tmp.path / "bad.json";
  std::ofstream(cfg_path) << nlohmann::json{{"ecm", {{"dthr", 7.0}}}}.dump();  // out of range
  const auto corpus = make_labeled_mbox(tmp, 20, 1);
  const RunResult r = run(kCli + " train --input " + corpus.string() + " --store " +
                          (tmp.path / "s").string() + " --config " + cfg_path.string());
  EXPECT_EQ(r.exit_code, 2);
}

TEST(Cli, EnvVarOverridesStorePath) {
  TempDir tmp;
  const auto corpus = make_labeled_mbox(tmp, 160, 8);
  const std::string store = (tmp.path / "env_store").string();
  const RunResult t =
      run("PDENFF_STORE=" + store + " " + kCli + " train --input " + corpus.string());
  ASSERT_EQ(t.exit_code, 0);
  EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(store) / "ACTIVE"));
}
