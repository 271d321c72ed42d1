#pragma once

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "pdenff/errors.hpp"
#include "pdenff/serde.hpp"

namespace pdenff {

// Versioned on-disk profile store:
//   <root>/profiles/v<N>.json   one document per rule-base version
//   <root>/ACTIVE               activation pointer (the commit point)
//   <root>/audit.log            append-only JSONL event records
// Activation is a write-to-temp + rename, so a crash between persisting a
// version and activating it leaves the previous version active.
class ProfileStore {
 public:
  explicit ProfileStore(std::filesystem::path root) : root_(std::move(root)) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(root_ / "profiles", ec);
    if (ec) throw Error(Errc::io, "cannot create store at " + root_.string());
  }

  const std::filesystem::path& root() const { return root_; }

  std::optional<std::int64_t> active_version() const {
    std::lock_guard lock(mu_);
    return read_active();
  }

  std::vector<std::int64_t> versions() const {
    std::lock_guard lock(mu_);
    namespace fs = std::filesystem;
    std::vector<std::int64_t> out;
    for (const auto& e : fs::directory_iterator(root_ / "profiles")) {
      const std::string name = e.path().filename().string();
      if (name.size() > 6 && name[0] == 'v' && name.ends_with(".json")) {
        try {
          out.push_back(std::stoll(name.substr(1, name.size() - 6)));
        } catch (const std::exception&) {
          // stray file; not a version document
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  // Persists the document; does NOT activate it.
  void persist(const RuleBase& rb) {
    std::lock_guard lock(mu_);
    write_file(version_path(rb.profile_version), rulebase_to_json(rb).dump(2));
  }

  // Flips the activation pointer to an already-persisted version.
  void activate(std::int64_t version) {
    std::lock_guard lock(mu_);
    if (!std::filesystem::exists(version_path(version)))
      throw Error(Errc::io, "cannot activate missing version " + std::to_string(version));
    const std::filesystem::path tmp = root_ / "ACTIVE.tmp";
    write_file(tmp, std::to_string(version) + "\n");
    std::error_code ec;
    std::filesystem::rename(tmp, root_ / "ACTIVE", ec);
    if (ec) throw Error(Errc::io, "activation rename failed: " + ec.message());
  }

  RuleBase load(std::int64_t version) const {
    std::lock_guard lock(mu_);
    return load_unlocked(version);
  }

  std::optional<RuleBase> load_active() const {
    std::lock_guard lock(mu_);
    const auto v = read_active();
    if (!v) return std::nullopt;
    return load_unlocked(*v);
  }

  void append_audit(nlohmann::json record) {
    std::lock_guard lock(mu_);
    record["ts_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                          std::chrono::system_clock::now().time_since_epoch())
                          .count();
    std::ofstream f(root_ / "audit.log", std::ios::app);
    if (!f) throw Error(Errc::io, "cannot append audit log");
    f << record.dump() << "\n";
  }

  std::vector<nlohmann::json> audit_records() const {
    std::lock_guard lock(mu_);
    std::vector<nlohmann::json> out;
    std::ifstream f(root_ / "audit.log");
    std::string line;
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      out.push_back(nlohmann::json::parse(line, nullptr, /*allow_exceptions=*/false));
    }
    return out;
  }

 private:
  std::filesystem::path version_path(std::int64_t v) const {
    return root_ / "profiles" / ("v" + std::to_string(v) + ".json");
  }

  std::optional<std::int64_t> read_active() const {
    std::ifstream f(root_ / "ACTIVE");
    if (!f) return std::nullopt;
    std::int64_t v = 0;
    f >> v;
    if (f.fail()) return std::nullopt;
    return v;
  }

  RuleBase load_unlocked(std::int64_t version) const {
    std::ifstream f(version_path(version));
    if (!f) throw Error(Errc::io, "missing profile version " + std::to_string(version));
    nlohmann::json j;
    try {
      f >> j;
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::io, std::string("corrupt profile document: ") + e.what());
    }
    return rulebase_from_json(j);
  }

  static void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream f(p, std::ios::trunc | std::ios::binary);
    if (!f) throw Error(Errc::io, "cannot write " + p.string());
    f << content;
    f.flush();
    if (!f) throw Error(Errc::io, "short write to " + p.string());
  }

  std::filesystem::path root_;
  mutable std::mutex mu_;
};

}  // namespace pdenff
