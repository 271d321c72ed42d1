#pragma once

#include <poll.h>
#include <sys/socket.h>
#include <sys/un.h>
#include <unistd.h>

#include <atomic>
#include <cstdint>
#include <cstring>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "pdenff/engine.hpp"
#include "pdenff/errors.hpp"
#include "pdenff/serde.hpp"

namespace pdenff {

inline constexpr const char* kFilterSchemaVersion = "pdenff/1";

// Prepends the verdict headers, leaving the original bytes untouched so the
// filter stays transparent: output minus the two added lines is the input.
inline std::string stamp_verdict_headers(std::string_view raw, const Verdict& v) {
  const std::size_t first_eol = raw.find('\n');
  const bool crlf = first_eol != std::string_view::npos && first_eol > 0 && raw[first_eol - 1] == '\r';
  const char* eol = crlf ? "\r\n" : "\n";
  std::ostringstream out;
  out << "X-PDENFF-Verdict: " << label_name(v.label) << "; score=" << v.score
      << "; profile=" << v.profile_version << eol;
  out << "X-PDENFF-Version: " << kFilterSchemaVersion << eol;
  out << raw;
  return out.str();
}

struct PipeOutcome {
  std::string output;
  int exit_code = 0;  // 0 ham, 1 phish
};

// One-shot MTA/MUA pipe filter: stamp and forward, never drop.
inline PipeOutcome run_pipe_filter(DetectionEngine& engine, std::string_view raw) {
  const ParseResult parsed = parse_email(raw);
  const Verdict v = engine.classify_message(parsed.message, raw);
  PipeOutcome out;
  out.output = stamp_verdict_headers(raw, v);
  out.exit_code = v.label == Label::Phish ? 1 : 0;
  return out;
}

namespace detail {

// Length-prefixed framing: 4-byte big-endian payload size, then the payload.
inline bool read_exact(int fd, void* buf, std::size_t n) {
  auto* p = static_cast<char*>(buf);
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, p + got, n - got, 0);
    if (r <= 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

inline bool write_exact(int fd, const void* buf, std::size_t n) {
  const auto* p = static_cast<const char*>(buf);
  std::size_t sent = 0;
  while (sent < n) {
    const ssize_t r = ::send(fd, p + sent, n - sent, MSG_NOSIGNAL);
    if (r <= 0) return false;
    sent += static_cast<std::size_t>(r);
  }
  return true;
}

inline bool write_frame(int fd, std::string_view payload) {
  unsigned char hdr[4];
  const std::uint32_t n = static_cast<std::uint32_t>(payload.size());
  hdr[0] = static_cast<unsigned char>(n >> 24);
  hdr[1] = static_cast<unsigned char>(n >> 16);
  hdr[2] = static_cast<unsigned char>(n >> 8);
  hdr[3] = static_cast<unsigned char>(n);
  return write_exact(fd, hdr, 4) && write_exact(fd, payload.data(), payload.size());
}

// Returns false when the connection should close.
inline bool read_frame(int fd, std::string& payload, std::size_t cap, bool& oversized) {
  unsigned char hdr[4];
  oversized = false;
  if (!read_exact(fd, hdr, 4)) return false;
  const std::uint32_t n = (std::uint32_t(hdr[0]) << 24) | (std::uint32_t(hdr[1]) << 16) |
                          (std::uint32_t(hdr[2]) << 8) | std::uint32_t(hdr[3]);
  if (n > cap) {
    oversized = true;
    return false;
  }
  payload.resize(n);
  return n == 0 || read_exact(fd, payload.data(), n);
}

}  // namespace detail

// Socket-mode filter: a classification endpoint taking raw email frames and
// answering verdict records, plus a feedback endpoint taking
// {"id":..,"label":..} records that drive online learning and profiling.
class FilterServer {
 public:
  FilterServer(DetectionEngine& engine, std::string socket_path, std::string feedback_path)
      : engine_(engine), socket_path_(std::move(socket_path)), feedback_path_(std::move(feedback_path)) {}

  ~FilterServer() { stop(); }

  void start() {
    classify_fd_ = listen_on(socket_path_);
    feedback_fd_ = listen_on(feedback_path_);
    running_ = true;
    classify_thread_ = std::thread([this] { accept_loop(classify_fd_, /*feedback=*/false); });
    feedback_thread_ = std::thread([this] { accept_loop(feedback_fd_, /*feedback=*/true); });
  }

  void stop() {
    if (!running_.exchange(false)) return;
    ::shutdown(classify_fd_, SHUT_RDWR);
    ::shutdown(feedback_fd_, SHUT_RDWR);
    ::close(classify_fd_);
    ::close(feedback_fd_);
    if (classify_thread_.joinable()) classify_thread_.join();
    if (feedback_thread_.joinable()) feedback_thread_.join();
    {
      // unblock handlers still waiting on open client connections
      std::lock_guard lock(threads_mu_);
      for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    }
    for (auto& t : conn_threads_) {
      if (t.joinable()) t.join();
    }
    ::unlink(socket_path_.c_str());
    ::unlink(feedback_path_.c_str());
  }

 private:
  int listen_on(const std::string& path) {
    ::unlink(path.c_str());
    const int fd = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd < 0) throw Error(Errc::io, "socket() failed");
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    if (path.size() >= sizeof(addr.sun_path)) throw Error(Errc::io, "socket path too long: " + path);
    std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
    if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw Error(Errc::io, "bind() failed on " + path);
    }
    if (::listen(fd, 64) != 0) {
      ::close(fd);
      throw Error(Errc::io, "listen() failed on " + path);
    }
    return fd;
  }

  void accept_loop(int listen_fd, bool feedback) {
    while (running_) {
      // poll so shutdown can stop the loop; close alone does not wake a
      // blocked accept on a unix socket
      pollfd pfd{listen_fd, POLLIN, 0};
      const int pr = ::poll(&pfd, 1, 200);
      if (pr <= 0) continue;
      const int conn = ::accept(listen_fd, nullptr, nullptr);
      if (conn < 0) {
        if (!running_) return;
        continue;
      }
      std::lock_guard lock(threads_mu_);
      conn_fds_.push_back(conn);
      conn_threads_.emplace_back([this, conn, feedback] {
        serve_connection(conn, feedback);
        ::close(conn);
      });
    }
  }

  void serve_connection(int fd, bool feedback) {
    std::string payload;
    while (running_) {
      bool oversized = false;
      if (!detail::read_frame(fd, payload, engine_.config().max_message_bytes, oversized)) {
        if (oversized) {
          // Distinct rejection; the stream cannot be resynced past an
          // undelivered body, so the connection closes after the reply.
          detail::write_frame(fd, nlohmann::json{{"status", "error"}, {"code", "oversized"}}.dump());
        }
        return;
      }
      nlohmann::json reply;
      try {
        reply = feedback ? handle_feedback(payload) : handle_classify(payload);
      } catch (const Error& e) {
        reply = {{"status", "error"}, {"code", errc_name(e.code())}, {"detail", e.what()}};
      } catch (const std::exception& e) {
        reply = {{"status", "error"}, {"code", "internal"}, {"detail", e.what()}};
      }
      if (!detail::write_frame(fd, reply.dump())) return;
    }
  }

  nlohmann::json handle_classify(const std::string& raw) {
    const ParseResult parsed = parse_email(raw);
    const Verdict v = engine_.classify_message(parsed.message, raw);
    nlohmann::json out = verdict_to_json(v, parsed.message.identifier(raw));
    out["status"] = "ok";
    return out;
  }

  nlohmann::json handle_feedback(const std::string& payload) {
    nlohmann::json j = nlohmann::json::parse(payload, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.contains("id") || !j.contains("label")) {
      return {{"status", "error"}, {"code", "bad_frame"}};
    }
    const std::string lv = to_lower(j["label"].get<std::string>());
    if (lv != "phish" && lv != "ham") return {{"status", "error"}, {"code", "bad_label"}};
    const bool known = engine_.feedback(j["id"].get<std::string>(),
                                        lv == "phish" ? Label::Phish : Label::Ham);
    if (!known) return {{"status", "error"}, {"code", "unknown_id"}};
    return {{"status", "ok"}};
  }

  DetectionEngine& engine_;
  std::string socket_path_;
  std::string feedback_path_;
  int classify_fd_ = -1;
  int feedback_fd_ = -1;
  std::atomic<bool> running_{false};
  std::thread classify_thread_;
  std::thread feedback_thread_;
  std::vector<std::thread> conn_threads_;
  std::vector<int> conn_fds_;
  std::mutex threads_mu_;
};

// Minimal client used by the CLI and the tests.
class FilterClient {
 public:
  explicit FilterClient(const std::string& path) {
    fd_ = ::socket(AF_UNIX, SOCK_STREAM, 0);
    if (fd_ < 0) throw Error(Errc::io, "socket() failed");
    sockaddr_un addr{};
    addr.sun_family = AF_UNIX;
    std::strncpy(addr.sun_path, path.c_str(), sizeof(addr.sun_path) - 1);
    if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd_);
      fd_ = -1;
      throw Error(Errc::io, "cannot connect to " + path);
    }
  }

  ~FilterClient() {
    if (fd_ >= 0) ::close(fd_);
  }

  FilterClient(const FilterClient&) = delete;
  FilterClient& operator=(const FilterClient&) = delete;

  // Sends one frame and reads one reply frame; empty optional on EOF.
  std::optional<std::string> request(std::string_view payload) {
    if (!detail::write_frame(fd_, payload)) return std::nullopt;
    std::string reply;
    bool oversized = false;
    if (!detail::read_frame(fd_, reply, 1 << 26, oversized)) return std::nullopt;
    return reply;
  }

  // Sends a raw 4-byte header with an arbitrary declared size (fuzzing hook).
  bool send_raw(const void* data, std::size_t n) { return detail::write_exact(fd_, data, n); }

  // Reads one reply frame without sending anything first.
  std::optional<std::string> read_reply() {
    std::string reply;
    bool oversized = false;
    if (!detail::read_frame(fd_, reply, 1 << 26, oversized)) return std::nullopt;
    return reply;
  }

 private:
  int fd_ = -1;
};

}  // namespace pdenff
