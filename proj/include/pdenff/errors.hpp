#pragma once

#include <stdexcept>
#include <string>

namespace pdenff {

enum class Errc {
  cold_start,          // classify on an empty rule base
  insufficient_window, // refinement window below min_refine_samples
  empty_batch,
  empty_input,
  single_class_corpus,
  no_active_profile,
  mismatched_runs,
  io,
  bad_config,
  protocol,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::cold_start: return "COLD_START";
    case Errc::insufficient_window: return "INSUFFICIENT_WINDOW";
    case Errc::empty_batch: return "EMPTY_BATCH";
    case Errc::empty_input: return "EMPTY_INPUT";
    case Errc::single_class_corpus: return "SINGLE_CLASS_CORPUS";
    case Errc::no_active_profile: return "NO_ACTIVE_PROFILE";
    case Errc::mismatched_runs: return "MISMATCHED_RUNS";
    case Errc::io: return "IO";
    case Errc::bad_config: return "BAD_CONFIG";
    case Errc::protocol: return "PROTOCOL";
  }
  return "UNKNOWN";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

}  // namespace pdenff
