#pragma once

#include <chrono>
#include <cstdint>
#include <deque>
#include <optional>
#include <vector>

#include "pdenff/errors.hpp"
#include "pdenff/refine.hpp"

namespace pdenff {

enum class RefineTrigger { OnWindowFull, Timed };

struct ProfileSchedule {
  std::size_t window_size = 800;
  RefineTrigger refine_trigger = RefineTrigger::OnWindowFull;
  // Refinement cycles between consolidations; 6 daily cycles plus the
  // consolidation pass mirror a weekly full-rule rebuild.
  int consolidation_every = 6;
  // Timed mode: a window also closes after this long, even if not full.
  std::chrono::seconds timed_interval{86400};
  bool background_refine = false;

  void validate(std::size_t min_refine_samples) const {
    if (window_size < min_refine_samples)
      throw Error(Errc::bad_config, "window_size must be >= min_refine_samples");
    if (consolidation_every < 1) throw Error(Errc::bad_config, "consolidation_every must be >= 1");
  }
};

struct RefinementJob {
  std::int64_t job_id = 0;
  ProfileWindow window;
  bool consolidation = false;
};

// Buffers labeled samples into fixed-size profile windows and decides when a
// refinement or consolidation pass is due. Retains only the windows needed
// for bounded consolidation replay.
class ProfileManager {
 public:
  explicit ProfileManager(ProfileSchedule schedule) : schedule_(schedule) {
    window_opened_ = std::chrono::steady_clock::now();
  }

  const ProfileSchedule& schedule() const { return schedule_; }

  // Labeled samples buffer; a full window becomes a refinement job carrying
  // the window and the rule-base snapshot handed in by the caller.
  std::optional<RefinementJob> ingest(Sample sample, const RuleBase& snapshot) {
    current_.push_back(std::move(sample));
    const bool full = current_.size() >= schedule_.window_size;
    const bool timed_out =
        schedule_.refine_trigger == RefineTrigger::Timed &&
        std::chrono::steady_clock::now() - window_opened_ >= schedule_.timed_interval &&
        !current_.empty();
    if (!full && !timed_out) return std::nullopt;

    RefinementJob job;
    job.job_id = next_job_id_++;
    job.window.samples = std::move(current_);
    job.window.snapshot = snapshot;
    current_.clear();
    window_opened_ = std::chrono::steady_clock::now();

    completed_.push_back(job.window.samples);
    while (completed_.size() > static_cast<std::size_t>(schedule_.consolidation_every)) {
      completed_.pop_front();
    }
    return job;
  }

  // Call after each refinement cycle; true when a consolidation pass is due.
  bool refinement_cycle_done() {
    cycles_completed_++;
    return cycles_completed_ % schedule_.consolidation_every == 0;
  }

  int cycles_completed() const { return cycles_completed_; }

  // Bounded replay: the concatenation of the retained windows.
  std::vector<Sample> consolidation_samples(int last_k) const {
    if (cycles_completed_ == 0)
      throw Error(Errc::insufficient_window, "no completed refinement cycle to consolidate");
    std::vector<Sample> out;
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(last_k), completed_.size());
    for (std::size_t i = completed_.size() - k; i < completed_.size(); ++i) {
      out.insert(out.end(), completed_[i].begin(), completed_[i].end());
    }
    return out;
  }

  std::size_t buffered_samples() const { return current_.size(); }

  // Everything currently held: the open window plus retained replay windows.
  std::size_t retained_samples() const {
    std::size_t n = current_.size();
    for (const auto& w : completed_) n += w.size();
    return n;
  }

 private:
  ProfileSchedule schedule_;
  std::vector<Sample> current_;
  std::deque<std::vector<Sample>> completed_;
  std::chrono::steady_clock::time_point window_opened_;
  std::int64_t next_job_id_ = 1;
  int cycles_completed_ = 0;
};

}  // namespace pdenff
