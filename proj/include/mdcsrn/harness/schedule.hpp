#pragma once

#include <string>
#include <vector>

#include "mdcsrn/harness/event_log.hpp"

namespace mdcsrn {

struct ScheduleConstants {
  std::int64_t warmup = 10000;      // critic-only steps before the first generator update
  std::int64_t ratio = 5;           // critic steps per generator step afterwards
  std::int64_t burst = 200;         // extra critic steps ...
  std::int64_t burst_every = 500;   // ... after every this many generator steps

  void validate() const {
    if (warmup < 0 || ratio < 1 || burst < 0 || burst_every < 1)
      throw ConfigError("gan schedule: warmup >= 0, ratio >= 1, burst >= 0, burst_every >= 1 required");
  }
};

enum class StepKind { kCritic, kGenerator };

/// Decides, step by step, which network the GAN phase updates.
class GanSchedule {
 public:
  explicit GanSchedule(ScheduleConstants c = {}) : c_(c) { c_.validate(); }

  StepKind next() {
    if (critic_total_ < c_.warmup) return critic();
    if (burst_left_ > 0) {
      --burst_left_;
      return critic();
    }
    if (since_g_ < c_.ratio) {
      ++since_g_;
      return critic();
    }
    since_g_ = 0;
    ++g_total_;
    if (g_total_ % c_.burst_every == 0) burst_left_ = c_.burst;
    return StepKind::kGenerator;
  }

  std::int64_t generator_steps() const { return g_total_; }
  std::int64_t critic_steps() const { return critic_total_; }
  const ScheduleConstants& constants() const { return c_; }

 private:
  StepKind critic() {
    ++critic_total_;
    return StepKind::kCritic;
  }

  ScheduleConstants c_;
  std::int64_t critic_total_ = 0, g_total_ = 0, since_g_ = 0, burst_left_ = 0;
};

/// Checks a d_step/g_step trace against the schedule rules from run lengths
/// alone: `warmup` critic steps, then before the n-th generator step a run of
/// `ratio` critic steps, lengthened by `burst` when n-1 is a positive
/// multiple of `burst_every`. Returns one message per violation.
inline std::vector<std::string> schedule_violations(const std::vector<Event>& events, const ScheduleConstants& c) {
  std::vector<char> trace;
  for (const auto& e : events) {
    if (e.kind == "d_step") trace.push_back('D');
    if (e.kind == "g_step") trace.push_back('G');
  }
  std::vector<std::string> bad;
  std::size_t i = 0;
  std::int64_t run = 0;
  // runs of D between G's; the first run also contains the warmup
  std::int64_t g_seen = 0;
  for (; i < trace.size(); ++i) {
    if (trace[i] == 'D') {
      ++run;
      continue;
    }
    std::int64_t expect = c.ratio;
    if (g_seen == 0) expect += c.warmup;
    if (g_seen > 0 && g_seen % c.burst_every == 0) expect += c.burst;
    if (run != expect)
      bad.push_back("generator step " + std::to_string(g_seen + 1) + " at trace position " + std::to_string(i + 1) +
                    " follows " + std::to_string(run) + " critic steps, expected " + std::to_string(expect));
    ++g_seen;
    run = 0;
  }
  // a trailing run can be cut short by the end of the trace but never too long
  std::int64_t limit = c.ratio + (g_seen == 0 ? c.warmup : 0) + (g_seen > 0 && g_seen % c.burst_every == 0 ? c.burst : 0);
  if (run > limit)
    bad.push_back("trace ends with " + std::to_string(run) + " critic steps, at most " + std::to_string(limit) +
                  " allowed before a generator step");
  return bad;
}

}  // namespace mdcsrn
