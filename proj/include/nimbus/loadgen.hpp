#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "nimbus/rng.hpp"
#include "nimbus/simcore.hpp"

// Seeded open-loop load generator. Requests are fired on a fixed schedule
// regardless of completion times (fire-and-forget), so the trace is a pure
// function of the plan.

namespace nimbus::loadgen {

struct PhaseSpec {
  std::string name;
  int concurrent_users = 1;
  int total_requests = 1;
  int duration_s = 120;
};

struct LoadPlan {
  std::vector<PhaseSpec> phases;
  std::uint64_t seed = 0;

  int total_duration_s() const {
    int d = 0;
    for (const auto& p : phases) d += p.duration_s;
    return d;
  }
};

inline bool operator==(const PhaseSpec& a, const PhaseSpec& b) {
  return a.name == b.name && a.concurrent_users == b.concurrent_users &&
         a.total_requests == b.total_requests && a.duration_s == b.duration_s;
}

inline bool operator==(const LoadPlan& a, const LoadPlan& b) {
  return a.seed == b.seed && a.phases == b.phases;
}

// The four-phase pattern: ramp-up, sustained, peak, cooldown.
inline LoadPlan default_plan(std::uint64_t seed, int phase_duration_s = 120) {
  LoadPlan plan;
  plan.seed = seed;
  plan.phases = {
      {"ramp-up", 4, 40, phase_duration_s},
      {"sustained", 8, 60, phase_duration_s},
      {"peak", 15, 90, phase_duration_s},
      {"cooldown", 3, 30, phase_duration_s},
  };
  return plan;
}

struct Arrival {
  double time_s = 0.0;
  sim::RequestJob job;
};

// Per phase, requests are split round-robin across users; each user emits
// its share at uniform intervals over the phase, jittered by less than half
// an interval from a per-(phase,user) substream. Counts per phase are exact
// for every seed and every arrival stays inside its phase window.
inline std::vector<Arrival> generate_arrivals(
    const LoadPlan& plan,
    double request_work_mcs = sim::ConsumerModel{}.request_work_mcs,
    double request_mem_mib = sim::ConsumerModel{}.request_mem_mib) {
  std::vector<Arrival> out;
  SplitMix64 root(plan.seed);
  double phase_start = 0.0;
  for (std::size_t pi = 0; pi < plan.phases.size(); ++pi) {
    const auto& phase = plan.phases[pi];
    SplitMix64 phase_rng = root.split(pi);
    for (int user = 0; user < phase.concurrent_users; ++user) {
      SplitMix64 user_rng = phase_rng.split(static_cast<std::uint64_t>(user));
      int share = phase.total_requests / phase.concurrent_users +
                  (user < phase.total_requests % phase.concurrent_users ? 1 : 0);
      if (share == 0) continue;
      double interval = static_cast<double>(phase.duration_s) / share;
      for (int k = 0; k < share; ++k) {
        double nominal = phase_start + (k + 0.5) * interval;
        double jitter = user_rng.uniform(-interval / 2, interval / 2);
        Arrival a;
        a.time_s = nominal + jitter;
        a.job.remaining_work_mcs = request_work_mcs;
        a.job.mem_footprint_mib = request_mem_mib;
        out.push_back(a);
      }
    }
    phase_start += phase.duration_s;
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const Arrival& a, const Arrival& b) {
                     return a.time_s < b.time_s;
                   });
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i].job.id = static_cast<std::int64_t>(i + 1);
  return out;
}

}  // namespace nimbus::loadgen
