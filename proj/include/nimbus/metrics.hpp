#pragma once

#include <cassert>
#include <optional>
#include <vector>

#include "nimbus/simcore.hpp"

// Prometheus-style scrape aggregation and a flat time-series store at
// 15-second resolution. Only Running pods count toward usage and limits,
// mirroring ready-pod metric semantics.

namespace nimbus::metrics {

struct MetricsSample {
  int t_s = 0;
  int pod_count = 0;
  double total_cpu_mc = 0.0;
  double total_mem_mib = 0.0;
  double total_cpu_limit_mc = 0.0;
  double total_mem_limit_mib = 0.0;
};

inline MetricsSample scrape(const sim::ClusterState& cluster) {
  MetricsSample s;
  s.t_s = cluster.clock_s;
  for (const auto& pod : cluster.pods) {
    if (pod.phase != sim::PodPhase::Running) continue;
    auto usage = sim::pod_usage(pod);
    ++s.pod_count;
    s.total_cpu_mc += usage.cpu_mc;
    s.total_mem_mib += usage.mem_mib;
  }
  s.total_cpu_limit_mc = s.pod_count * cluster.resources.cpu_limit_mc;
  s.total_mem_limit_mib = s.pod_count * cluster.resources.mem_limit_mib;
  return s;
}

struct Utilization {
  double cpu_pct = 0.0;
  double mem_pct = 0.0;
};

// Deployment-wide utilization percentages; (0, 0) when no pod is Running.
inline Utilization utilization(const MetricsSample& s) {
  if (s.pod_count < 1) return {0.0, 0.0};
  return {s.total_cpu_mc / s.total_cpu_limit_mc * 100.0,
          s.total_mem_mib / s.total_mem_limit_mib * 100.0};
}

class SeriesStore {
public:
  explicit SeriesStore(int scrape_interval_s = 15)
      : scrape_interval_s_(scrape_interval_s) {}

  void append(const MetricsSample& s) {
    assert(samples_.empty() ||
           s.t_s - samples_.back().t_s == scrape_interval_s_);
    samples_.push_back(s);
  }

  const std::vector<MetricsSample>& samples() const { return samples_; }
  int scrape_interval_s() const { return scrape_interval_s_; }

  const MetricsSample* at_time(int t_s) const {
    for (auto it = samples_.rbegin(); it != samples_.rend(); ++it)
      if (it->t_s == t_s) return &*it;
    return nullptr;
  }

  const MetricsSample* latest_at_or_before(int t_s) const {
    const MetricsSample* best = nullptr;
    for (const auto& s : samples_)
      if (s.t_s <= t_s) best = &s;
    return best;
  }

  // The last `lookback` samples ending at the latest sample <= t, oldest
  // first. Empty optional when history is insufficient: callers fall back,
  // never receive a partial window.
  std::optional<std::vector<MetricsSample>> window(int t_s, int lookback) const {
    std::size_t end = 0;
    for (std::size_t i = 0; i < samples_.size(); ++i)
      if (samples_[i].t_s <= t_s) end = i + 1;
    if (end < static_cast<std::size_t>(lookback) || lookback <= 0)
      return std::nullopt;
    return std::vector<MetricsSample>(
        samples_.begin() + static_cast<std::ptrdiff_t>(end - lookback),
        samples_.begin() + static_cast<std::ptrdiff_t>(end));
  }

private:
  std::vector<MetricsSample> samples_;
  int scrape_interval_s_;
};

}  // namespace nimbus::metrics
