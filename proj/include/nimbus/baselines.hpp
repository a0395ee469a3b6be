#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

// Reactive baselines: standard HPA proportional scaling with scale-down
// stabilization, and a KEDA-style polled controller with cooldown. Both are
// pure decision functions; the harness owns their history state.

namespace nimbus::baselines {

inline constexpr double kDefaultTolerance = 0.10;  // Kubernetes HPA default

namespace detail {

// ceil with slack: division noise must not push an exactly-integer product
// (e.g. 2 * (1.05/0.70) = 3.0000000000000004) over the next ceiling.
inline int ceil_replicas(double x) {
  return static_cast<int>(std::ceil(x - 1e-9));
}

}  // namespace detail

struct HpaConfig {
  double cpu_target = 0.70;
  double mem_target = 0.80;
  double tolerance = kDefaultTolerance;
  int stabilization_window_s = 30;
  int min_replicas = 1;
  int max_replicas = 10;
};

struct KedaConfig {
  int polling_interval_s = 30;
  int cooldown_s = 30;
  double cpu_target = 0.70;
  int min_replicas = 1;
  int max_replicas = 10;
};

// desiredReplicas = ceil(current * ratio) with the usual tolerance dead-band
// around ratio 1. ratio takes the more demanding of the CPU and memory
// signals.
inline int hpa_desired(const HpaConfig& cfg, int current, double cpu_frac,
                       double mem_frac) {
  double ratio =
      std::max(cpu_frac / cfg.cpu_target, mem_frac / cfg.mem_target);
  int desired = current;
  if (std::abs(ratio - 1.0) > cfg.tolerance)
    desired = detail::ceil_replicas(current * ratio);
  return std::clamp(desired, cfg.min_replicas, cfg.max_replicas);
}

struct Recommendation {
  int t_s = 0;
  int raw = 0;
};

// Scale-up applies immediately; scale-down is stabilized by taking the max
// of every recommendation computed within the last stabilization window.
inline int hpa_decide(const HpaConfig& cfg,
                      const std::vector<Recommendation>& history, int t_s,
                      int current, double cpu_frac, double mem_frac) {
  int raw = hpa_desired(cfg, current, cpu_frac, mem_frac);
  if (raw >= current) return raw;
  int decision = raw;
  for (const auto& rec : history)
    if (rec.t_s >= t_s - cfg.stabilization_window_s)
      decision = std::max(decision, rec.raw);
  return std::clamp(decision, cfg.min_replicas, cfg.max_replicas);
}

// Polled proportional controller on the CPU series. Scale-down is held
// until the cooldown since the last scaling event has elapsed.
inline int keda_decide(const KedaConfig& cfg, int last_event_t_s, int t_s,
                       int current, double cpu_frac) {
  double ratio = cpu_frac / cfg.cpu_target;
  int desired = current;
  if (std::abs(ratio - 1.0) > kDefaultTolerance)
    desired = detail::ceil_replicas(current * ratio);
  desired = std::clamp(desired, cfg.min_replicas, cfg.max_replicas);
  if (desired < current && t_s - last_event_t_s < cfg.cooldown_s)
    return current;
  return desired;
}

}  // namespace nimbus::baselines
