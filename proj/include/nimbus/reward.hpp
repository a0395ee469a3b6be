#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>

// Multi-objective reward: Gaussian utilization curves on current and
// forecasted metrics, blended by workload class and forecast confidence,
// plus shaping bonuses/penalties for the scaling action itself. Every
// additive term is preserved in the breakdown so the total is auditable.

namespace nimbus::reward {

struct RewardConfig {
  double cpu_target = 0.70;
  double mem_target = 0.80;
  double sigma = 0.15;
  double w_cpu = 0.5;
  double w_mem = 0.5;
  double forecast_weight_base = 0.7;
  double bonus_up = 0.2;
  double bonus_down = 0.15;
  double penalty_unnecessary = -0.3;
  double penalty_thrash = -0.5;
  double stability_bonus = 0.1;
  double cost_coeff = 0.1;
  double healthy_band = 0.10;
  int min_replicas = 1;
  int max_replicas = 10;
};

enum class WorkloadClass { Low, Nominal, High };

struct RewardBreakdown {
  double r_cpu = 0.0;
  double r_mem = 0.0;
  double r_current = 0.0;
  double r_forecast = 0.0;
  double w_current = 1.0;
  double w_forecast = 0.0;
  double r_combined = 0.0;
  double r_stability = 0.0;
  double r_action_bonus = 0.0;
  double r_cost_penalty = 0.0;
  double r_total = 0.0;
};

// exp(-(u - target)^2 / (2 sigma^2)): 1 at the target, symmetric about it.
inline double gaussian_reward(double u, double target, double sigma) {
  double d = u - target;
  return std::exp(-(d * d) / (2.0 * sigma * sigma));
}

inline double r_current(double u_cpu, double u_mem, const RewardConfig& cfg) {
  return cfg.w_cpu * gaussian_reward(u_cpu, cfg.cpu_target, cfg.sigma) +
         cfg.w_mem * gaussian_reward(u_mem, cfg.mem_target, cfg.sigma);
}

// Same curve applied to the predicted memory utilization; there is no CPU
// forecast, so the CPU term reuses the current utilization.
inline double r_forecast(double predicted_mem_util, double u_cpu,
                         const RewardConfig& cfg) {
  return r_current(u_cpu, predicted_mem_util, cfg);
}

inline WorkloadClass classify_workload(double u_cpu, double u_mem) {
  double peak = std::max(u_cpu, u_mem);
  if (peak > 0.80) return WorkloadClass::High;
  if (peak < 0.30) return WorkloadClass::Low;
  return WorkloadClass::Nominal;
}

inline double class_multiplier(WorkloadClass c) {
  switch (c) {
    case WorkloadClass::High: return 1.0;
    case WorkloadClass::Nominal: return 0.8;
    case WorkloadClass::Low: return 0.6;
  }
  return 0.8;
}

struct CombinedReward {
  double r_combined = 0.0;
  double w_current = 1.0;
  double w_forecast = 0.0;
};

// Effective forecast weight = base 0.7, discounted by confidence and the
// workload-class multiplier; all weight goes to the current term when no
// forecast exists.
inline CombinedReward combine(double r_cur, std::optional<double> r_fc,
                              WorkloadClass cls, double confidence,
                              const RewardConfig& cfg) {
  CombinedReward out;
  if (r_fc.has_value()) {
    out.w_forecast =
        cfg.forecast_weight_base * confidence * class_multiplier(cls);
    out.w_current = 1.0 - out.w_forecast;
    out.r_combined = out.w_current * r_cur + out.w_forecast * *r_fc;
  } else {
    out.w_forecast = 0.0;
    out.w_current = 1.0;
    out.r_combined = r_cur;
  }
  return out;
}

struct Shaping {
  double r_action_bonus = 0.0;
  double r_stability = 0.0;
};

// Action deltas: -1 scale-down, 0 keep-same, +1 scale-up. `recent_deltas`
// holds the executed deltas of the most recent decisions, newest last; only
// the last two matter for the thrashing check.
inline Shaping action_shaping(int action_delta, double u_cpu, double u_mem,
                              double predicted_mem_util,
                              std::span<const int> recent_deltas,
                              const RewardConfig& cfg) {
  Shaping out;

  // Thrashing overrides all other shaping: the action reverses a scaling
  // action taken within the previous 2 decisions.
  if (action_delta != 0) {
    std::size_t n = recent_deltas.size();
    for (std::size_t back = 1; back <= 2 && back <= n; ++back) {
      int prev = recent_deltas[n - back];
      if (prev != 0 && prev == -action_delta) {
        out.r_action_bonus = cfg.penalty_thrash;
        return out;
      }
    }
  }

  bool cpu_above = u_cpu > cfg.cpu_target + cfg.healthy_band;
  bool mem_above = u_mem > cfg.mem_target + cfg.healthy_band;
  bool pred_above = predicted_mem_util > cfg.mem_target + cfg.healthy_band;
  bool any_above = cpu_above || mem_above || pred_above;

  bool all_below = u_cpu < cfg.cpu_target - cfg.healthy_band &&
                   u_mem < cfg.mem_target - cfg.healthy_band &&
                   predicted_mem_util < cfg.mem_target - cfg.healthy_band;

  bool all_in_band =
      std::abs(u_cpu - cfg.cpu_target) <= cfg.healthy_band &&
      std::abs(u_mem - cfg.mem_target) <= cfg.healthy_band &&
      std::abs(predicted_mem_util - cfg.mem_target) <= cfg.healthy_band;

  if (action_delta > 0 && any_above)
    out.r_action_bonus = cfg.bonus_up;
  else if (action_delta < 0 && all_below)
    out.r_action_bonus = cfg.bonus_down;
  else if (action_delta != 0 && all_in_band)
    out.r_action_bonus = cfg.penalty_unnecessary;

  if (action_delta == 0 && all_in_band) out.r_stability = cfg.stability_bonus;
  return out;
}

// Assembles the full breakdown. The identity
//   r_total = r_combined + r_stability + r_action_bonus - r_cost_penalty
// holds exactly for every emitted breakdown.
inline RewardBreakdown total_reward(double u_cpu, double u_mem,
                                    std::optional<double> predicted_mem_util,
                                    double confidence, const Shaping& shaping,
                                    int replicas, const RewardConfig& cfg) {
  RewardBreakdown b;
  b.r_cpu = gaussian_reward(u_cpu, cfg.cpu_target, cfg.sigma);
  b.r_mem = gaussian_reward(u_mem, cfg.mem_target, cfg.sigma);
  b.r_current = cfg.w_cpu * b.r_cpu + cfg.w_mem * b.r_mem;
  std::optional<double> r_fc;
  if (predicted_mem_util.has_value()) {
    r_fc = r_forecast(*predicted_mem_util, u_cpu, cfg);
    b.r_forecast = *r_fc;
  }
  auto combined = combine(b.r_current, r_fc,
                          classify_workload(u_cpu, u_mem), confidence, cfg);
  b.r_combined = combined.r_combined;
  b.w_current = combined.w_current;
  b.w_forecast = combined.w_forecast;
  b.r_stability = shaping.r_stability;
  b.r_action_bonus = shaping.r_action_bonus;
  b.r_cost_penalty =
      cfg.cost_coeff *
      std::max(0, replicas - cfg.min_replicas) / static_cast<double>(cfg.max_replicas);
  b.r_total = b.r_combined + b.r_stability + b.r_action_bonus - b.r_cost_penalty;
  return b;
}

}  // namespace nimbus::reward
