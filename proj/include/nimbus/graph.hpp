#pragma once

#include <cmath>
#include <cstdio>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nimbus/agent.hpp"
#include "nimbus/forecaster.hpp"
#include "nimbus/metrics.hpp"
#include "nimbus/reward.hpp"
#include "nimbus/simcore.hpp"

// The stateful decision workflow, executed once per decision interval:
// Collect -> FeatureProcess -> Infer -> Validate -> Execute -> Learn.
// Node-level degradation (e.g. not enough history for a forecast) is
// recorded in the trace and never aborts a cycle. The validation stage is a
// pluggable, synchronous, deterministic function; the default rule-based
// validator guards against predicted memory pressure and no-op actions.

namespace nimbus::graph {

struct ValidationVerdict {
  enum class Kind { Approve, Override, Reject };
  Kind kind = Kind::Approve;
  rl::ScalingAction replacement = rl::ScalingAction::KeepSame;
  std::string reason;

  static ValidationVerdict approve() { return {}; }
  static ValidationVerdict override_with(rl::ScalingAction a,
                                         std::string why) {
    return {Kind::Override, a, std::move(why)};
  }
  static ValidationVerdict reject(std::string why) {
    return {Kind::Reject, rl::ScalingAction::KeepSame, std::move(why)};
  }
};

struct ValidatorContext {
  rl::StateVector state;
  std::optional<forecast::ForecastResult> forecast;
  int current_replicas = 1;
  int min_replicas = 1;
  int max_replicas = 10;
  double mem_target = 0.80;
};

using Validator =
    std::function<ValidationVerdict(rl::ScalingAction, const ValidatorContext&)>;

// Rejects scale-down under predicted memory pressure and any action that
// clamping would turn into a no-op; approves everything else.
inline ValidationVerdict rule_validator(rl::ScalingAction proposed,
                                        const ValidatorContext& ctx) {
  int delta = rl::action_delta(proposed);
  if (delta == 0) return ValidationVerdict::approve();
  if (delta > 0 && ctx.current_replicas >= ctx.max_replicas)
    return ValidationVerdict::reject("at max replicas");
  if (delta < 0 && ctx.current_replicas <= ctx.min_replicas)
    return ValidationVerdict::reject("at min replicas");
  if (delta < 0 && ctx.state.s1_pred_mem_pct / 100.0 > ctx.mem_target)
    return ValidationVerdict::reject("predicted memory pressure");
  return ValidationVerdict::approve();
}

struct TraceEntry {
  std::string node;
  std::string summary;
};

struct CycleState {
  int t_s = 0;
  metrics::MetricsSample sample;
  std::optional<forecast::ForecastResult> forecast;
  std::optional<rl::StateVector> state_vec;
  std::optional<rl::ScalingAction> proposed;
  std::optional<ValidationVerdict> verdict;
  std::optional<rl::ScalingAction> executed_action;
  std::optional<int> executed_replicas;
  std::optional<reward::RewardBreakdown> reward_breakdown;
  std::vector<TraceEntry> trace;
};

// State the controller carries between cycles: the pending transition
// awaiting its consequence, executed-action history for the thrashing
// window, and forecast realizations for the confidence score.
struct ControllerState {
  struct PendingTransition {
    rl::StateVector state;
    rl::ScalingAction action = rl::ScalingAction::KeepSame;
    reward::Shaping shaping;
  };
  std::optional<PendingTransition> pending;
  std::vector<int> executed_deltas;  // newest last

  struct OpenForecast {
    int target_t_s = 0;
    double predicted_mem_mib = 0.0;
  };
  std::vector<OpenForecast> open_forecasts;
  std::deque<double> residual_pct;  // last realized |err|/actual * 100

  double epsilon = 0.0;
  bool training = false;
};

struct Deps {
  sim::ClusterState* cluster = nullptr;
  const metrics::SeriesStore* series = nullptr;
  const forecast::LstmParams* lstm = nullptr;  // null -> no forecaster
  const forecast::Scaler* scaler = nullptr;
  rl::AgentTrainer* agent = nullptr;
  SplitMix64* action_rng = nullptr;
  reward::RewardConfig reward_cfg;
  Validator validator = rule_validator;
  ControllerState* ctl = nullptr;
  int lookback = forecast::kLookback;
};

namespace detail {

inline std::string fmt1(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

inline double residual_mape(const std::deque<double>& residuals) {
  if (residuals.empty()) return 0.0;
  double sum = 0.0;
  for (double r : residuals) sum += r;
  return sum / static_cast<double>(residuals.size());
}

}  // namespace detail

// One full decision cycle at time t (a multiple of the decision interval).
// Mutates the cluster (Execute) and the controller/agent state (Learn).
inline CycleState run_cycle(Deps& deps, int t_s) {
  CycleState cycle;
  cycle.t_s = t_s;
  auto& ctl = *deps.ctl;

  // --- Collect ---
  const metrics::MetricsSample* latest =
      deps.series->latest_at_or_before(t_s);
  cycle.sample = latest ? *latest : metrics::MetricsSample{};
  auto window = deps.series->window(t_s, deps.lookback);

  // Realize past forecasts whose horizon has arrived; keep the last 5
  // residuals for the confidence score.
  for (auto it = ctl.open_forecasts.begin();
       it != ctl.open_forecasts.end();) {
    if (it->target_t_s <= t_s) {
      if (const auto* s = deps.series->at_time(it->target_t_s);
          s && std::abs(s->total_mem_mib) >= 1.0) {
        ctl.residual_pct.push_back(
            std::abs(it->predicted_mem_mib - s->total_mem_mib) /
            std::abs(s->total_mem_mib) * 100.0);
        while (ctl.residual_pct.size() > 5) ctl.residual_pct.pop_front();
      }
      it = ctl.open_forecasts.erase(it);
    } else {
      ++it;
    }
  }

  if (window && deps.lstm && deps.scaler) {
    std::vector<forecast::FeatureRow> rows;
    rows.reserve(window->size());
    for (const auto& s : *window)
      rows.push_back({s.total_mem_mib, static_cast<double>(s.pod_count)});
    auto fc = forecast::forward(*deps.lstm, *deps.scaler, rows);
    fc.confidence = ctl.residual_pct.size() >= 5
                        ? forecast::confidence(
                              detail::residual_mape(ctl.residual_pct))
                        : 1.0;
    cycle.forecast = fc;
    ctl.open_forecasts.push_back(
        {t_s + fc.horizon_s, fc.predicted_total_mem_mib});
    cycle.trace.push_back({"Collect",
                           "sample t=" + std::to_string(cycle.sample.t_s) +
                               " forecast=" +
                               detail::fmt1(fc.predicted_total_mem_mib) +
                               "MiB"});
  } else {
    const char* why = !deps.lstm ? "no forecaster model"
                                 : "insufficient history";
    cycle.trace.push_back(
        {"Collect", std::string("forecast omitted: ") + why});
  }

  // --- FeatureProcess ---
  auto util = metrics::utilization(cycle.sample);
  rl::StateVector state;
  state.s2_cpu_pct = util.cpu_pct;
  state.s3_mem_pct = util.mem_pct;
  state.s4_replicas = cycle.sample.pod_count;
  if (cycle.forecast && cycle.sample.pod_count > 0) {
    state.s1_pred_mem_pct = cycle.forecast->predicted_total_mem_mib /
                            cycle.sample.total_mem_limit_mib * 100.0;
  } else {
    state.s1_pred_mem_pct = state.s3_mem_pct;  // degrade: s1 = s3
  }
  cycle.state_vec = state;
  cycle.trace.push_back(
      {"FeatureProcess",
       "s=[" + detail::fmt1(state.s1_pred_mem_pct) + "," +
           detail::fmt1(state.s2_cpu_pct) + "," +
           detail::fmt1(state.s3_mem_pct) + "," +
           detail::fmt1(state.s4_replicas) + "]"});

  // --- Infer ---
  rl::ScalingAction proposed = rl::select_action(
      deps.agent->main(), state, ctl.epsilon, *deps.action_rng);
  cycle.proposed = proposed;
  cycle.trace.push_back({"Infer", rl::action_name(proposed)});

  // --- Validate ---
  ValidatorContext vctx;
  vctx.state = state;
  vctx.forecast = cycle.forecast;
  vctx.current_replicas = deps.cluster->desired_replicas;
  vctx.min_replicas = deps.cluster->min_replicas;
  vctx.max_replicas = deps.cluster->max_replicas;
  vctx.mem_target = deps.reward_cfg.mem_target;
  ValidationVerdict verdict = deps.validator(proposed, vctx);
  cycle.verdict = verdict;
  rl::ScalingAction resolved = proposed;
  switch (verdict.kind) {
    case ValidationVerdict::Kind::Approve:
      cycle.trace.push_back({"Validate", "approve"});
      break;
    case ValidationVerdict::Kind::Override:
      resolved = verdict.replacement;
      cycle.trace.push_back({"Validate", "override: " + verdict.reason});
      break;
    case ValidationVerdict::Kind::Reject:
      resolved = rl::ScalingAction::KeepSame;
      cycle.trace.push_back({"Validate", "reject: " + verdict.reason});
      break;
  }
  cycle.executed_action = resolved;

  // --- Execute ---
  int before = deps.cluster->desired_replicas;
  *deps.cluster = sim::set_desired_replicas(
      *deps.cluster, before + rl::action_delta(resolved));
  cycle.executed_replicas = deps.cluster->desired_replicas;
  cycle.trace.push_back(
      {"Execute", std::to_string(before) + "->" +
                      std::to_string(deps.cluster->desired_replicas)});

  // --- Learn ---
  // The previous transition's reward uses this cycle's observation as its
  // consequence; the shaping terms were fixed when that action was taken.
  if (ctl.pending) {
    double u_cpu = util.cpu_pct / 100.0;
    double u_mem = util.mem_pct / 100.0;
    std::optional<double> pred_util;
    double conf = 1.0;
    if (cycle.forecast) {
      pred_util = state.s1_pred_mem_pct / 100.0;
      conf = cycle.forecast->confidence;
    }
    auto breakdown = reward::total_reward(
        u_cpu, u_mem, pred_util, conf, ctl.pending->shaping,
        cycle.sample.pod_count, deps.reward_cfg);
    cycle.reward_breakdown = breakdown;
    rl::Experience exp;
    exp.state = ctl.pending->state;
    exp.action = ctl.pending->action;
    exp.reward = breakdown.r_total;
    exp.next_state = state;
    exp.done = false;
    deps.agent->observe(exp);
    std::string summary = "r_total=" + detail::fmt1(breakdown.r_total);
    if (ctl.training) {
      if (auto loss = deps.agent->maybe_train())
        summary += " loss=" + detail::fmt1(*loss);
      else
        summary += " (buffer warming)";
    }
    cycle.trace.push_back({"Learn", summary});
  } else {
    cycle.trace.push_back({"Learn", "no previous transition"});
  }

  // Shaping for the action just taken, against the state it acted on.
  reward::Shaping shaping = reward::action_shaping(
      rl::action_delta(resolved), util.cpu_pct / 100.0, util.mem_pct / 100.0,
      state.s1_pred_mem_pct / 100.0, ctl.executed_deltas, deps.reward_cfg);
  ctl.pending = ControllerState::PendingTransition{state, resolved, shaping};
  ctl.executed_deltas.push_back(rl::action_delta(resolved));

  return cycle;
}

}  // namespace nimbus::graph
