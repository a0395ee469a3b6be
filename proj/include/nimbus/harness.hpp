#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "nimbus/agent.hpp"
#include "nimbus/baselines.hpp"
#include "nimbus/forecaster.hpp"
#include "nimbus/graph.hpp"
#include "nimbus/loadgen.hpp"
#include "nimbus/metrics.hpp"
#include "nimbus/reward.hpp"
#include "nimbus/simcore.hpp"
#include "nimbus/store.hpp"

// Experiment runner: drives the simulator at 1-second ticks, scrapes every
// 15 seconds, dispatches the selected autoscaler at its interval and
// produces a self-contained report. Everything is a pure function of
// (config, model files), so repeated runs are byte-identical.

namespace nimbus::harness {

struct ConfigInvalid : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MissingModel : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct EmptyTimeline : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct MismatchedPlans : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  std::string autoscaler = "hpa";  // hpa | keda | nimbus
  std::uint64_t seed = 42;
  int phase_duration_s = 120;
  int decision_interval_s = 30;
  int scrape_interval_s = 15;
  int min_replicas = 1;
  int max_replicas = 10;
  sim::ResourceSpec resources;
  sim::ConsumerModel consumer;
  reward::RewardConfig reward_cfg;
  baselines::HpaConfig hpa;
  baselines::KedaConfig keda;
  std::string lstm_path = "models/lstm.nbg.json";
  std::string dqn_path = "models/dqn.nbg.json";
  std::optional<loadgen::LoadPlan> plan_override;

  loadgen::LoadPlan plan() const {
    if (plan_override) return *plan_override;
    return loadgen::default_plan(seed, phase_duration_s);
  }

  void validate() const {
    if (autoscaler != "hpa" && autoscaler != "keda" && autoscaler != "nimbus")
      throw ConfigInvalid("autoscaler must be hpa, keda or nimbus");
    if (scrape_interval_s <= 0 || decision_interval_s <= 0)
      throw ConfigInvalid("intervals must be positive");
    if (decision_interval_s % scrape_interval_s != 0)
      throw ConfigInvalid("scrape interval must divide decision interval");
    for (const auto& ph : plan().phases) {
      if (ph.duration_s % decision_interval_s != 0)
        throw ConfigInvalid("decision interval must divide phase durations");
      if (ph.total_requests < ph.concurrent_users || ph.concurrent_users < 1)
        throw ConfigInvalid("phase '" + ph.name + "': need requests >= users >= 1");
    }
    if (min_replicas < 1 || min_replicas > max_replicas)
      throw ConfigInvalid("need 1 <= min_replicas <= max_replicas");
    if (!resources.valid()) throw ConfigInvalid("invalid resource spec");
  }

  // Keep the per-controller configs and the reward bounds in sync with the
  // experiment-wide replica limits.
  void normalize() {
    hpa.min_replicas = min_replicas;
    hpa.max_replicas = max_replicas;
    keda.min_replicas = min_replicas;
    keda.max_replicas = max_replicas;
    reward_cfg.min_replicas = min_replicas;
    reward_cfg.max_replicas = max_replicas;
  }
};

struct TimelinePoint {
  int t_s = 0;
  int replicas = 0;  // Running pods at the scrape (the reported series)
  double cpu_pct = 0.0;
  double mem_pct = 0.0;
  int desired = 0;
};

struct Metrics {
  double avg_replicas = 0.0;
  double resource_integral_pod_s = 0.0;
  int scaling_events = 0;
};

struct PhaseMetrics {
  std::string name;
  Metrics metrics;
};

struct DecisionSummary {
  int t_s = 0;
  std::string proposed;
  std::string verdict;
  std::string reason;
  std::string executed;
  int replicas_after = 0;
  std::optional<double> r_total;
};

struct RunReport {
  std::string autoscaler;
  std::uint64_t seed = 0;
  int scrape_interval_s = 15;
  loadgen::LoadPlan plan;
  std::vector<TimelinePoint> timeline;
  Metrics metrics;
  std::vector<PhaseMetrics> per_phase;
  std::vector<DecisionSummary> decisions;  // nimbus only

  // Memory-only extras (not serialized): full scrape series and cycles.
  std::vector<metrics::MetricsSample> series;
  std::vector<graph::CycleState> cycles;
};

// avg, integral and event count of a uniformly sampled replica timeline.
// avg = integral / total_duration holds exactly.
inline Metrics summarize(const std::vector<TimelinePoint>& timeline,
                         int dt_s) {
  if (timeline.empty()) throw EmptyTimeline("summarize: empty timeline");
  Metrics m;
  double sum = 0.0;
  for (std::size_t i = 0; i < timeline.size(); ++i) {
    sum += timeline[i].replicas;
    if (i > 0 && timeline[i].replicas != timeline[i - 1].replicas)
      ++m.scaling_events;
  }
  m.resource_integral_pod_s = sum * dt_s;
  m.avg_replicas = sum / static_cast<double>(timeline.size());
  return m;
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline sim::ClusterState make_initial_cluster(const ExperimentConfig& cfg) {
  sim::ClusterState c;
  c.min_replicas = cfg.min_replicas;
  c.max_replicas = cfg.max_replicas;
  c.desired_replicas = cfg.min_replicas;
  c.resources = cfg.resources;
  c.consumer = cfg.consumer;
  for (int i = 0; i < cfg.min_replicas; ++i) {
    sim::PodState pod;
    pod.pod_id = c.next_pod_id++;
    pod.phase = sim::PodPhase::Running;
    pod.phase_since_s = 0;
    pod.base_mem_mib = cfg.consumer.base_mem_mib;
    c.pods.push_back(pod);
  }
  return c;
}

}  // namespace detail

// Live state for the proactive autoscaler, reusable across training
// episodes so the agent and its exploration schedule persist.
struct NimbusRuntime {
  forecast::LstmParams lstm;
  forecast::Scaler scaler;
  rl::AgentTrainer trainer;
  graph::ControllerState ctl;
  SplitMix64 action_rng;

  NimbusRuntime(forecast::LstmParams lstm_params, forecast::Scaler s,
                rl::DqnParams dqn, std::uint64_t seed)
      : lstm(std::move(lstm_params)),
        scaler(s),
        trainer(std::move(dqn), seed ^ 0xA5A5A5A5A5A5A5A5ULL),
        action_rng(seed) {}
};

struct LoopResult {
  std::vector<TimelinePoint> timeline;
  std::vector<metrics::MetricsSample> series;
  std::vector<graph::CycleState> cycles;
};

// The shared drive loop. `nimbus` must be non-null when cfg.autoscaler is
// "nimbus"; for baselines it is ignored.
inline LoopResult run_loop(const ExperimentConfig& cfg,
                           NimbusRuntime* nimbus) {
  const auto plan = cfg.plan();
  auto arrivals = loadgen::generate_arrivals(
      plan, cfg.consumer.request_work_mcs, cfg.consumer.request_mem_mib);
  sim::ClusterState cluster = detail::make_initial_cluster(cfg);
  metrics::SeriesStore series(cfg.scrape_interval_s);
  LoopResult out;

  std::vector<baselines::Recommendation> hpa_history;
  int keda_last_event_t = 0;

  graph::Deps deps;
  if (cfg.autoscaler == "nimbus") {
    deps.cluster = &cluster;
    deps.series = &series;
    deps.lstm = &nimbus->lstm;
    deps.scaler = &nimbus->scaler;
    deps.agent = &nimbus->trainer;
    deps.action_rng = &nimbus->action_rng;
    deps.reward_cfg = cfg.reward_cfg;
    deps.ctl = &nimbus->ctl;
  }

  const int total_s = plan.total_duration_s();
  std::size_t ai = 0;
  for (int t = 0; t < total_s; ++t) {
    while (ai < arrivals.size() && arrivals[ai].time_s < t + 1) {
      sim::RequestJob job = arrivals[ai].job;
      job.arrival_s = t;
      cluster = sim::route_request(cluster, job);
      ++ai;
    }
    cluster = sim::tick(cluster, 1);
    const int now = t + 1;
    if (now % cfg.scrape_interval_s != 0) continue;

    auto sample = metrics::scrape(cluster);
    series.append(sample);
    auto util = metrics::utilization(sample);
    out.timeline.push_back({now, sample.pod_count, util.cpu_pct,
                            util.mem_pct, cluster.desired_replicas});

    if (cfg.autoscaler == "hpa") {
      int current = cluster.desired_replicas;
      int raw = baselines::hpa_desired(cfg.hpa, current, util.cpu_pct / 100.0,
                                       util.mem_pct / 100.0);
      hpa_history.push_back({now, raw});
      int decided =
          baselines::hpa_decide(cfg.hpa, hpa_history, now, current,
                                util.cpu_pct / 100.0, util.mem_pct / 100.0);
      if (decided != current)
        cluster = sim::set_desired_replicas(cluster, decided);
    } else if (cfg.autoscaler == "keda") {
      if (now % cfg.keda.polling_interval_s == 0) {
        int current = cluster.desired_replicas;
        int decided = baselines::keda_decide(cfg.keda, keda_last_event_t, now,
                                             current, util.cpu_pct / 100.0);
        if (decided != current) {
          cluster = sim::set_desired_replicas(cluster, decided);
          keda_last_event_t = now;
        }
      }
    } else {  // nimbus
      if (now % cfg.decision_interval_s == 0) {
        out.cycles.push_back(graph::run_cycle(deps, now));
        if (nimbus->ctl.training)
          nimbus->ctl.epsilon = std::max(0.05, nimbus->ctl.epsilon * 0.995);
      }
    }
  }
  out.series = series.samples();
  return out;
}

inline std::vector<PhaseMetrics> per_phase_metrics(
    const loadgen::LoadPlan& plan, const std::vector<TimelinePoint>& timeline,
    int dt_s) {
  std::vector<PhaseMetrics> out;
  int start = 0;
  for (const auto& ph : plan.phases) {
    std::vector<TimelinePoint> slice;
    for (const auto& p : timeline)
      if (p.t_s > start && p.t_s <= start + ph.duration_s)
        slice.push_back(p);
    if (!slice.empty()) out.push_back({ph.name, summarize(slice, dt_s)});
    start += ph.duration_s;
  }
  return out;
}

inline DecisionSummary summarize_cycle(const graph::CycleState& c) {
  DecisionSummary d;
  d.t_s = c.t_s;
  d.proposed = c.proposed ? rl::action_name(*c.proposed) : "";
  if (c.verdict) {
    switch (c.verdict->kind) {
      case graph::ValidationVerdict::Kind::Approve: d.verdict = "approve"; break;
      case graph::ValidationVerdict::Kind::Override: d.verdict = "override"; break;
      case graph::ValidationVerdict::Kind::Reject: d.verdict = "reject"; break;
    }
    d.reason = c.verdict->reason;
  }
  d.executed = c.executed_action ? rl::action_name(*c.executed_action) : "";
  d.replicas_after = c.executed_replicas.value_or(0);
  if (c.reward_breakdown) d.r_total = c.reward_breakdown->r_total;
  return d;
}

// One full experiment under the configured autoscaler. Requires trained
// model files when the autoscaler is "nimbus".
inline RunReport run_experiment(const ExperimentConfig& config) {
  ExperimentConfig cfg = config;
  cfg.normalize();
  cfg.validate();

  std::optional<NimbusRuntime> runtime;
  if (cfg.autoscaler == "nimbus") {
    if (!std::filesystem::exists(cfg.lstm_path))
      throw MissingModel("forecaster model not found: " + cfg.lstm_path);
    if (!std::filesystem::exists(cfg.dqn_path))
      throw MissingModel("agent model not found: " + cfg.dqn_path);
    auto [lstm, scaler] = store::lstm_from_archive(store::load(cfg.lstm_path));
    auto dqn = store::dqn_from_archive(store::load(cfg.dqn_path));
    runtime.emplace(std::move(lstm), scaler, std::move(dqn), cfg.seed);
    runtime->ctl.epsilon = 0.0;  // evaluation is deterministic
    runtime->ctl.training = false;
  }

  auto loop = run_loop(cfg, runtime ? &*runtime : nullptr);

  RunReport report;
  report.autoscaler = cfg.autoscaler;
  report.seed = cfg.seed;
  report.scrape_interval_s = cfg.scrape_interval_s;
  report.plan = cfg.plan();
  report.timeline = std::move(loop.timeline);
  report.metrics = summarize(report.timeline, cfg.scrape_interval_s);
  report.per_phase =
      per_phase_metrics(report.plan, report.timeline, cfg.scrape_interval_s);
  for (const auto& c : loop.cycles)
    report.decisions.push_back(summarize_cycle(c));
  report.series = std::move(loop.series);
  report.cycles = std::move(loop.cycles);
  return report;
}

// ---- comparison ----

struct ComparisonRow {
  std::string autoscaler;
  Metrics metrics;
  double delta_avg = 0.0;
  double delta_integral = 0.0;
  int delta_events = 0;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;  // in input order
  std::string highest_avg;
  std::string largest_integral;
  std::string most_events;
};

// Side-by-side metrics; deltas are against the smallest value in each
// column, so the flagged leader carries the full spread.
inline ComparisonTable compare(const std::vector<RunReport>& reports) {
  if (reports.size() < 2)
    throw MismatchedPlans("compare needs at least two reports");
  for (std::size_t i = 1; i < reports.size(); ++i)
    if (!(reports[i].plan == reports[0].plan))
      throw MismatchedPlans("reports were produced under different load plans");

  ComparisonTable table;
  double min_avg = reports[0].metrics.avg_replicas;
  double min_int = reports[0].metrics.resource_integral_pod_s;
  int min_ev = reports[0].metrics.scaling_events;
  for (const auto& r : reports) {
    min_avg = std::min(min_avg, r.metrics.avg_replicas);
    min_int = std::min(min_int, r.metrics.resource_integral_pod_s);
    min_ev = std::min(min_ev, r.metrics.scaling_events);
  }
  const RunReport* best_avg = &reports[0];
  const RunReport* best_int = &reports[0];
  const RunReport* best_ev = &reports[0];
  for (const auto& r : reports) {
    ComparisonRow row;
    row.autoscaler = r.autoscaler;
    row.metrics = r.metrics;
    row.delta_avg = r.metrics.avg_replicas - min_avg;
    row.delta_integral = r.metrics.resource_integral_pod_s - min_int;
    row.delta_events = r.metrics.scaling_events - min_ev;
    table.rows.push_back(row);
    if (r.metrics.avg_replicas > best_avg->metrics.avg_replicas) best_avg = &r;
    if (r.metrics.resource_integral_pod_s >
        best_int->metrics.resource_integral_pod_s)
      best_int = &r;
    if (r.metrics.scaling_events > best_ev->metrics.scaling_events)
      best_ev = &r;
  }
  table.highest_avg = best_avg->autoscaler;
  table.largest_integral = best_int->autoscaler;
  table.most_events = best_ev->autoscaler;
  return table;
}

// ---- serialization ----

inline nlohmann::json plan_to_json(const loadgen::LoadPlan& plan) {
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& ph : plan.phases)
    phases.push_back({{"name", ph.name},
                      {"concurrent_users", ph.concurrent_users},
                      {"total_requests", ph.total_requests},
                      {"duration_s", ph.duration_s}});
  return {{"seed", plan.seed}, {"phases", phases}};
}

inline loadgen::LoadPlan plan_from_json(const nlohmann::json& j) {
  loadgen::LoadPlan plan;
  plan.seed = j.at("seed").get<std::uint64_t>();
  for (const auto& ph : j.at("phases")) {
    loadgen::PhaseSpec spec;
    spec.name = ph.at("name").get<std::string>();
    spec.concurrent_users = ph.at("concurrent_users").get<int>();
    spec.total_requests = ph.at("total_requests").get<int>();
    spec.duration_s = ph.at("duration_s").get<int>();
    plan.phases.push_back(spec);
  }
  return plan;
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"avg_replicas", m.avg_replicas},
          {"resource_integral_pod_s", m.resource_integral_pod_s},
          {"scaling_events", m.scaling_events}};
}

// Published comparison baseline, reported alongside results for context but
// never asserted: desk-scale runs are not expected to reproduce them
// bit-for-bit.
inline nlohmann::json published_reference() {
  return {
      {"nimbus",
       {{"avg_replicas", 5.44},
        {"resource_integral_pod_s", 2775.0},
        {"scaling_events", 8}}},
      {"hpa", {{"avg_replicas", 3.05}, {"scaling_events", 4}}},
      {"keda", {{"avg_replicas", 2.93}, {"scaling_events", 4}}},
  };
}

inline nlohmann::json report_to_json(const RunReport& r) {
  nlohmann::json timeline = nlohmann::json::array();
  for (const auto& p : r.timeline)
    timeline.push_back({{"t", p.t_s},
                        {"replicas", p.replicas},
                        {"cpu_pct", p.cpu_pct},
                        {"mem_pct", p.mem_pct},
                        {"desired", p.desired}});
  nlohmann::json phases = nlohmann::json::array();
  for (const auto& ph : r.per_phase) {
    auto j = metrics_to_json(ph.metrics);
    j["name"] = ph.name;
    phases.push_back(j);
  }
  nlohmann::json decisions = nlohmann::json::array();
  for (const auto& d : r.decisions) {
    nlohmann::json j = {{"t", d.t_s},          {"proposed", d.proposed},
                        {"verdict", d.verdict}, {"reason", d.reason},
                        {"executed", d.executed},
                        {"replicas_after", d.replicas_after}};
    if (d.r_total) j["r_total"] = *d.r_total;
    decisions.push_back(j);
  }
  return {{"autoscaler", r.autoscaler},
          {"seed", r.seed},
          {"scrape_interval_s", r.scrape_interval_s},
          {"plan", plan_to_json(r.plan)},
          {"metrics", metrics_to_json(r.metrics)},
          {"per_phase", phases},
          {"timeline", timeline},
          {"decisions", decisions},
          {"published_reference", published_reference()}};
}

inline RunReport report_from_json(const nlohmann::json& j) {
  RunReport r;
  r.autoscaler = j.at("autoscaler").get<std::string>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.scrape_interval_s = j.at("scrape_interval_s").get<int>();
  r.plan = plan_from_json(j.at("plan"));
  const auto& m = j.at("metrics");
  r.metrics.avg_replicas = m.at("avg_replicas").get<double>();
  r.metrics.resource_integral_pod_s =
      m.at("resource_integral_pod_s").get<double>();
  r.metrics.scaling_events = m.at("scaling_events").get<int>();
  for (const auto& p : j.at("timeline"))
    r.timeline.push_back({p.at("t").get<int>(), p.at("replicas").get<int>(),
                          p.at("cpu_pct").get<double>(),
                          p.at("mem_pct").get<double>(),
                          p.at("desired").get<int>()});
  for (const auto& ph : j.at("per_phase")) {
    PhaseMetrics pm;
    pm.name = ph.at("name").get<std::string>();
    pm.metrics.avg_replicas = ph.at("avg_replicas").get<double>();
    pm.metrics.resource_integral_pod_s =
        ph.at("resource_integral_pod_s").get<double>();
    pm.metrics.scaling_events = ph.at("scaling_events").get<int>();
    r.per_phase.push_back(pm);
  }
  return r;
}

inline std::string timeline_csv(const RunReport& r) {
  std::ostringstream out;
  out << "t,pod_count,cpu_pct,mem_pct,replicas\n";
  for (const auto& p : r.timeline)
    out << p.t_s << ',' << p.replicas << ',' << detail::fmt_double(p.cpu_pct)
        << ',' << detail::fmt_double(p.mem_pct) << ',' << p.desired << '\n';
  return out.str();
}

inline std::string rewards_csv(const RunReport& r) {
  std::ostringstream out;
  out << "t,action,r_cpu,r_mem,r_current,r_forecast,w_current,w_forecast,"
         "r_combined,r_stability,r_action_bonus,r_cost_penalty,r_total\n";
  for (const auto& c : r.cycles) {
    if (!c.reward_breakdown) continue;
    const auto& b = *c.reward_breakdown;
    out << c.t_s << ','
        << (c.executed_action ? rl::action_name(*c.executed_action) : "")
        << ',' << detail::fmt_double(b.r_cpu) << ','
        << detail::fmt_double(b.r_mem) << ',' << detail::fmt_double(b.r_current)
        << ',' << detail::fmt_double(b.r_forecast) << ','
        << detail::fmt_double(b.w_current) << ','
        << detail::fmt_double(b.w_forecast) << ','
        << detail::fmt_double(b.r_combined) << ','
        << detail::fmt_double(b.r_stability) << ','
        << detail::fmt_double(b.r_action_bonus) << ','
        << detail::fmt_double(b.r_cost_penalty) << ','
        << detail::fmt_double(b.r_total) << '\n';
  }
  return out.str();
}

inline nlohmann::json cycle_to_json(const graph::CycleState& c) {
  nlohmann::json trace = nlohmann::json::array();
  for (const auto& e : c.trace)
    trace.push_back({{"node", e.node}, {"summary", e.summary}});
  nlohmann::json j = {{"t", c.t_s}, {"trace", trace}};
  if (c.state_vec)
    j["state"] = {c.state_vec->s1_pred_mem_pct, c.state_vec->s2_cpu_pct,
                  c.state_vec->s3_mem_pct, c.state_vec->s4_replicas};
  if (c.proposed) j["proposed"] = rl::action_name(*c.proposed);
  if (c.verdict) {
    const char* kinds[] = {"approve", "override", "reject"};
    j["verdict"] = kinds[static_cast<int>(c.verdict->kind)];
    if (!c.verdict->reason.empty()) j["reason"] = c.verdict->reason;
  }
  if (c.executed_action) j["executed"] = rl::action_name(*c.executed_action);
  if (c.executed_replicas) j["replicas_after"] = *c.executed_replicas;
  if (c.forecast) {
    j["forecast_mem_mib"] = c.forecast->predicted_total_mem_mib;
    j["forecast_confidence"] = c.forecast->confidence;
  }
  if (c.reward_breakdown) j["r_total"] = c.reward_breakdown->r_total;
  return j;
}

inline void write_outputs(const RunReport& report, const std::string& outdir) {
  namespace fs = std::filesystem;
  fs::create_directories(outdir);
  {
    std::ofstream f(fs::path(outdir) / "report.json");
    f << report_to_json(report).dump(2) << "\n";
  }
  {
    std::ofstream f(fs::path(outdir) / "timeline.csv");
    f << timeline_csv(report);
  }
  {
    std::ofstream f(fs::path(outdir) / "decisions.jsonl");
    for (const auto& c : report.cycles) f << cycle_to_json(c).dump() << "\n";
  }
  {
    std::ofstream f(fs::path(outdir) / "rewards.csv");
    f << rewards_csv(report);
  }
}

// ---- config file ----

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid("cannot open config file: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigInvalid(std::string("malformed config: ") + e.what());
  }
  ExperimentConfig cfg;
  auto get = [&](const char* key, auto& field) {
    if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
  };
  get("autoscaler", cfg.autoscaler);
  get("seed", cfg.seed);
  get("phase_duration_s", cfg.phase_duration_s);
  get("decision_interval_s", cfg.decision_interval_s);
  get("scrape_interval_s", cfg.scrape_interval_s);
  get("min_replicas", cfg.min_replicas);
  get("max_replicas", cfg.max_replicas);
  get("lstm_path", cfg.lstm_path);
  get("dqn_path", cfg.dqn_path);
  if (j.contains("resources")) {
    const auto& r = j.at("resources");
    auto rg = [&](const char* key, double& field) {
      if (r.contains(key)) field = r.at(key).get<double>();
    };
    rg("cpu_request_mc", cfg.resources.cpu_request_mc);
    rg("cpu_limit_mc", cfg.resources.cpu_limit_mc);
    rg("mem_request_mib", cfg.resources.mem_request_mib);
    rg("mem_limit_mib", cfg.resources.mem_limit_mib);
  }
  if (j.contains("consumer")) {
    const auto& c = j.at("consumer");
    auto cg = [&](const char* key, auto& field) {
      if (c.contains(key)) field = c.at(key).get<std::decay_t<decltype(field)>>();
    };
    cg("request_work_mcs", cfg.consumer.request_work_mcs);
    cg("request_mem_mib", cfg.consumer.request_mem_mib);
    cg("base_mem_mib", cfg.consumer.base_mem_mib);
    cg("startup_delay_s", cfg.consumer.startup_delay_s);
    cg("grace_period_s", cfg.consumer.grace_period_s);
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    auto rg = [&](const char* key, double& field) {
      if (r.contains(key)) field = r.at(key).get<double>();
    };
    rg("cpu_target", cfg.reward_cfg.cpu_target);
    rg("mem_target", cfg.reward_cfg.mem_target);
    rg("sigma", cfg.reward_cfg.sigma);
    rg("w_cpu", cfg.reward_cfg.w_cpu);
    rg("w_mem", cfg.reward_cfg.w_mem);
    rg("forecast_weight_base", cfg.reward_cfg.forecast_weight_base);
    rg("cost_coeff", cfg.reward_cfg.cost_coeff);
    rg("healthy_band", cfg.reward_cfg.healthy_band);
  }
  if (j.contains("phases")) {
    loadgen::LoadPlan plan;
    plan.seed = cfg.seed;
    for (const auto& ph : j.at("phases")) {
      loadgen::PhaseSpec spec;
      spec.name = ph.at("name").get<std::string>();
      spec.concurrent_users = ph.at("concurrent_users").get<int>();
      spec.total_requests = ph.at("total_requests").get<int>();
      spec.duration_s = ph.value("duration_s", cfg.phase_duration_s);
      plan.phases.push_back(spec);
    }
    cfg.plan_override = plan;
  }
  return cfg;
}

// ---- gradient verification ----

struct GradCheckReport {
  double lstm_max_rel_err = 0.0;
  double dqn_max_rel_err = 0.0;
  int trials = 0;
};

// Seeded finite-difference suites for both models. DQN batches are redrawn
// (deterministically) until every ReLU pre-activation and Huber residual is
// safely away from its kink; gradients are only defined at smooth points.
inline GradCheckReport run_gradcheck(std::uint64_t seed, int trials) {
  GradCheckReport report;
  report.trials = trials;
  SplitMix64 rng(seed);
  for (int trial = 0; trial < trials; ++trial) {
    auto params = forecast::init_lstm(rng.next());
    forecast::Scaler scaler;
    scaler.mean = {500.0, 3.0};
    scaler.std = {200.0, 2.0};
    forecast::TrainSample sample;
    for (int t = 0; t < forecast::kLookback; ++t)
      sample.window.push_back({rng.uniform(200.0, 900.0),
                               static_cast<double>(1 + rng.uniform_int(8))});
    sample.next_total_mem_mib = rng.uniform(200.0, 900.0);
    report.lstm_max_rel_err =
        std::max(report.lstm_max_rel_err,
                 forecast::grad_check(params, scaler, sample));
  }
  for (int trial = 0; trial < trials; ++trial) {
    auto main = rl::init_dqn(rng.next());
    auto target = rl::init_dqn(rng.next());
    std::vector<rl::Experience> batch;
    for (int attempt = 0; attempt < 100; ++attempt) {
      batch.clear();
      for (int i = 0; i < 4; ++i) {
        rl::Experience e;
        e.state = {rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0),
                   rng.uniform(0.0, 100.0),
                   static_cast<double>(1 + rng.uniform_int(10))};
        e.next_state = {rng.uniform(0.0, 100.0), rng.uniform(0.0, 100.0),
                        rng.uniform(0.0, 100.0),
                        static_cast<double>(1 + rng.uniform_int(10))};
        e.action = rl::action_from_index(static_cast<int>(rng.uniform_int(3)));
        e.reward = rng.uniform(-1.0, 1.5);
        e.done = rng.uniform() < 0.25;
        batch.push_back(e);
      }
      auto ys = rl::td_targets(target, batch, 0.99);
      if (rl::kink_margin(main, batch, ys) > 1e-3) break;
    }
    report.dqn_max_rel_err =
        std::max(report.dqn_max_rel_err,
                 rl::dqn_grad_check(main, target, batch));
  }
  return report;
}

// ---- training entry points ----

struct ForecasterTraining {
  forecast::LstmParams params;
  forecast::Scaler scaler;
  double holdout_mape_pct = 0.0;
  double holdout_r2 = 0.0;
  std::size_t train_samples = 0;
  std::size_t holdout_samples = 0;
  std::vector<double> epoch_losses;
};

// Dataset extraction: windows never cross run boundaries.
inline std::vector<forecast::TrainSample> windows_from_series(
    const std::vector<metrics::MetricsSample>& series) {
  std::vector<forecast::TrainSample> out;
  const int L = forecast::kLookback;
  for (std::size_t end = L; end < series.size(); ++end) {
    forecast::TrainSample s;
    for (std::size_t k = end - L; k < end; ++k)
      s.window.push_back(
          {series[k].total_mem_mib, static_cast<double>(series[k].pod_count)});
    s.next_total_mem_mib = series[end].total_mem_mib;
    out.push_back(std::move(s));
  }
  return out;
}

// Bootstrap on HPA-driven runs: train on the first (n_seeds - 1) seeds,
// hold out every window from the last seed.
inline ForecasterTraining train_forecaster(const ExperimentConfig& base,
                                           int n_seeds = 5, int epochs = 300,
                                           double lr = 0.001) {
  if (n_seeds < 2)
    throw ConfigInvalid("train_forecaster needs at least 2 seeds");
  std::vector<forecast::TrainSample> train_set, holdout;
  for (int i = 0; i < n_seeds; ++i) {
    ExperimentConfig cfg = base;
    cfg.autoscaler = "hpa";
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    cfg.plan_override.reset();
    cfg.normalize();
    cfg.validate();
    auto loop = run_loop(cfg, nullptr);
    auto samples = windows_from_series(loop.series);
    auto& dst = (i == n_seeds - 1) ? holdout : train_set;
    for (auto& s : samples) dst.push_back(std::move(s));
  }
  if (train_set.empty() || holdout.empty())
    throw ConfigInvalid("bootstrap produced no training data");

  std::vector<forecast::FeatureRow> rows;
  for (const auto& s : train_set)
    for (const auto& r : s.window) rows.push_back(r);
  ForecasterTraining out;
  out.scaler = forecast::fit_scaler(rows);
  out.params = forecast::train(forecast::init_lstm(base.seed), out.scaler,
                               train_set, epochs, lr, &out.epoch_losses);
  out.train_samples = train_set.size();
  out.holdout_samples = holdout.size();

  std::vector<double> preds, actuals;
  for (const auto& s : holdout) {
    preds.push_back(
        forecast::forward(out.params, out.scaler, s.window).predicted_total_mem_mib);
    actuals.push_back(s.next_total_mem_mib);
  }
  out.holdout_mape_pct = forecast::mape(preds, actuals);
  double mean = 0.0;
  for (double a : actuals) mean += a;
  mean /= static_cast<double>(actuals.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < actuals.size(); ++i) {
    ss_res += (preds[i] - actuals[i]) * (preds[i] - actuals[i]);
    ss_tot += (actuals[i] - mean) * (actuals[i] - mean);
  }
  out.holdout_r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
  return out;
}

struct EpisodeStat {
  int episode = 0;
  double total_reward = 0.0;
  double epsilon_end = 0.0;
  double avg_replicas = 0.0;
};

struct AgentTraining {
  rl::DqnParams params;
  std::vector<EpisodeStat> curve;
  int train_steps = 0;
  int target_syncs = 0;
};

// Episodic DQN training: each episode replays the full phased experiment
// under a different load seed; the agent, replay buffer and epsilon
// schedule persist across episodes.
inline AgentTraining train_agent(const ExperimentConfig& base,
                                 const forecast::LstmParams& lstm,
                                 const forecast::Scaler& scaler,
                                 int episodes = 150) {
  NimbusRuntime runtime(lstm, scaler,
                        rl::init_dqn(base.seed, 64,
                                     static_cast<double>(base.max_replicas)),
                        base.seed);
  runtime.ctl.training = true;
  runtime.ctl.epsilon = 1.0;

  AgentTraining out{runtime.trainer.main(), {}, 0, 0};
  for (int e = 0; e < episodes; ++e) {
    ExperimentConfig cfg = base;
    cfg.autoscaler = "nimbus";
    cfg.seed = base.seed + static_cast<std::uint64_t>(e);
    cfg.plan_override.reset();
    cfg.normalize();
    cfg.validate();
    // Fresh per-episode controller memory; the learner persists.
    runtime.ctl.pending.reset();
    runtime.ctl.executed_deltas.clear();
    runtime.ctl.open_forecasts.clear();
    runtime.ctl.residual_pct.clear();

    auto loop = run_loop(cfg, &runtime);
    EpisodeStat stat;
    stat.episode = e;
    for (const auto& c : loop.cycles)
      if (c.reward_breakdown) stat.total_reward += c.reward_breakdown->r_total;
    stat.epsilon_end = runtime.ctl.epsilon;
    stat.avg_replicas =
        summarize(loop.timeline, cfg.scrape_interval_s).avg_replicas;
    out.curve.push_back(stat);
  }
  out.params = runtime.trainer.main();
  out.train_steps = runtime.trainer.train_steps();
  out.target_syncs = runtime.trainer.syncs();
  return out;
}

}  // namespace nimbus::harness
