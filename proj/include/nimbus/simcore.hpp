#pragma once

#include <algorithm>
#include <cassert>
#include <cstdint>
#include <deque>
#include <numeric>
#include <vector>

// Discrete-time model of one Kubernetes deployment running a deterministic
// consumer: every request costs a fixed amount of CPU work and holds a fixed
// memory footprint while in flight. Pure step semantics: every operation
// takes a ClusterState by value and returns the successor state, so two runs
// from the same initial state and arrival sequence are bit-identical.

namespace nimbus::sim {

struct ResourceSpec {
  double cpu_request_mc = 600.0;   // millicores
  double cpu_limit_mc = 1000.0;
  double mem_request_mib = 512.0;
  double mem_limit_mib = 1024.0;

  bool valid() const {
    return cpu_request_mc > 0 && mem_request_mib > 0 &&
           cpu_request_mc <= cpu_limit_mc && mem_request_mib <= mem_limit_mib;
  }
};

// Per-request cost of the deterministic consumer and pod lifecycle timing.
// The request cost is calibrated against the phased load plan: peak-phase
// demand (0.75 req/s * 3000 mcore-s) sustains roughly three pods at 75%
// utilization, so the controllers are genuinely exercised across [1, max].
struct ConsumerModel {
  double request_work_mcs = 3000.0;  // millicore-seconds of CPU per request
  double request_mem_mib = 40.0;     // held while the request is in flight
  double base_mem_mib = 150.0;       // per-pod idle footprint
  int startup_delay_s = 10;
  int grace_period_s = 5;
};

struct RequestJob {
  std::int64_t id = 0;
  int arrival_s = 0;
  double remaining_work_mcs = 0.0;
  double mem_footprint_mib = 0.0;
};

enum class PodPhase { Pending, Running, Terminating };

struct PodState {
  std::int64_t pod_id = 0;
  PodPhase phase = PodPhase::Pending;
  int phase_since_s = 0;
  std::vector<RequestJob> in_flight;
  double base_mem_mib = 0.0;
  double last_cpu_mc = 0.0;  // CPU actually consumed during the last tick
};

struct PodUsage {
  double cpu_mc = 0.0;
  double mem_mib = 0.0;
};

// cpu is what the pod burned during the last tick (0 unless Running);
// mem is base footprint plus all in-flight request footprints.
inline PodUsage pod_usage(const PodState& pod) {
  double mem = pod.base_mem_mib;
  for (const auto& job : pod.in_flight) mem += job.mem_footprint_mib;
  double cpu = pod.phase == PodPhase::Running ? pod.last_cpu_mc : 0.0;
  return {cpu, mem};
}

struct ClusterState {
  int clock_s = 0;
  std::vector<PodState> pods;  // ordered by pod_id, ids never reused
  int desired_replicas = 1;
  int min_replicas = 1;
  int max_replicas = 10;
  std::int64_t next_pod_id = 1;
  std::deque<RequestJob> pending_queue;
  std::int64_t completed = 0;
  std::int64_t injected = 0;
  ResourceSpec resources;
  ConsumerModel consumer;
};

inline int count_alive(const ClusterState& c) {
  int n = 0;
  for (const auto& p : c.pods)
    if (p.phase != PodPhase::Terminating) ++n;
  return n;
}

inline int count_running(const ClusterState& c) {
  int n = 0;
  for (const auto& p : c.pods)
    if (p.phase == PodPhase::Running) ++n;
  return n;
}

inline std::int64_t jobs_in_flight(const ClusterState& c) {
  std::int64_t n = 0;
  for (const auto& p : c.pods) n += static_cast<std::int64_t>(p.in_flight.size());
  return n;
}

// injected = completed + in flight + queued, at every step.
inline bool conservation_holds(const ClusterState& c) {
  return c.injected == c.completed + jobs_in_flight(c) +
                           static_cast<std::int64_t>(c.pending_queue.size());
}

namespace detail {

// Least-loaded Running pod with memory headroom for the job; ties go to the
// lowest pod_id. Returns index into pods or -1.
inline int pick_target(const ClusterState& c, const RequestJob& job) {
  int best = -1;
  std::size_t best_load = 0;
  for (std::size_t i = 0; i < c.pods.size(); ++i) {
    const auto& pod = c.pods[i];
    if (pod.phase != PodPhase::Running) continue;
    if (pod_usage(pod).mem_mib + job.mem_footprint_mib >
        c.resources.mem_limit_mib)
      continue;
    if (best < 0 || pod.in_flight.size() < best_load) {
      best = static_cast<int>(i);
      best_load = pod.in_flight.size();
    }
  }
  return best;
}

// Place queued jobs while the head of the queue fits somewhere (strict FIFO:
// a blocked head blocks the queue).
inline void drain_queue(ClusterState& c) {
  while (!c.pending_queue.empty()) {
    int idx = pick_target(c, c.pending_queue.front());
    if (idx < 0) break;
    c.pods[static_cast<std::size_t>(idx)].in_flight.push_back(
        c.pending_queue.front());
    c.pending_queue.pop_front();
  }
}

}  // namespace detail

// Clamp n into [min, max] and reconcile pod set: scale-up adds Pending pods,
// scale-down terminates the newest non-Terminating pods (LIFO by pod_id) and
// re-queues their in-flight jobs.
inline ClusterState set_desired_replicas(ClusterState c, int n) {
  int target = std::clamp(n, c.min_replicas, c.max_replicas);
  c.desired_replicas = target;
  int alive = count_alive(c);
  if (target > alive) {
    for (int i = 0; i < target - alive; ++i) {
      PodState pod;
      pod.pod_id = c.next_pod_id++;
      pod.phase = PodPhase::Pending;
      pod.phase_since_s = c.clock_s;
      pod.base_mem_mib = c.consumer.base_mem_mib;
      c.pods.push_back(pod);
    }
  } else if (target < alive) {
    int excess = alive - target;
    for (auto it = c.pods.rbegin(); it != c.pods.rend() && excess > 0; ++it) {
      if (it->phase == PodPhase::Terminating) continue;
      it->phase = PodPhase::Terminating;
      it->phase_since_s = c.clock_s;
      for (auto& job : it->in_flight) c.pending_queue.push_back(job);
      it->in_flight.clear();
      --excess;
    }
  }
  assert(conservation_holds(c));
  return c;
}

// Admit one arriving request. Expects job.arrival_s == clock.
inline ClusterState route_request(ClusterState c, RequestJob job) {
  assert(job.arrival_s == c.clock_s);
  ++c.injected;
  int idx = detail::pick_target(c, job);
  if (idx >= 0)
    c.pods[static_cast<std::size_t>(idx)].in_flight.push_back(job);
  else
    c.pending_queue.push_back(job);
  assert(conservation_holds(c));
  return c;
}

// One simulation step: pod phase transitions, CPU-fair request execution,
// queue drain, clock advance. dt is fixed at 1 s.
inline ClusterState tick(ClusterState c, int dt = 1) {
  assert(dt == 1);

  // Pending -> Running after the startup delay.
  for (auto& pod : c.pods) {
    if (pod.phase == PodPhase::Pending &&
        c.clock_s - pod.phase_since_s >= c.consumer.startup_delay_s) {
      pod.phase = PodPhase::Running;
      pod.phase_since_s = c.clock_s;
    }
  }

  // Remove Terminating pods past the grace period (their jobs were
  // re-queued when they were marked).
  std::erase_if(c.pods, [&](const PodState& pod) {
    return pod.phase == PodPhase::Terminating &&
           c.clock_s - pod.phase_since_s >= c.consumer.grace_period_s;
  });

  // Execute work. A pod delivers min(cpu_limit, total demand) millicores,
  // split max-min fair across its in-flight jobs (a job never gets more
  // than it demands; leftover capacity goes to hungrier jobs).
  for (auto& pod : c.pods) {
    if (pod.phase != PodPhase::Running) {
      pod.last_cpu_mc = 0.0;
      continue;
    }
    if (pod.in_flight.empty()) {
      pod.last_cpu_mc = 0.0;
      continue;
    }
    std::vector<std::size_t> order(pod.in_flight.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return pod.in_flight[a].remaining_work_mcs <
             pod.in_flight[b].remaining_work_mcs;
    });
    double total_demand = 0.0;
    for (const auto& job : pod.in_flight)
      total_demand += job.remaining_work_mcs / dt;
    double capacity = std::min(c.resources.cpu_limit_mc, total_demand);
    double remaining_cap = capacity;
    std::size_t left = order.size();
    for (std::size_t idx : order) {
      auto& job = pod.in_flight[idx];
      double share = remaining_cap / static_cast<double>(left);
      double grant = std::min(job.remaining_work_mcs / dt, share);
      job.remaining_work_mcs -= grant * dt;
      remaining_cap -= grant;
      --left;
    }
    pod.last_cpu_mc = capacity;
    std::int64_t finished = static_cast<std::int64_t>(std::erase_if(
        pod.in_flight,
        [](const RequestJob& j) { return j.remaining_work_mcs <= 1e-9; }));
    c.completed += finished;
  }

  detail::drain_queue(c);
  c.clock_s += dt;
  assert(conservation_holds(c));
  return c;
}

}  // namespace nimbus::sim
