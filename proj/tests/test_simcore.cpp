#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "nimbus/rng.hpp"
#include "nimbus/simcore.hpp"

using namespace nimbus::sim;

namespace {

ClusterState cluster_with_running_pods(int n) {
  ClusterState c;
  c.desired_replicas = n;
  for (int i = 0; i < n; ++i) {
    PodState pod;
    pod.pod_id = c.next_pod_id++;
    pod.phase = PodPhase::Running;
    pod.base_mem_mib = c.consumer.base_mem_mib;
    c.pods.push_back(pod);
  }
  return c;
}

RequestJob job_at(int t, double work = 300.0, double mem = 40.0) {
  RequestJob j;
  j.arrival_s = t;
  j.remaining_work_mcs = work;
  j.mem_footprint_mib = mem;
  return j;
}

// Order-insensitive fingerprint of everything that matters for determinism.
std::string fingerprint(const ClusterState& c) {
  std::ostringstream os;
  os << c.clock_s << '|' << c.desired_replicas << '|' << c.completed << '|'
     << c.injected << '|' << c.next_pod_id << '|';
  for (const auto& p : c.pods) {
    os << p.pod_id << ':' << static_cast<int>(p.phase) << ':'
       << p.phase_since_s << ':' << p.last_cpu_mc << '[';
    for (const auto& j : p.in_flight) os << j.id << ',' << j.remaining_work_mcs << ';';
    os << ']';
  }
  os << "q[";
  for (const auto& j : c.pending_queue) os << j.id << ';';
  os << ']';
  return os.str();
}

}  // namespace

TEST_CASE("set_desired_replicas is identity at current value") {
  auto c = cluster_with_running_pods(3);
  auto before = fingerprint(c);
  c = set_desired_replicas(c, 3);
  REQUIRE(fingerprint(c) == before);
}

TEST_CASE("set_desired_replicas clamps to bounds") {
  auto c = cluster_with_running_pods(3);
  c = set_desired_replicas(c, 50);
  REQUIRE(c.desired_replicas == 10);
  c = set_desired_replicas(c, -4);
  REQUIRE(c.desired_replicas == 1);
}

TEST_CASE("scale-down terminates newest pod and re-queues its jobs") {
  auto c = cluster_with_running_pods(3);
  c.pods[2].in_flight.push_back(job_at(0));
  c.pods[2].in_flight.back().id = 77;
  c.injected = 1;
  c = set_desired_replicas(c, 2);
  REQUIRE(c.pods[2].pod_id == 3);
  REQUIRE(c.pods[2].phase == PodPhase::Terminating);
  REQUIRE(c.pods[2].in_flight.empty());
  REQUIRE(c.pending_queue.size() == 1);
  REQUIRE(c.pending_queue.front().id == 77);
  REQUIRE(c.pods[0].phase == PodPhase::Running);
  REQUIRE(c.pods[1].phase == PodPhase::Running);
}

TEST_CASE("scale-up creates pending pods that start after the delay") {
  auto c = cluster_with_running_pods(1);
  c = set_desired_replicas(c, 3);
  REQUIRE(c.pods.size() == 3);
  REQUIRE(c.pods[1].phase == PodPhase::Pending);
  REQUIRE(c.pods[2].phase == PodPhase::Pending);
  // Still Pending through the delay window; the pods serve from their
  // 11th second on, so the phase flips during the tick after the delay.
  for (int i = 0; i < c.consumer.startup_delay_s; ++i) c = tick(c);
  REQUIRE(c.pods[1].phase == PodPhase::Pending);
  c = tick(c);
  REQUIRE(c.pods[1].phase == PodPhase::Running);
  REQUIRE(c.pods[2].phase == PodPhase::Running);
  REQUIRE(count_running(c) == 3);
}

TEST_CASE("terminating pods are removed after the grace period") {
  auto c = cluster_with_running_pods(2);
  c = set_desired_replicas(c, 1);
  REQUIRE(c.pods.size() == 2);
  for (int i = 0; i < c.consumer.grace_period_s; ++i) c = tick(c);
  REQUIRE(c.pods.size() == 2);  // removal happens on the next tick start
  c = tick(c);
  REQUIRE(c.pods.size() == 1);
  REQUIRE(c.pods[0].pod_id == 1);
}

TEST_CASE("route_request picks the least-loaded pod") {
  auto c = cluster_with_running_pods(2);
  c.pods[0].in_flight.push_back(job_at(0));
  c.pods[0].in_flight.push_back(job_at(0));
  c.injected = 2;
  c = route_request(c, job_at(0));
  REQUIRE(c.pods[1].in_flight.size() == 1);
}

TEST_CASE("route_request queues when no pod is running") {
  ClusterState c;
  c = route_request(c, job_at(0));
  REQUIRE(c.pending_queue.size() == 1);
  REQUIRE(c.injected == 1);
}

TEST_CASE("route_request breaks ties toward the lower pod id") {
  auto c = cluster_with_running_pods(2);
  c = route_request(c, job_at(0));
  REQUIRE(c.pods[0].in_flight.size() == 1);
  REQUIRE(c.pods[1].in_flight.empty());
}

TEST_CASE("route_request respects memory headroom") {
  auto c = cluster_with_running_pods(1);
  // Fill pod 1 to the memory limit: (1024 - 150) / 40 = 21 jobs fit.
  for (int i = 0; i < 21; ++i) c = route_request(c, job_at(0));
  REQUIRE(c.pods[0].in_flight.size() == 21);
  c = route_request(c, job_at(0));
  REQUIRE(c.pods[0].in_flight.size() == 21);
  REQUIRE(c.pending_queue.size() == 1);
  REQUIRE(pod_usage(c.pods[0]).mem_mib <= c.resources.mem_limit_mib);
}

TEST_CASE("one job of 1000 mcore-s finishes in exactly one tick") {
  auto c = cluster_with_running_pods(1);
  c = route_request(c, job_at(0, 1000.0));
  c = tick(c);
  REQUIRE(c.completed == 1);
  REQUIRE(c.pods[0].in_flight.empty());
  REQUIRE(c.pods[0].last_cpu_mc == Catch::Approx(1000.0));
}

TEST_CASE("two jobs of 1000 mcore-s each finish after two ticks") {
  auto c = cluster_with_running_pods(1);
  c = route_request(c, job_at(0, 1000.0));
  c = route_request(c, job_at(0, 1000.0));
  c = tick(c);
  REQUIRE(c.completed == 0);
  REQUIRE(c.pods[0].in_flight[0].remaining_work_mcs == Catch::Approx(500.0));
  REQUIRE(c.pods[0].in_flight[1].remaining_work_mcs == Catch::Approx(500.0));
  c = tick(c);
  REQUIRE(c.completed == 2);
}

TEST_CASE("unused share is redistributed to hungrier jobs") {
  auto c = cluster_with_running_pods(1);
  c = route_request(c, job_at(0, 100.0));
  c = route_request(c, job_at(0, 1900.0));
  c = tick(c);
  // Small job takes 100, the big one gets the remaining 900.
  REQUIRE(c.completed == 1);
  REQUIRE(c.pods[0].in_flight.size() == 1);
  REQUIRE(c.pods[0].in_flight[0].remaining_work_mcs == Catch::Approx(1000.0));
  REQUIRE(c.pods[0].last_cpu_mc == Catch::Approx(1000.0));
}

TEST_CASE("tick on an empty cluster only advances the clock") {
  ClusterState c;
  auto next = tick(c);
  REQUIRE(next.clock_s == 1);
  REQUIRE(next.pods.empty());
  REQUIRE(next.completed == 0);
}

TEST_CASE("pod_usage: idle, memory sum, cpu cap") {
  auto c = cluster_with_running_pods(1);
  auto u = pod_usage(c.pods[0]);
  REQUIRE(u.cpu_mc == 0.0);
  REQUIRE(u.mem_mib == Catch::Approx(150.0));

  for (int i = 0; i < 3; ++i) c = route_request(c, job_at(0));
  REQUIRE(pod_usage(c.pods[0]).mem_mib == Catch::Approx(270.0));

  for (int i = 0; i < 4; ++i) c = route_request(c, job_at(0, 5000.0));
  c = tick(c);
  REQUIRE(pod_usage(c.pods[0]).cpu_mc == Catch::Approx(1000.0));
}

TEST_CASE("pending and terminating pods report zero cpu") {
  ClusterState c;
  c = set_desired_replicas(c, 2);
  for (const auto& pod : c.pods)
    if (pod.phase == PodPhase::Pending) {
      auto u = pod_usage(pod);
      REQUIRE(u.cpu_mc == 0.0);
      REQUIRE(u.mem_mib == Catch::Approx(150.0));
    }
}

TEST_CASE("conservation and determinism under a random scaling walk") {
  auto drive = [](std::uint64_t seed) {
    nimbus::SplitMix64 rng(seed);
    auto c = cluster_with_running_pods(2);
    std::string trace;
    for (int t = 0; t < 300; ++t) {
      int arrivals = static_cast<int>(rng.uniform_int(4));
      for (int a = 0; a < arrivals; ++a)
        c = route_request(c, job_at(c.clock_s, 200.0 + 100.0 * static_cast<double>(rng.uniform_int(10))));
      if (t % 10 == 0)
        c = set_desired_replicas(
            c, 1 + static_cast<int>(rng.uniform_int(10)));
      c = tick(c);
      REQUIRE(conservation_holds(c));
      for (const auto& pod : c.pods)
        REQUIRE(pod_usage(pod).mem_mib <= c.resources.mem_limit_mib);
      trace += fingerprint(c);
    }
    return trace;
  };
  REQUIRE(drive(5) == drive(5));
  REQUIRE(drive(5) != drive(6));
}

TEST_CASE("pod ids are never reused and the clock is monotone") {
  auto c = cluster_with_running_pods(1);
  std::int64_t max_seen = 1;
  for (int round = 0; round < 5; ++round) {
    c = set_desired_replicas(c, 4);
    for (const auto& p : c.pods) max_seen = std::max(max_seen, p.pod_id);
    for (int i = 0; i < 12; ++i) c = tick(c);
    c = set_desired_replicas(c, 1);
    for (int i = 0; i < 6; ++i) c = tick(c);
    for (const auto& p : c.pods) REQUIRE(p.pod_id <= c.next_pod_id - 1);
    REQUIRE(c.next_pod_id > max_seen);
  }
  REQUIRE(c.clock_s == 5 * 18);
}
