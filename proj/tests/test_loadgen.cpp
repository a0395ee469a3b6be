#include <catch2/catch_amalgamated.hpp>

#include "nimbus/loadgen.hpp"

using namespace nimbus::loadgen;

TEST_CASE("default plan matches the four-phase pattern") {
  auto plan = default_plan(123);
  REQUIRE(plan.phases.size() == 4);
  int total = 0;
  for (const auto& p : plan.phases) total += p.total_requests;
  REQUIRE(total == 220);  // 40 + 60 + 90 + 30
  REQUIRE(plan.phases[2].concurrent_users == 15);
  REQUIRE(plan.phases[2].total_requests == 90);
  REQUIRE(plan.total_duration_s() == 480);
}

TEST_CASE("default plan is identical across calls with the same seed") {
  REQUIRE(default_plan(7) == default_plan(7));
}

TEST_CASE("same seed gives identical arrival lists") {
  auto a = generate_arrivals(default_plan(42));
  auto b = generate_arrivals(default_plan(42));
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].time_s == b[i].time_s);
    REQUIRE(a[i].job.id == b[i].job.id);
  }
}

TEST_CASE("per-phase counts are exact for many seeds") {
  for (std::uint64_t seed : {1ULL, 2ULL, 42ULL, 999ULL, 31337ULL,
                             0xDEADBEEFULL, 7777777ULL}) {
    auto plan = default_plan(seed);
    auto arrivals = generate_arrivals(plan);
    REQUIRE(arrivals.size() == 220);
    int start = 0;
    for (const auto& phase : plan.phases) {
      int count = 0;
      for (const auto& a : arrivals)
        if (a.time_s >= start && a.time_s < start + phase.duration_s) ++count;
      REQUIRE(count == phase.total_requests);
      start += phase.duration_s;
    }
  }
}

TEST_CASE("phase 2 window holds exactly 60 arrivals") {
  auto arrivals = generate_arrivals(default_plan(42));
  int count = 0;
  for (const auto& a : arrivals)
    if (a.time_s >= 120.0 && a.time_s < 240.0) ++count;
  REQUIRE(count == 60);
}

TEST_CASE("different seeds keep counts but move timestamps") {
  auto a = generate_arrivals(default_plan(1));
  auto b = generate_arrivals(default_plan(2));
  REQUIRE(a.size() == b.size());
  bool any_differs = false;
  for (std::size_t i = 0; i < a.size(); ++i)
    any_differs |= (a[i].time_s != b[i].time_s);
  REQUIRE(any_differs);
}

TEST_CASE("output is sorted by time") {
  auto arrivals = generate_arrivals(default_plan(271828));
  for (std::size_t i = 1; i < arrivals.size(); ++i)
    REQUIRE(arrivals[i - 1].time_s <= arrivals[i].time_s);
}

TEST_CASE("job ids are sequential from 1") {
  auto arrivals = generate_arrivals(default_plan(3));
  for (std::size_t i = 0; i < arrivals.size(); ++i)
    REQUIRE(arrivals[i].job.id == static_cast<std::int64_t>(i + 1));
}
