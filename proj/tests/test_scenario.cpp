#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "slsim/scenario.hpp"

using namespace slsim;

TEST_CASE("inter-vehicle gaps are exponential") {
  ScenarioConfig cfg;
  std::vector<double> gaps;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    RandomStream rng = RandomStream::derive(seed, "topology");
    const Topology t = generate_topology(cfg, rng);
    REQUIRE(t.size() == 200);
    for (std::size_t i = 1; i < t.size(); ++i) {
      REQUIRE(t.positions_m[i] > t.positions_m[i - 1]);
      gaps.push_back(t.positions_m[i] - t.positions_m[i - 1]);
    }
  }
  std::sort(gaps.begin(), gaps.end());
  const double n = static_cast<double>(gaps.size());
  double d = 0.0;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const double f = 1.0 - std::exp(-gaps[i] / cfg.mean_spacing_m);
    d = std::max({d, std::abs(f - i / n), std::abs(f - (i + 1) / n)});
  }
  // Kolmogorov-Smirnov, alpha = 0.01.
  CHECK(d < 1.628 / std::sqrt(n));
}

TEST_CASE("mean line length") {
  ScenarioConfig cfg;
  const int runs = 40;
  double sum = 0.0;
  for (int s = 0; s < runs; ++s) {
    RandomStream rng = RandomStream::derive(100 + s, "topology");
    const Topology t = generate_topology(cfg, rng);
    sum += t.positions_m.back() - t.positions_m.front();
  }
  const double expect = 199 * cfg.mean_spacing_m;
  const double sd = std::sqrt(199.0) * cfg.mean_spacing_m / std::sqrt(double(runs));
  CHECK(std::abs(sum / runs - expect) < 3.5 * sd);
}

TEST_CASE("platoon sits on the median index and measurability matches the geometry") {
  ScenarioConfig cfg;
  RandomStream rng(7);
  const Topology t = generate_topology(cfg, rng);
  CHECK(t.platoon_members == std::vector<UeId>{97, 98, 99, 100, 101});

  std::vector<UeId> expect;
  const double lo = t.positions_m.front(), hi = t.positions_m.back();
  for (UeId u = 0; u < t.size(); ++u) {
    if (u >= 97 && u <= 101) continue;
    const double x = t.positions_m[u];
    if (x - lo >= 200.0 && hi - x >= 200.0) expect.push_back(u);
  }
  CHECK(t.measurable_broadcasters == expect);
  CHECK(!t.measurable_broadcasters.empty());
  CHECK_FALSE(t.measurable(0));
  CHECK_FALSE(t.measurable(99));
}

TEST_CASE("two-UE platoon needs no broadcasters") {
  ScenarioConfig cfg;
  cfg.n_ues = 2;
  cfg.platoon_size = 2;
  RandomStream rng(3);
  Topology t;
  REQUIRE_NOTHROW(t = generate_topology(cfg, rng));
  CHECK(t.platoon_members == std::vector<UeId>{0, 1});
  CHECK(t.measurable_broadcasters.empty());
}

TEST_CASE("too short a line is rejected") {
  ScenarioConfig cfg;
  cfg.n_ues = 10;
  RandomStream rng(3);
  CHECK_THROWS_AS(generate_topology(cfg, rng), std::invalid_argument);
}

TEST_CASE("Poisson arrival counts") {
  ScenarioConfig cfg;
  cfg.sim_duration_s = 100.0;
  cfg.lambda_g = 0.0;
  const Scenario s = make_scenario(cfg);
  std::size_t n = 0;
  for (UeId u = 0; u < s.topology.size(); ++u) {
    const auto& v = s.schedule.times_s[u];
    CHECK(std::is_sorted(v.begin(), v.end()));
    if (!v.empty()) {
      CHECK(v.front() >= 0.0);
      CHECK(v.back() < cfg.sim_duration_s);
    }
    if (s.topology.in_platoon(u)) CHECK(v.empty());
    n += v.size();
  }
  const double mean = 195 * 1.8 * 100.0;
  CHECK(mean == doctest::Approx(35100));
  CHECK(std::abs(double(n) - mean) < 3.0 * std::sqrt(mean));
}

TEST_CASE("scenario generation is deterministic") {
  ScenarioConfig cfg;
  const Scenario a = make_scenario(cfg);
  const Scenario b = make_scenario(cfg);
  CHECK(a.topology.positions_m == b.topology.positions_m);
  CHECK(a.schedule.times_s == b.schedule.times_s);
  cfg.seed = 2;
  const Scenario c = make_scenario(cfg);
  CHECK(a.topology.positions_m != c.topology.positions_m);
}

TEST_CASE("groupcast rate leaves broadcast arrivals untouched") {
  ScenarioConfig cfg;
  const Scenario a = make_scenario(cfg);
  cfg.lambda_g = 17.0;
  const Scenario b = make_scenario(cfg);
  for (UeId u = 0; u < a.topology.size(); ++u) {
    if (a.topology.in_platoon(u))
      CHECK(b.schedule.times_s[u].size() > a.schedule.times_s[u].size());
    else
      CHECK(a.schedule.times_s[u] == b.schedule.times_s[u]);
  }
}

TEST_CASE("config validation") {
  ScenarioConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.latency_slots() == 20);
  CHECK(cfg.ack_slots() == 4);
  cfg.latency_budget_ms = 0.2;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ScenarioConfig{};
  cfg.platoon_size = 201;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = ScenarioConfig{};
  cfg.lambda_b = -1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
