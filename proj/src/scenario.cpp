#include "slsim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace slsim {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Slot ScenarioConfig::latency_slots() const {
  return static_cast<Slot>(std::floor(latency_budget_ms * 1e3 / radio.slot_duration_us + 1e-9));
}

Slot ScenarioConfig::ack_slots() const {
  return static_cast<Slot>(std::ceil(ack_delay_ms * 1e3 / radio.slot_duration_us - 1e-9));
}

void ScenarioConfig::validate() const {
  radio.validate();
  require(platoon_size >= 2, "platoon_size must be at least 2");
  require(platoon_size <= n_ues, "platoon_size must not exceed n_ues");
  require(mean_spacing_m > 0, "mean_spacing_m must be positive");
  require(lambda_b >= 0 && std::isfinite(lambda_b), "lambda_b must be non-negative");
  require(lambda_g >= 0 && std::isfinite(lambda_g), "lambda_g must be non-negative");
  require(comm_range_m > 0, "comm_range_m must be positive");
  require(plr_qos > 0 && plr_qos < 1, "plr_qos must be in (0, 1)");
  require(latency_budget_ms * 1e3 >= radio.slot_duration_us - 1e-9,
          "latency_budget_ms must be at least one slot");
  require(k_g >= 1, "k_g must be at least 1");
  require(k_b >= 1, "k_b must be at least 1");
  require(ack_delay_ms >= 0, "ack_delay_ms must be non-negative");
  require(sim_duration_s > 0, "sim_duration_s must be positive");
}

bool Topology::measurable(UeId ue) const {
  return std::binary_search(measurable_broadcasters.begin(), measurable_broadcasters.end(), ue);
}

std::size_t ArrivalSchedule::total() const {
  std::size_t n = 0;
  for (const auto& v : times_s) n += v.size();
  return n;
}

Topology generate_topology(const ScenarioConfig& config, RandomStream& rng) {
  const auto n = static_cast<std::size_t>(config.n_ues);
  Topology topo;
  topo.positions_m.resize(n);
  double x = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (i > 0) {
      double gap = rng.exponential(1.0 / config.mean_spacing_m);
      // Strictly increasing positions; an exact zero draw has probability 2^-53.
      if (!(gap > 0.0)) gap = 1e-9;
      x += gap;
    }
    topo.positions_m[i] = x;
  }

  const auto ng = static_cast<std::size_t>(config.platoon_size);
  const std::size_t first = (n - ng) / 2;
  for (std::size_t i = 0; i < ng; ++i) topo.platoon_members.push_back(static_cast<UeId>(first + i));

  const double lo = topo.positions_m.front();
  const double hi = topo.positions_m.back();
  for (std::size_t i = 0; i < n; ++i) {
    const auto ue = static_cast<UeId>(i);
    if (topo.in_platoon(ue)) continue;
    const double p = topo.positions_m[i];
    if (p - lo >= config.comm_range_m && hi - p >= config.comm_range_m)
      topo.measurable_broadcasters.push_back(ue);
  }
  if (n > ng && topo.measurable_broadcasters.empty())
    throw std::invalid_argument("line too short: no broadcaster lies comm_range_m (" +
                                std::to_string(config.comm_range_m) + " m) from both ends");
  return topo;
}

ArrivalSchedule generate_traffic(const ScenarioConfig& config, const Topology& topology,
                                 RandomStream& rng) {
  ArrivalSchedule sched;
  sched.times_s.resize(topology.size());
  const std::uint64_t base = rng.next();
  for (std::size_t i = 0; i < topology.size(); ++i) {
    const auto ue = static_cast<UeId>(i);
    const double rate = topology.in_platoon(ue) ? config.lambda_g : config.lambda_b;
    if (rate <= 0.0) continue;
    RandomStream ue_rng = RandomStream::derive(base, "ue-arrivals", i);
    auto& times = sched.times_s[i];
    double t = ue_rng.exponential(rate);
    while (t < config.sim_duration_s) {
      times.push_back(t);
      t += ue_rng.exponential(rate);
    }
  }
  return sched;
}

Scenario make_scenario(const ScenarioConfig& config) {
  config.validate();
  RandomStream topo_rng = RandomStream::derive(config.seed, "topology");
  RandomStream traffic_rng = RandomStream::derive(config.seed, "traffic");
  Scenario s;
  s.topology = generate_topology(config, topo_rng);
  s.schedule = generate_traffic(config, s.topology, traffic_rng);
  return s;
}

}  // namespace slsim
