#pragma once

#include <cstdint>
#include <vector>

#include "slsim/phy.hpp"
#include "slsim/random.hpp"
#include "slsim/units.hpp"

namespace slsim {

/// Full parameterization of one simulated highway.
struct ScenarioConfig {
  int n_ues = 200;
  int platoon_size = 5;
  double mean_spacing_m = 10.0;
  double lambda_b = 1.8;  ///< packets/s per non-platoon UE
  double lambda_g = 1.0;  ///< packets/s per platoon UE
  double comm_range_m = 200.0;
  double latency_budget_ms = 10.0;
  double plr_qos = 1e-2;
  int k_g = 3;
  int k_b = 2;
  bool psfch_enabled = false;
  double ack_delay_ms = 2.0;
  double sim_duration_s = 20.0;
  std::uint64_t seed = 1;
  RadioParams radio;

  /// A transmitting UE cannot decode anything in the same slot.
  bool half_duplex = true;
  /// PSFCH reports always reach the sender; otherwise they go through the
  /// path-loss and PSCCH error chain.
  bool psfch_ideal = true;
  /// Chase-combine PSSCH SINR across attempts of the same packet.
  bool harq_combining = false;

  double slot_s() const { return radio.slot_duration_us * 1e-6; }
  /// Packet deadline offset from its generation slot.
  Slot latency_slots() const;
  /// Slots a sender waits for PSFCH after an attempt.
  Slot ack_slots() const;

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
};

enum class TrafficClass { Broadcast, Groupcast };

struct Topology {
  std::vector<double> positions_m;
  std::vector<UeId> platoon_members;  ///< ascending, contiguous
  std::vector<UeId> measurable_broadcasters;  ///< ascending

  std::size_t size() const { return positions_m.size(); }
  double distance(UeId a, UeId b) const {
    const double d = positions_m[a] - positions_m[b];
    return d < 0 ? -d : d;
  }
  bool in_platoon(UeId ue) const {
    return !platoon_members.empty() && ue >= platoon_members.front() &&
           ue <= platoon_members.back();
  }
  bool measurable(UeId ue) const;
};

struct ArrivalSchedule {
  /// Per-UE ascending generation times in seconds.
  std::vector<std::vector<double>> times_s;

  std::size_t total() const;
};

/// Exponential gaps, platoon centred on the median index. Throws
/// std::invalid_argument when broadcasters exist but none lies at least R
/// from both ends of the line.
Topology generate_topology(const ScenarioConfig& config, RandomStream& rng);

/// Seeds one sub-stream per UE from `rng`, so changing one class's rate
/// leaves the other class's arrivals untouched.
ArrivalSchedule generate_traffic(const ScenarioConfig& config, const Topology& topology,
                                 RandomStream& rng);

/// Convenience: both of the above from the config's master seed.
struct Scenario {
  Topology topology;
  ArrivalSchedule schedule;
};
Scenario make_scenario(const ScenarioConfig& config);

}  // namespace slsim
