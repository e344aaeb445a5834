#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "slsim/mac.hpp"
#include "slsim/phy.hpp"
#include "slsim/random.hpp"
#include "slsim/scenario.hpp"

namespace slsim {

struct Reception {
  UeId rx = 0;
  double distance_m = 0.0;
  /// 1-based attempt that delivered the packet, 0 if lost.
  int delivered_attempt = 0;

  bool delivered() const { return delivered_attempt > 0; }
};

struct PacketOutcome {
  std::uint64_t packet_id = 0;
  UeId source = 0;
  TrafficClass traffic = TrafficClass::Broadcast;
  Slot generation = 0;
  int attempts_made = 0;
  HarqState final_state = HarqState::Completed;
  /// One entry per intended receiver: platoon members minus the source for
  /// groupcast, every UE within comm range for broadcast.
  std::vector<Reception> receptions;

  std::size_t lost() const;
};

/// Per-transmission record kept when RunOptions::record_log is set.
struct TxRecord {
  struct Rx {
    UeId rx = 0;
    bool half_duplex = false;  ///< receiver was transmitting
    bool pscch_ok = false;
    bool pssch_ok = false;
  };
  Slot slot = 0;
  UeId tx = 0;
  std::uint64_t packet_id = 0;
  int attempt = 0;  ///< 0-based
  SubchannelRange subchannels;
  std::vector<Reservation> announced;
  std::vector<Rx> receivers;  ///< intended receivers only
};

struct FeedbackRecord {
  Slot slot = 0;
  std::uint64_t packet_id = 0;
  Slot attempt_slot = 0;
  int acks = 0;
  HarqState state_after = HarqState::Active;
};

struct RunLog {
  std::vector<TxRecord> transmissions;
  std::vector<FeedbackRecord> feedback;
};

struct RunResult {
  std::vector<PacketOutcome> outcomes;
  /// Nominal slots covered by the arrival window.
  Slot nominal_slots = 0;
  /// Slots actually stepped, including the drain after the last arrival.
  Slot slots_run = 0;
  int n_subchannels = 0;
  int grant_size = 0;
  /// (slot, subchannel) units carrying any PSSCH.
  std::int64_t occupied_units = 0;
  std::int64_t transmissions = 0;
  std::optional<RunLog> log;
};

struct RunOptions {
  bool record_log = false;
  /// Line-oriented per-slot trace, one line per transmission and per
  /// feedback delivery.
  std::ostream* trace = nullptr;
  /// Receivers whose interference-free PSCCH success probability is below
  /// this are skipped (treated as not decoding).
  double reach_cutoff = 1e-9;
};

/// Steps the network slot by slot. For every slot: deliver due PSFCH
/// feedback, admit new packets and select their resources, then resolve
/// all transmissions (PSCCH, reservations, PSSCH, feedback enqueue).
RunResult run(const ScenarioConfig& config, const Topology& topology,
              const ArrivalSchedule& schedule, const RunOptions& options = {});

/// Builds the scenario from the config's seed and runs it.
RunResult run(const ScenarioConfig& config, const RunOptions& options = {});

/// Fraction of (slot x subchannel) units over the nominal duration that
/// carried PSSCH.
double resource_occupancy(const RunResult& result);

}  // namespace slsim
