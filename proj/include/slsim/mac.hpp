#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "slsim/phy.hpp"
#include "slsim/random.hpp"
#include "slsim/scenario.hpp"
#include "slsim/units.hpp"

namespace slsim {

/// Symbol budget of one 14-symbol sidelink slot.
///
/// Without PSFCH: AGC, 12 PSSCH symbols (PSCCH and DMRS sit inside them),
/// guard. With PSFCH the tail also carries a second AGC, the PSFCH symbol
/// and a second guard, leaving 9 PSSCH symbols.
struct SlotFormat {
  bool psfch_enabled = false;
  int total_symbols = 14;
  int pssch_symbols = 12;
  int pscch_symbols = 2;
  int dmrs_symbols = 1;
  int agc_symbols = 1;
  int guard_symbols = 1;
  int psfch_symbols = 0;

  static SlotFormat make(bool psfch_enabled);

  int symbol_sum() const {
    return pssch_symbols + agc_symbols + guard_symbols + psfch_symbols;
  }
};

/// Transport block capacity in bits of a grant of `n_subchannels`.
/// PSCCH overhead is charged once, inside the first subchannel.
double grant_capacity_bits(int n_subchannels, const SlotFormat& format, const RadioParams& params);

/// Smallest grant that carries `packet_bytes`. Throws std::invalid_argument
/// when even the whole band is too small.
int subchannels_required(int packet_bytes, const SlotFormat& format, const RadioParams& params);

/// Largest number of attempts that fits the latency budget.
///   blind:    floor(budget / slot) - 1
///   feedback: 1 + floor((budget - slot) / (ack_delay + slot))
/// Never below 1.
int max_attempts(double latency_budget_ms, double slot_us, double ack_delay_ms, bool psfch_enabled);

struct Reservation {
  UeId owner = 0;
  Slot slot = 0;
  SubchannelRange subchannels;
  Slot announced_at = 0;
};

struct PlannedResource {
  Slot slot = 0;
  SubchannelRange subchannels;
};

enum class HarqState { Active, Completed, Expired, Cancelled };

const char* to_string(HarqState s);

struct HarqProcess {
  std::uint64_t packet_id = 0;
  UeId source = 0;
  TrafficClass traffic = TrafficClass::Broadcast;
  Slot generation = 0;
  Slot deadline = 0;
  int max_attempts = 1;
  int attempts_done = 0;
  int grant_size = 1;
  /// PSFCH-controlled: stop on full ACK, attempts spaced for feedback.
  bool feedback = false;
  std::vector<PlannedResource> planned;
  std::vector<UeId> acks_pending;  ///< ascending
  HarqState state = HarqState::Active;
};

/// Reservations a UE has learned from decoded PSCCH.
class SensingState {
 public:
  explicit SensingState(Slot horizon = 20) : horizon_(horizon) {}

  /// Drops reservations that are not in (now, now + horizon].
  void insert(const Reservation& r, Slot now);
  void prune(Slot now);
  /// Bitmask of reserved subchannels in `slot`.
  std::uint32_t reserved_mask(Slot slot) const;
  /// Fills masks[i] for slot now + 1 + i.
  void reserved_masks(Slot now, std::span<std::uint32_t> masks) const;

  std::span<const Reservation> entries() const { return entries_; }
  Slot horizon() const { return horizon_; }

 private:
  Slot horizon_;
  std::size_t prune_at_ = 64;
  std::vector<Reservation> entries_;
};

struct SelectionParams {
  int n_subchannels = 10;
  /// Minimum slot distance between consecutive attempts; 1 for blind.
  Slot min_gap = 1;
};

/// Slot spacing for feedback-controlled attempts: ack delay plus one slot.
Slot feedback_gap(const ScenarioConfig& config);

/// Picks resources for all remaining attempts of `harq` inside
/// (now, deadline]. The attempt set is uniform over tuples of
/// (slot, start subchannel) candidates that avoid every known reservation
/// and keep consecutive attempts `min_gap` apart. When no such tuple exists,
/// it is uniform over all spacing-feasible tuples, colliding where it must.
/// Slots listed in `busy_slots` (the sender's own transmissions) are never
/// used. Returns fewer resources than requested only when the window cannot
/// hold them; an empty result means the process cannot transmit at all.
std::vector<PlannedResource> select_resources(const HarqProcess& harq, const SensingState& sensing,
                                              Slot now, std::span<const Slot> busy_slots,
                                              const SelectionParams& params, RandomStream& rng);

struct FeedbackReport {
  UeId ue = 0;
  bool ack = false;
};

/// Applies PSFCH reports for the attempt whose feedback is due at `at`.
/// Members without a report count as NACK. Returns false (and changes
/// nothing) for a process that is not active or not feedback-controlled.
bool on_feedback(HarqProcess& harq, std::span<const FeedbackReport> reports, Slot at);

/// Reservations the PSCCH of attempt `attempt_index` carries: every later
/// planned resource.
std::vector<Reservation> announce_reservations(const HarqProcess& harq, int attempt_index);

}  // namespace slsim
