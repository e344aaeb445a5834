#include "slsim/mac.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace slsim {

SlotFormat SlotFormat::make(bool psfch_enabled) {
  SlotFormat f;
  f.psfch_enabled = psfch_enabled;
  if (psfch_enabled) {
    f.pssch_symbols = 9;
    f.agc_symbols = 2;
    f.guard_symbols = 2;
    f.psfch_symbols = 1;
  }
  return f;
}

double grant_capacity_bits(int n_subchannels, const SlotFormat& format, const RadioParams& params) {
  const double sc_per_subchannel = params.prbs_per_subchannel * 12.0;
  const double data_re = n_subchannels * sc_per_subchannel * format.pssch_symbols -
                         format.dmrs_symbols * n_subchannels * sc_per_subchannel -
                         format.pscch_symbols * sc_per_subchannel;
  const McsEntry& mcs = params.pssch_mcs();
  return std::max(0.0, data_re) * mcs.bits_per_symbol * mcs.code_rate;
}

int subchannels_required(int packet_bytes, const SlotFormat& format, const RadioParams& params) {
  if (packet_bytes <= 0) throw std::invalid_argument("packet size must be positive");
  const double bits = 8.0 * packet_bytes;
  for (int c = 1; c <= params.n_subchannels; ++c)
    if (grant_capacity_bits(c, format, params) >= bits) return c;
  throw std::invalid_argument("packet of " + std::to_string(packet_bytes) +
                              " bytes does not fit in " + std::to_string(params.n_subchannels) +
                              " subchannels");
}

int max_attempts(double latency_budget_ms, double slot_us, double ack_delay_ms, bool psfch_enabled) {
  const double budget_us = latency_budget_ms * 1e3;
  int k = 0;
  if (!psfch_enabled) {
    k = static_cast<int>(std::floor(budget_us / slot_us + 1e-9)) - 1;
  } else {
    k = 1 + static_cast<int>(std::floor((budget_us - slot_us) / (ack_delay_ms * 1e3 + slot_us) + 1e-9));
  }
  return std::max(k, 1);
}

const char* to_string(HarqState s) {
  switch (s) {
    case HarqState::Active: return "active";
    case HarqState::Completed: return "completed";
    case HarqState::Expired: return "expired";
    case HarqState::Cancelled: return "cancelled";
  }
  return "?";
}

void SensingState::insert(const Reservation& r, Slot now) {
  if (r.slot <= now || r.slot > now + horizon_) return;
  if (entries_.size() >= prune_at_) {
    prune(now);
    prune_at_ = std::max<std::size_t>(64, 2 * entries_.size());
  }
  entries_.push_back(r);
}

void SensingState::prune(Slot now) {
  std::erase_if(entries_, [now](const Reservation& r) { return r.slot <= now; });
}

std::uint32_t SensingState::reserved_mask(Slot slot) const {
  std::uint32_t m = 0;
  for (const auto& r : entries_)
    if (r.slot == slot) m |= r.subchannels.mask();
  return m;
}

void SensingState::reserved_masks(Slot now, std::span<std::uint32_t> masks) const {
  std::fill(masks.begin(), masks.end(), 0u);
  const auto n = static_cast<Slot>(masks.size());
  for (const auto& r : entries_) {
    const Slot i = r.slot - now - 1;
    if (i >= 0 && i < n) masks[static_cast<std::size_t>(i)] |= r.subchannels.mask();
  }
}

Slot feedback_gap(const ScenarioConfig& config) { return config.ack_slots() + 1; }

namespace {

/// Draws `n` slot indices from [0, w.size()) with pairwise distance >= gap,
/// each tuple chosen with probability proportional to the product of its
/// slot weights. Returns false when no tuple has positive weight.
bool draw_weighted_slots(std::span<const double> w, int n, Slot gap, RandomStream& rng,
                         std::vector<std::size_t>& out) {
  const std::size_t len = w.size();
  const auto g = static_cast<std::size_t>(gap);
  // ways[i * (n + 1) + k]: total weight of picking k slots from [i, len).
  thread_local std::vector<double> ways;
  const std::size_t stride = static_cast<std::size_t>(n) + 1;
  ways.assign((len + g + 1) * stride, 0.0);
  auto at = [&](std::size_t i, int k) -> double& { return ways[i * stride + static_cast<std::size_t>(k)]; };
  for (std::size_t i = 0; i < len + g + 1; ++i) at(i, 0) = 1.0;
  for (std::size_t i = len; i-- > 0;)
    for (int k = 1; k <= n; ++k) at(i, k) = at(i + 1, k) + w[i] * at(i + g, k - 1);
  if (!(at(0, n) > 0.0)) return false;

  out.clear();
  std::size_t i = 0;
  for (int k = n; k > 0; ++i) {
    const double take = w[i] * at(i + g, k - 1);
    if (take > 0.0 && rng.uniform() * at(i, k) < take) {
      out.push_back(i);
      --k;
      i += g - 1;
    }
  }
  return true;
}

}  // namespace

std::vector<PlannedResource> select_resources(const HarqProcess& harq, const SensingState& sensing,
                                              Slot now, std::span<const Slot> busy_slots,
                                              const SelectionParams& params, RandomStream& rng) {
  std::vector<PlannedResource> out;
  const Slot window = harq.deadline - now;
  const int c = harq.grant_size;
  if (window < 1 || c > params.n_subchannels) return out;
  const Slot gap = std::max<Slot>(params.min_gap, 1);
  const Slot fit = (window - 1) / gap + 1;
  int wanted = static_cast<int>(std::min<Slot>(harq.max_attempts - harq.attempts_done, fit));
  if (wanted <= 0) return out;

  const auto len = static_cast<std::size_t>(window);
  thread_local std::vector<std::uint32_t> masks;
  masks.assign(len, 0u);
  sensing.reserved_masks(now, masks);

  const int starts = params.n_subchannels - c + 1;
  const std::uint32_t base_mask = SubchannelRange{0, c}.mask();
  thread_local std::vector<double> free_w, all_w;
  free_w.assign(len, 0.0);
  all_w.assign(len, 0.0);
  for (std::size_t i = 0; i < len; ++i) {
    const Slot s = now + 1 + static_cast<Slot>(i);
    if (std::find(busy_slots.begin(), busy_slots.end(), s) != busy_slots.end()) continue;
    int n_free = 0;
    for (int st = 0; st < starts; ++st)
      if ((masks[i] & (base_mask << st)) == 0) ++n_free;
    free_w[i] = n_free;
    all_w[i] = starts;
  }

  thread_local std::vector<std::size_t> picks;
  for (; wanted > 0; --wanted) {
    if (draw_weighted_slots(free_w, wanted, gap, rng, picks) ||
        draw_weighted_slots(all_w, wanted, gap, rng, picks))
      break;
  }
  if (wanted == 0) return out;

  for (std::size_t i : picks) {
    const Slot s = now + 1 + static_cast<Slot>(i);
    int st = 0;
    if (free_w[i] > 0) {
      auto k = static_cast<int>(rng.index(static_cast<std::uint64_t>(free_w[i])));
      for (st = 0; st < starts; ++st)
        if ((masks[i] & (base_mask << st)) == 0 && k-- == 0) break;
    } else {
      st = static_cast<int>(rng.index(static_cast<std::uint64_t>(starts)));
    }
    out.push_back({s, SubchannelRange{st, c}});
  }
  return out;
}

bool on_feedback(HarqProcess& harq, std::span<const FeedbackReport> reports, Slot at) {
  if (!harq.feedback || harq.state != HarqState::Active) return false;
  for (const auto& r : reports) {
    if (!r.ack) continue;
    auto it = std::lower_bound(harq.acks_pending.begin(), harq.acks_pending.end(), r.ue);
    if (it != harq.acks_pending.end() && *it == r.ue) harq.acks_pending.erase(it);
  }
  if (harq.acks_pending.empty()) {
    harq.state = HarqState::Cancelled;
    std::erase_if(harq.planned, [at](const PlannedResource& p) { return p.slot > at; });
    return true;
  }
  const bool attempts_left = harq.attempts_done < static_cast<int>(harq.planned.size()) &&
                             harq.attempts_done < harq.max_attempts;
  if (!attempts_left || at >= harq.deadline) harq.state = HarqState::Expired;
  return true;
}

std::vector<Reservation> announce_reservations(const HarqProcess& harq, int attempt_index) {
  std::vector<Reservation> out;
  if (attempt_index < 0 || attempt_index >= static_cast<int>(harq.planned.size())) return out;
  const Slot now = harq.planned[static_cast<std::size_t>(attempt_index)].slot;
  for (std::size_t i = static_cast<std::size_t>(attempt_index) + 1; i < harq.planned.size(); ++i)
    out.push_back({harq.source, harq.planned[i].slot, harq.planned[i].subchannels, now});
  return out;
}

}  // namespace slsim
