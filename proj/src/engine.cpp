#include "slsim/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <memory>
#include <ostream>

namespace slsim {

std::size_t PacketOutcome::lost() const {
  return static_cast<std::size_t>(std::count_if(receptions.begin(), receptions.end(),
                                                [](const Reception& r) { return !r.delivered(); }));
}

double resource_occupancy(const RunResult& result) {
  if (result.nominal_slots <= 0 || result.n_subchannels <= 0) return 0.0;
  return static_cast<double>(result.occupied_units) /
         (static_cast<double>(result.nominal_slots) * result.n_subchannels);
}

namespace {

struct Packet {
  HarqProcess harq;
  UeId rx_lo = 0;  // intended receivers: [rx_lo, rx_hi] minus the source
  UeId rx_hi = 0;
  std::vector<std::int16_t> delivered;  // indexed by rx - rx_lo
  std::vector<double> combined_sinr;    // linear, only with harq_combining

  bool intended(UeId r) const { return r >= rx_lo && r <= rx_hi && r != harq.source; }
};

struct PlannedTx {
  std::uint32_t packet = 0;
  int attempt = 0;
};

struct PendingFeedback {
  std::uint32_t packet = 0;
  Slot attempt_slot = 0;
  std::vector<FeedbackReport> reports;
};

struct ActiveTx {
  UeId ue = 0;
  std::uint32_t packet = 0;
  int attempt = 0;
  SubchannelRange grant;
};

struct Arrival {
  Slot slot = 0;
  UeId ue = 0;
};

class Simulator {
 public:
  Simulator(const ScenarioConfig& config, const Topology& topology,
            const ArrivalSchedule& schedule, const RunOptions& options)
      : cfg_(config),
        topo_(topology),
        opts_(options),
        n_(topology.size()),
        model_(make_error_model(config.radio.error_model)),
        format_(SlotFormat::make(config.psfch_enabled)),
        grant_(subchannels_required(config.radio.packet_size_bytes, format_, config.radio)),
        latency_(config.latency_slots()),
        ack_(config.ack_slots()),
        ring_(static_cast<std::size_t>(latency_ + ack_ + 2)),
        mac_rng_(RandomStream::derive(config.seed, "mac")),
        phy_rng_(RandomStream::derive(config.seed, "phy")) {
    build_link_tables();
    build_arrivals(schedule);
    plan_.resize(ring_);
    feedback_.resize(ring_);
    sensing_.assign(n_, SensingState(latency_));
    busy_.resize(n_);
    transmitting_.assign(n_, 0);
    k_cap_blind_ = max_attempts(cfg_.latency_budget_ms, cfg_.radio.slot_duration_us,
                                cfg_.ack_delay_ms, false);
    k_cap_feedback_ = max_attempts(cfg_.latency_budget_ms, cfg_.radio.slot_duration_us,
                                   cfg_.ack_delay_ms, true);
  }

  RunResult run() {
    RunResult res;
    res.n_subchannels = cfg_.radio.n_subchannels;
    res.grant_size = grant_;
    res.nominal_slots =
        static_cast<Slot>(std::ceil(cfg_.sim_duration_s / cfg_.slot_s() - 1e-9));
    if (opts_.record_log) res.log.emplace();
    log_ = res.log ? &*res.log : nullptr;

    Slot last = res.nominal_slots;
    if (!arrivals_.empty()) last = std::max(last, arrivals_.back().slot + latency_ + ack_ + 1);

    std::size_t next_arrival = 0;
    for (Slot t = 0; t <= last; ++t) {
      deliver_feedback(t);
      while (next_arrival < arrivals_.size() && arrivals_[next_arrival].slot == t)
        admit(arrivals_[next_arrival++], t);
      transmit(t, res);
    }
    res.slots_run = last + 1;
    res.outcomes = finalize();
    return res;
  }

 private:
  void build_link_tables() {
    const RadioParams& rp = cfg_.radio;
    noise_sub_mw_ = db_to_linear(noise_power_dbm(rp, 1));
    gain_.assign(n_ * n_, 0.0);
    clean_pscch_.assign(n_ * n_, std::numeric_limits<double>::quiet_NaN());
    clean_pssch_.assign(n_ * n_, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j)
        if (i != j) {
          const double d = std::max(topo_.distance(static_cast<UeId>(i), static_cast<UeId>(j)), 1e-6);
          gain_[i * n_ + j] = db_to_linear(rp.tx_power_dbm - path_loss_db(d, rp));
        }

    const McsEntry& mcs = rp.pssch_mcs();
    const int tb_bits = 8 * rp.packet_size_bytes;
    reach_lo_.resize(n_);
    reach_hi_.resize(n_);
    bcast_lo_.resize(n_);
    bcast_hi_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      auto reachable = [&](std::size_t j) {
        const double snr = gain_[i * n_ + j] / grant_ / noise_sub_mw_;
        return 1.0 - model_->bler(linear_to_db(snr), Channel::Pscch, mcs, tb_bits) >=
               opts_.reach_cutoff;
      };
      std::size_t lo = i, hi = i;
      while (lo > 0 && reachable(lo - 1)) --lo;
      while (hi + 1 < n_ && reachable(hi + 1)) ++hi;
      reach_lo_[i] = static_cast<UeId>(lo);
      reach_hi_[i] = static_cast<UeId>(hi);

      const double x = topo_.positions_m[i];
      const auto& pos = topo_.positions_m;
      auto first = std::lower_bound(pos.begin(), pos.end(), x - cfg_.comm_range_m);
      auto past = std::upper_bound(pos.begin(), pos.end(), x + cfg_.comm_range_m);
      bcast_lo_[i] = static_cast<UeId>(first - pos.begin());
      bcast_hi_[i] = static_cast<UeId>((past - pos.begin()) - 1);
    }
  }

  void build_arrivals(const ArrivalSchedule& schedule) {
    const double slot_s = cfg_.slot_s();
    for (std::size_t u = 0; u < schedule.times_s.size(); ++u)
      for (double t : schedule.times_s[u])
        arrivals_.push_back({static_cast<Slot>(std::floor(t / slot_s)), static_cast<UeId>(u)});
    std::stable_sort(arrivals_.begin(), arrivals_.end(), [](const Arrival& a, const Arrival& b) {
      return a.slot != b.slot ? a.slot < b.slot : a.ue < b.ue;
    });
  }

  std::size_t ring_index(Slot t) const { return static_cast<std::size_t>(t) % ring_; }

  void admit(const Arrival& a, Slot t) {
    Packet p;
    HarqProcess& h = p.harq;
    h.packet_id = packets_.size();
    h.source = a.ue;
    h.traffic = topo_.in_platoon(a.ue) ? TrafficClass::Groupcast : TrafficClass::Broadcast;
    h.generation = t;
    h.deadline = t + latency_;
    h.grant_size = grant_;
    h.feedback = cfg_.psfch_enabled && h.traffic == TrafficClass::Groupcast;
    if (h.traffic == TrafficClass::Groupcast) {
      h.max_attempts = std::min(cfg_.k_g, h.feedback ? k_cap_feedback_ : k_cap_blind_);
      p.rx_lo = topo_.platoon_members.front();
      p.rx_hi = topo_.platoon_members.back();
      if (h.feedback)
        for (UeId m : topo_.platoon_members)
          if (m != a.ue) h.acks_pending.push_back(m);
    } else {
      h.max_attempts = std::min(cfg_.k_b, k_cap_blind_);
      p.rx_lo = bcast_lo_[a.ue];
      p.rx_hi = bcast_hi_[a.ue];
    }
    p.delivered.assign(static_cast<std::size_t>(p.rx_hi - p.rx_lo + 1), 0);
    if (cfg_.harq_combining) p.combined_sinr.assign(p.delivered.size(), 0.0);

    auto& busy = busy_[a.ue];
    std::erase_if(busy, [t](Slot s) { return s <= t; });
    sensing_[a.ue].prune(t);
    const SelectionParams sel{cfg_.radio.n_subchannels, h.feedback ? ack_ + 1 : Slot{1}};
    h.planned = select_resources(h, sensing_[a.ue], t, busy, sel, mac_rng_);
    if (h.planned.empty()) h.state = HarqState::Expired;

    const auto id = static_cast<std::uint32_t>(packets_.size());
    for (std::size_t i = 0; i < h.planned.size(); ++i) {
      plan_[ring_index(h.planned[i].slot)].push_back({id, static_cast<int>(i)});
      busy.push_back(h.planned[i].slot);
    }
    if (opts_.trace) {
      *opts_.trace << t << " GEN ue=" << a.ue << " pkt=" << h.packet_id
                   << (h.traffic == TrafficClass::Groupcast ? " groupcast" : " broadcast")
                   << " deadline=" << h.deadline << " plan=";
      for (std::size_t i = 0; i < h.planned.size(); ++i)
        *opts_.trace << (i ? "," : "") << h.planned[i].slot << "@" << h.planned[i].subchannels.first
                     << ":" << h.planned[i].subchannels.count;
      *opts_.trace << '\n';
    }
    packets_.push_back(std::move(p));
  }

  void deliver_feedback(Slot t) {
    auto& due = feedback_[ring_index(t)];
    for (const auto& fb : due) {
      Packet& p = packets_[fb.packet];
      HarqProcess& h = p.harq;
      on_feedback(h, fb.reports, t);
      if (h.state == HarqState::Cancelled) std::erase_if(busy_[h.source], [t](Slot s) { return s > t; });
      if (log_) {
        const int acks = static_cast<int>(std::count_if(fb.reports.begin(), fb.reports.end(),
                                                        [](const FeedbackReport& r) { return r.ack; }));
        log_->feedback.push_back({t, h.packet_id, fb.attempt_slot, acks, h.state});
      }
      if (opts_.trace) {
        int acks = 0;
        for (const auto& r : fb.reports) acks += r.ack;
        *opts_.trace << t << " FB pkt=" << h.packet_id << " attempt_slot=" << fb.attempt_slot
                     << " acks=" << acks << " pending=" << h.acks_pending.size()
                     << " state=" << to_string(h.state) << '\n';
      }
    }
    due.clear();
  }

  void transmit(Slot t, RunResult& res) {
    auto& planned = plan_[ring_index(t)];
    txs_.clear();
    for (const PlannedTx& pt : planned) {
      Packet& p = packets_[pt.packet];
      HarqProcess& h = p.harq;
      if (h.state != HarqState::Active) continue;
      if (pt.attempt >= static_cast<int>(h.planned.size())) continue;
      const PlannedResource& r = h.planned[static_cast<std::size_t>(pt.attempt)];
      if (r.slot != t) continue;
      txs_.push_back({h.source, pt.packet, pt.attempt, r.subchannels});
    }
    planned.clear();
    if (txs_.empty()) return;

    std::uint32_t used = 0;
    for (const auto& tx : txs_) {
      transmitting_[tx.ue] = 1;
      used |= tx.grant.mask();
      ++packets_[tx.packet].harq.attempts_done;
    }
    res.occupied_units += std::popcount(used);
    res.transmissions += static_cast<std::int64_t>(txs_.size());

    for (std::size_t i = 0; i < txs_.size(); ++i) resolve(t, i);

    for (const auto& tx : txs_) {
      transmitting_[tx.ue] = 0;
      Packet& p = packets_[tx.packet];
      HarqProcess& h = p.harq;
      if (!h.feedback && h.attempts_done >= static_cast<int>(h.planned.size()))
        h.state = HarqState::Completed;
    }
  }

  /// Resolves reception of transmission `idx` at every reachable UE.
  void resolve(Slot t, std::size_t idx) {
    const ActiveTx& tx = txs_[idx];
    Packet& p = packets_[tx.packet];
    HarqProcess& h = p.harq;
    const McsEntry& mcs = cfg_.radio.pssch_mcs();
    const int tb_bits = 8 * cfg_.radio.packet_size_bytes;

    const auto announced = announce_reservations(h, tx.attempt);
    const bool collect_feedback = h.feedback;
    PendingFeedback fb;
    if (collect_feedback) {
      fb.packet = tx.packet;
      fb.attempt_slot = t;
    }

    TxRecord* rec = nullptr;
    if (log_) {
      log_->transmissions.push_back({t, tx.ue, h.packet_id, tx.attempt, tx.grant, announced, {}});
      rec = &log_->transmissions.back();
    }
    std::ostream* trace = opts_.trace;
    if (trace)
      *trace << t << " TX ue=" << tx.ue << " pkt=" << h.packet_id << " att=" << tx.attempt + 1
             << "/" << h.planned.size() << " sc=" << tx.grant.first << ":" << tx.grant.count
             << " rx=";
    bool first_rx = true;

    const std::size_t row = static_cast<std::size_t>(tx.ue) * n_;
    const UeId lo = std::min(reach_lo_[tx.ue], p.rx_lo);
    const UeId hi = std::max(reach_hi_[tx.ue], p.rx_hi);
    const double noise_pscch = noise_sub_mw_;
    const double noise_pssch = noise_sub_mw_ * tx.grant.count;
    const bool alone = txs_.size() == 1;

    for (UeId r = lo; r <= hi; ++r) {
      if (r == tx.ue) continue;
      const bool intended = p.intended(r);
      TxRecord::Rx rx_rec{r};
      char code = 'X';
      const bool deaf = cfg_.half_duplex && transmitting_[r];
      if (deaf) {
        rx_rec.half_duplex = true;
        code = 'H';
      } else {
        // PSCCH lives in the first subchannel of the grant.
        double sig = gain_[row + r] / tx.grant.count;
        double interf = 0.0;
        if (!alone) {
          for (std::size_t k = 0; k < txs_.size(); ++k) {
            if (k == idx || txs_[k].ue == r) continue;
            if (txs_[k].grant.contains(tx.grant.first))
              interf += gain_[static_cast<std::size_t>(txs_[k].ue) * n_ + r] / txs_[k].grant.count;
          }
        }
        double bler_c;
        if (interf == 0.0) {
          double& cached = clean_pscch_[row + r];
          if (std::isnan(cached)) cached = model_->bler(linear_to_db(sig / noise_pscch), Channel::Pscch, mcs, tb_bits);
          bler_c = cached;
        } else {
          bler_c = model_->bler(linear_to_db(sig / (noise_pscch + interf)), Channel::Pscch, mcs, tb_bits);
        }
        const bool pscch_ok = draw(bler_c);
        rx_rec.pscch_ok = pscch_ok;
        if (pscch_ok) {
          code = 'C';
          for (const auto& res : announced) sensing_[r].insert(res, t);
          if (intended) {
            const std::size_t slot_idx = r - p.rx_lo;
            bool ok = p.delivered[slot_idx] > 0;
            if (!ok) {
              double interf_d = 0.0;
              if (!alone) {
                for (std::size_t k = 0; k < txs_.size(); ++k) {
                  if (k == idx || txs_[k].ue == r) continue;
                  const int ov = txs_[k].grant.overlap(tx.grant);
                  if (ov)
                    interf_d += gain_[static_cast<std::size_t>(txs_[k].ue) * n_ + r] * ov /
                                txs_[k].grant.count;
                }
              }
              double sinr = gain_[row + r] / (noise_pssch + interf_d);
              double bler_d;
              if (cfg_.harq_combining) {
                p.combined_sinr[slot_idx] += sinr;
                sinr = p.combined_sinr[slot_idx];
                bler_d = model_->bler(linear_to_db(sinr), Channel::Pssch, mcs, tb_bits);
              } else if (interf_d == 0.0 && tx.grant.count == grant_) {
                double& cached = clean_pssch_[row + r];
                if (std::isnan(cached)) cached = model_->bler(linear_to_db(sinr), Channel::Pssch, mcs, tb_bits);
                bler_d = cached;
              } else {
                bler_d = model_->bler(linear_to_db(sinr), Channel::Pssch, mcs, tb_bits);
              }
              if (draw(bler_d)) {
                p.delivered[slot_idx] = static_cast<std::int16_t>(tx.attempt + 1);
                ok = true;
                rx_rec.pssch_ok = true;
                code = 'D';
              }
            } else {
              rx_rec.pssch_ok = true;
              code = 'D';
            }
            if (collect_feedback && psfch_reaches(r, tx.ue)) fb.reports.push_back({r, ok});
          }
        }
      }
      if (intended) {
        if (rec) rec->receivers.push_back(rx_rec);
        if (trace) {
          *trace << (first_rx ? "" : ",") << r << ":" << code;
          first_rx = false;
        }
      }
    }
    if (trace) *trace << '\n';
    if (collect_feedback) feedback_[ring_index(t + ack_)].push_back(std::move(fb));
  }

  bool psfch_reaches(UeId from, UeId to) {
    if (cfg_.psfch_ideal) return true;
    const double snr = gain_[static_cast<std::size_t>(from) * n_ + to] / noise_sub_mw_;
    return draw(model_->bler(linear_to_db(snr), Channel::Pscch, cfg_.radio.pssch_mcs(),
                             8 * cfg_.radio.packet_size_bytes));
  }

  /// Success draw for a block error probability.
  bool draw(double bler) {
    if (bler <= 0.0) return true;
    if (bler >= 1.0) return false;
    return phy_rng_.uniform() >= bler;
  }

  std::vector<PacketOutcome> finalize() {
    std::vector<PacketOutcome> out;
    out.reserve(packets_.size());
    for (const Packet& p : packets_) {
      const HarqProcess& h = p.harq;
      PacketOutcome o;
      o.packet_id = h.packet_id;
      o.source = h.source;
      o.traffic = h.traffic;
      o.generation = h.generation;
      o.attempts_made = h.attempts_done;
      o.final_state = h.state == HarqState::Active ? HarqState::Expired : h.state;
      for (UeId r = p.rx_lo; r <= p.rx_hi; ++r) {
        if (r == h.source) continue;
        o.receptions.push_back({r, topo_.distance(h.source, r), p.delivered[r - p.rx_lo]});
      }
      out.push_back(std::move(o));
    }
    return out;
  }

  const ScenarioConfig& cfg_;
  const Topology& topo_;
  const RunOptions& opts_;
  std::size_t n_;
  std::unique_ptr<ErrorModel> model_;
  SlotFormat format_;
  int grant_;
  Slot latency_;
  Slot ack_;
  std::size_t ring_;
  int k_cap_blind_ = 1;
  int k_cap_feedback_ = 1;
  RandomStream mac_rng_;
  RandomStream phy_rng_;

  double noise_sub_mw_ = 0.0;
  std::vector<double> gain_;  // received power in mW, [tx * n + rx]
  // Interference-free BLERs, filled on first use (NaN until then).
  std::vector<double> clean_pscch_, clean_pssch_;
  std::vector<UeId> reach_lo_, reach_hi_;
  std::vector<UeId> bcast_lo_, bcast_hi_;

  std::vector<Arrival> arrivals_;
  std::vector<Packet> packets_;
  std::vector<std::vector<PlannedTx>> plan_;
  std::vector<std::vector<PendingFeedback>> feedback_;
  std::vector<SensingState> sensing_;
  std::vector<std::vector<Slot>> busy_;
  std::vector<char> transmitting_;
  std::vector<ActiveTx> txs_;
  RunLog* log_ = nullptr;
};

}  // namespace

RunResult run(const ScenarioConfig& config, const Topology& topology,
              const ArrivalSchedule& schedule, const RunOptions& options) {
  config.validate();
  Simulator sim(config, topology, schedule, options);
  return sim.run();
}

RunResult run(const ScenarioConfig& config, const RunOptions& options) {
  const Scenario s = make_scenario(config);
  return run(config, s.topology, s.schedule, options);
}

}  // namespace slsim
