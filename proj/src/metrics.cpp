#include "slsim/metrics.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "slsim/mac.hpp"

namespace slsim {

void wilson_interval(double p, std::int64_t n, double& lo, double& hi, double z) {
  if (n <= 0) {
    lo = 0.0;
    hi = 1.0;
    return;
  }
  const double nn = static_cast<double>(n);
  const double z2 = z * z;
  const double denom = 1.0 + z2 / nn;
  const double centre = (p + z2 / (2.0 * nn)) / denom;
  const double half = z * std::sqrt(std::max(0.0, p * (1.0 - p) / nn + z2 / (4.0 * nn * nn))) / denom;
  lo = std::max(0.0, centre - half);
  hi = std::min(1.0, centre + half);
  // Guard against rounding pushing the interval past the point estimate.
  lo = std::min(lo, p);
  hi = std::max(hi, p);
}

PlrEstimate PlrTally::estimate() const {
  PlrEstimate e;
  e.units = units;
  e.samples = trials;
  if (units == 0) return e;
  e.point = ratio_sum / static_cast<double>(units);
  wilson_interval(e.point, trials, e.lo, e.hi);
  return e;
}

PlrTally tally_broadcast(std::span<const PacketOutcome> outcomes, const Topology& topology,
                         Slot warmup) {
  // per source: (sum of per-packet ratios, packets counted)
  std::map<UeId, std::pair<double, std::int64_t>> per_ue;
  PlrTally tally;
  for (const auto& o : outcomes) {
    if (o.traffic != TrafficClass::Broadcast || o.generation < warmup) continue;
    if (!topology.measurable(o.source) || o.receptions.empty()) continue;
    auto& acc = per_ue[o.source];
    acc.first += static_cast<double>(o.lost()) / static_cast<double>(o.receptions.size());
    acc.second += 1;
    tally.trials += 1;
  }
  for (const auto& [ue, acc] : per_ue) {
    tally.ratio_sum += acc.first / static_cast<double>(acc.second);
    tally.units += 1;
  }
  return tally;
}

PlrTally tally_groupcast(std::span<const PacketOutcome> outcomes, const Topology& topology,
                         Slot warmup) {
  std::map<UeId, std::pair<std::int64_t, std::int64_t>> per_ue;  // (failed, packets)
  PlrTally tally;
  for (const auto& o : outcomes) {
    if (o.traffic != TrafficClass::Groupcast || o.generation < warmup) continue;
    if (!topology.in_platoon(o.source)) continue;
    auto& acc = per_ue[o.source];
    acc.first += o.lost() > 0 ? 1 : 0;
    acc.second += 1;
    tally.trials += 1;
  }
  for (const auto& [ue, acc] : per_ue) {
    tally.ratio_sum += static_cast<double>(acc.first) / static_cast<double>(acc.second);
    tally.units += 1;
  }
  return tally;
}

PlrEstimate plr_broadcast(std::span<const PacketOutcome> outcomes, const Topology& topology) {
  return tally_broadcast(outcomes, topology).estimate();
}

PlrEstimate plr_groupcast(std::span<const PacketOutcome> outcomes, const Topology& topology) {
  return tally_groupcast(outcomes, topology).estimate();
}

double bisect_threshold(const std::function<bool(double)>& pred, double lambda_max,
                        double resolution, std::vector<double>* probed) {
  if (resolution <= 0 || lambda_max < 0) throw std::invalid_argument("bad bisection grid");
  auto at = [&](std::int64_t i) {
    const double x = static_cast<double>(i) * resolution;
    if (probed) probed->push_back(x);
    return pred(x);
  };
  std::int64_t lo = 0;
  std::int64_t hi = static_cast<std::int64_t>(std::floor(lambda_max / resolution + 1e-9));
  if (hi == 0) return 0.0;
  if (at(hi)) return static_cast<double>(hi) * resolution;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if (at(mid))
      lo = mid;
    else
      hi = mid;
  }
  return static_cast<double>(lo) * resolution;
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
  const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

ProbeResult evaluate_probe(const ScenarioConfig& base, int k_g, double lambda_g,
                           const SearchOptions& options, double packet_factor,
                           std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) seeds = options.seeds;
  if (seeds.empty()) throw std::invalid_argument("probe needs at least one seed");
  const auto n_seeds = static_cast<double>(seeds.size());

  double duration = options.min_probe_duration_s;
  if (lambda_g > 0) {
    const double needed = packet_factor * static_cast<double>(options.min_groupcast_packets) /
                          (n_seeds * base.platoon_size * lambda_g);
    duration = std::max(duration, std::ceil(needed));
  }
  duration = std::min(duration, std::max(options.max_probe_duration_s, options.min_probe_duration_s));
  if (options.fixed_duration_s > 0) duration = options.fixed_duration_s;

  struct SeedResult {
    PlrTally b, g;
    double occupancy = 0.0;
  };
  std::vector<SeedResult> results(seeds.size());
  parallel_for(seeds.size(), options.workers, [&](std::size_t i) {
    ScenarioConfig cfg = base;
    cfg.k_g = k_g;
    cfg.lambda_g = lambda_g;
    cfg.seed = seeds[i];
    cfg.sim_duration_s = duration;
    const Scenario sc = make_scenario(cfg);
    const RunResult run_result = run(cfg, sc.topology, sc.schedule);
    const auto warmup = static_cast<Slot>(std::floor(options.warmup_s / cfg.slot_s()));
    results[i].b = tally_broadcast(run_result.outcomes, sc.topology, warmup);
    results[i].g = tally_groupcast(run_result.outcomes, sc.topology, warmup);
    results[i].occupancy = resource_occupancy(run_result);
  });

  PlrTally b, g;
  double occ = 0.0;
  for (const auto& r : results) {
    b.merge(r.b);
    g.merge(r.g);
    occ += r.occupancy;
  }
  ProbeResult p;
  p.lambda_g = lambda_g;
  p.k_g = k_g;
  p.plr_b = b.estimate();
  p.plr_g = g.estimate();
  p.occupancy = occ / n_seeds;
  p.duration_s = duration;
  p.pass = probe_passes(p, base.plr_qos);
  return p;
}

bool probe_passes(const ProbeResult& probe, double plr_qos) {
  const bool b_ok = probe.plr_b.empty() || probe.plr_b.hi <= plr_qos;
  const bool g_ok = probe.plr_g.empty() || probe.plr_g.hi <= plr_qos;
  return b_ok && g_ok;
}

CapacityResult capacity_search(const ProbeFn& probe, std::span<const int> k_candidates,
                               double plr_qos, const SearchOptions& options) {
  if (k_candidates.empty()) throw std::invalid_argument("no K_g candidates");
  std::vector<int> ks(k_candidates.begin(), k_candidates.end());
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());

  CapacityResult result;
  result.baseline = probe(ks.front(), 0.0, 1.0, false);
  result.baseline.pass = probe_passes(result.baseline, plr_qos);
  if (!result.baseline.pass) {
    for (int k : ks) result.candidates.push_back({k, 0.0, result.baseline, {}, 0, false});
    result.diagnostic = "broadcast traffic alone violates the PLR requirement";
    return result;
  }

  for (int k : ks) {
    CandidateResult cand;
    cand.k_g = k;
    double factor = 1.0;
    for (;;) {
      std::vector<ProbeResult> probes;
      auto pred = [&](double lambda) {
        if (lambda <= 0.0) return true;
        ProbeResult p = probe(k, lambda, factor, false);
        p.pass = probe_passes(p, plr_qos);
        probes.push_back(p);
        return p.pass;
      };
      const double cap = bisect_threshold(pred, options.lambda_max, options.resolution);
      cand.capacity = cap;
      cand.probes = std::move(probes);
      cand.at_capacity = result.baseline;
      for (const auto& p : cand.probes)
        if (p.lambda_g == cap) cand.at_capacity = p;
      if (!options.verify || cap <= 0.0) break;
      ProbeResult check = probe(k, cap, factor, true);
      check.pass = probe_passes(check, plr_qos);
      const bool point_ok = (check.plr_b.empty() || check.plr_b.point <= plr_qos) &&
                            (check.plr_g.empty() || check.plr_g.point <= plr_qos);
      if (point_ok) break;
      if (cand.widenings >= options.max_widen) {
        cand.unstable = true;
        break;
      }
      ++cand.widenings;
      factor *= 2.0;
    }
    result.candidates.push_back(std::move(cand));
  }

  result.best_k_g = result.candidates.front().k_g;
  for (const auto& c : result.candidates) {
    if (c.capacity > result.capacity) {
      result.capacity = c.capacity;
      result.best_k_g = c.k_g;
    }
  }
  std::string diag;
  for (const auto& c : result.candidates)
    if (c.unstable) diag += (diag.empty() ? "" : ";") + std::string("unstable K_g=") + std::to_string(c.k_g);
  result.diagnostic = diag;
  return result;
}

CapacityResult capacity_search(const ScenarioConfig& base, double lambda_b, bool psfch_enabled,
                               const SearchOptions& options) {
  if (lambda_b < 0) throw std::invalid_argument("lambda_b must be non-negative");
  ScenarioConfig cfg = base;
  cfg.lambda_b = lambda_b;
  cfg.psfch_enabled = psfch_enabled;
  cfg.validate();

  const int k_max = max_attempts(cfg.latency_budget_ms, cfg.radio.slot_duration_us,
                                 cfg.ack_delay_ms, psfch_enabled);
  std::vector<int> ks;
  if (options.k_candidates.empty()) {
    for (int k = 1; k <= k_max; ++k) ks.push_back(k);
  } else {
    for (int k : options.k_candidates)
      if (k >= 1 && k <= k_max) ks.push_back(k);
    if (ks.empty()) ks.push_back(std::min(k_max, std::max(1, options.k_candidates.front())));
  }

  std::vector<std::uint64_t> fresh;
  for (auto s : options.seeds) fresh.push_back(RandomStream::derive(s, "verify").next());

  ProbeFn fn = [&](int k, double lambda, double factor, bool use_fresh) {
    return evaluate_probe(cfg, k, lambda, options, factor,
                          use_fresh ? std::span<const std::uint64_t>(fresh)
                                    : std::span<const std::uint64_t>(options.seeds));
  };
  CapacityResult r = capacity_search(fn, ks, cfg.plr_qos, options);
  r.lambda_b = lambda_b;
  r.psfch_enabled = psfch_enabled;
  return r;
}

}  // namespace slsim
