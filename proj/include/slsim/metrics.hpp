#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "slsim/engine.hpp"
#include "slsim/scenario.hpp"

namespace slsim {

struct PlrEstimate {
  double point = 0.0;
  double lo = 0.0;
  double hi = 1.0;
  /// Packets behind the interval. A packet's loss fraction lies in [0, 1],
  /// so its variance is at most p(1 - p) and the binomial interval over
  /// packets stays conservative even though receivers of one packet fail
  /// together.
  std::int64_t samples = 0;
  /// UEs contributing to the average.
  std::int64_t units = 0;

  bool empty() const { return units == 0; }
};

/// 95% Wilson score interval for proportion `p` over `n` trials.
void wilson_interval(double p, std::int64_t n, double& lo, double& hi, double z = 1.959963984540054);

/// Sums of per-UE loss ratios, mergeable across runs. Each (run, UE) pair
/// is one averaging unit.
struct PlrTally {
  double ratio_sum = 0.0;
  std::int64_t units = 0;
  std::int64_t trials = 0;

  void merge(const PlrTally& o) {
    ratio_sum += o.ratio_sum;
    units += o.units;
    trials += o.trials;
  }
  PlrEstimate estimate() const;
};

/// Packets generated before `warmup` slots are ignored.
PlrTally tally_broadcast(std::span<const PacketOutcome> outcomes, const Topology& topology,
                         Slot warmup = 0);
PlrTally tally_groupcast(std::span<const PacketOutcome> outcomes, const Topology& topology,
                         Slot warmup = 0);

/// Mean over measurable broadcasters of their mean per-packet fraction of
/// in-range receivers that never decoded. Packets without receivers are
/// skipped.
PlrEstimate plr_broadcast(std::span<const PacketOutcome> outcomes, const Topology& topology);

/// Mean over platoon members of the fraction of their packets that missed
/// at least one other member.
PlrEstimate plr_groupcast(std::span<const PacketOutcome> outcomes, const Topology& topology);

/// Largest grid point k * resolution in [0, lambda_max] where `pred` holds,
/// assuming pred(0) holds and pred is monotone (true then false).
double bisect_threshold(const std::function<bool(double)>& pred, double lambda_max,
                        double resolution, std::vector<double>* probed = nullptr);

struct ProbeResult {
  double lambda_g = 0.0;
  int k_g = 0;
  PlrEstimate plr_b;
  PlrEstimate plr_g;
  double occupancy = 0.0;
  double duration_s = 0.0;  ///< simulated seconds per seed
  bool pass = false;
};

struct SearchOptions {
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  double lambda_max = 50.0;
  double resolution = 0.1;
  std::int64_t min_groupcast_packets = 2000;
  double min_probe_duration_s = 10.0;
  double max_probe_duration_s = 400.0;
  /// When positive, every probe simulates exactly this long per seed.
  double fixed_duration_s = 0.0;
  /// Empty: every K_g in [1, max_attempts].
  std::vector<int> k_candidates;
  int workers = 1;
  /// Re-probe each capacity with fresh seeds; if a point estimate there
  /// exceeds the requirement, double the sample target and search again, up
  /// to max_widen times.
  bool verify = true;
  int max_widen = 2;
  double warmup_s = 0.0;
};

/// PLR estimates at one (K_g, lambda_g) point pooled over the option seeds.
/// `packet_factor` scales the groupcast packet target.
ProbeResult evaluate_probe(const ScenarioConfig& base, int k_g, double lambda_g,
                           const SearchOptions& options, double packet_factor = 1.0,
                           std::span<const std::uint64_t> seeds = {});

/// Both PLR upper bounds at or below plr_qos; an empty class passes.
bool probe_passes(const ProbeResult& probe, double plr_qos);

struct CandidateResult {
  int k_g = 0;
  double capacity = 0.0;
  ProbeResult at_capacity;
  std::vector<ProbeResult> probes;
  int widenings = 0;
  bool unstable = false;
};

struct CapacityResult {
  double lambda_b = 0.0;
  bool psfch_enabled = false;
  double capacity = 0.0;
  int best_k_g = 0;
  ProbeResult baseline;  ///< lambda_g = 0
  std::vector<CandidateResult> candidates;  ///< ascending k_g
  std::string diagnostic;
};

/// Groupcast capacity: max over K_g of the largest lambda_g whose probe
/// passes, found by bisection. Zero when broadcast alone already fails.
CapacityResult capacity_search(const ScenarioConfig& base, double lambda_b, bool psfch_enabled,
                               const SearchOptions& options);

/// Pluggable form used by tests: `probe(k, lambda)` supplies the pass/fail
/// evidence.
using ProbeFn = std::function<ProbeResult(int k_g, double lambda_g, double packet_factor,
                                          bool fresh_seeds)>;
CapacityResult capacity_search(const ProbeFn& probe, std::span<const int> k_candidates,
                               double plr_qos, const SearchOptions& options);

/// Runs `fn(i)` for i in [0, n) on up to `workers` threads.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace slsim
