#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "slsim/random.hpp"
#include "slsim/units.hpp"

namespace slsim {

struct Topology;

/// One row of the modulation-and-coding table.
struct McsEntry {
  int bits_per_symbol = 2;
  double code_rate = 0.5;

  double spectral_efficiency() const { return bits_per_symbol * code_rate; }
};

/// Default MCS table: NR PDSCH/PSSCH table (64QAM), except that index 6
/// carries QPSK at rate 602/1024 so that the default PSSCH setting matches
/// the grant sizes the experiments were built around.
std::vector<McsEntry> default_mcs_table();

struct ErrorModelParams {
  std::string name = "logistic";
  /// Logistic slope s in dB: BLER = 1 / (1 + exp((sinr - t) / s)).
  double slope_db = 0.2;
  /// PSCCH decodes at a threshold this many dB below the PSSCH one.
  double pscch_offset_db = 5.0;
  /// Gap to Shannon capacity; the per-MCS BLER midpoint is
  /// t = 10 log10(2^SE - 1) + gap. The default puts a 290-byte MCS 6
  /// packet on a 3-subchannel grant at BLER 0.009 at 200 m.
  double shannon_gap_db = 4.0;
};

struct RadioParams {
  double tx_power_dbm = 23.0;
  double noise_figure_db = 5.0;
  double ref_loss_db = 46.7;
  double ref_distance_m = 1.0;
  double pathloss_exponent = 3.0;
  int mcs_pssch = 6;
  /// Most robust table entry; recorded only, the PSCCH error curve is the
  /// PSSCH one shifted by ErrorModelParams::pscch_offset_db.
  int mcs_pscch = 0;
  double subcarrier_spacing_khz = 30.0;
  int prbs_per_subchannel = 10;
  int n_subchannels = 10;
  double slot_duration_us = 500.0;
  int packet_size_bytes = 290;
  std::vector<McsEntry> mcs_table = default_mcs_table();
  ErrorModelParams error_model;

  const McsEntry& pssch_mcs() const;
  double subchannel_bandwidth_hz() const {
    return prbs_per_subchannel * 12.0 * subcarrier_spacing_khz * 1e3;
  }
  /// Throws std::invalid_argument on inconsistent values.
  void validate() const;
};

enum class Channel { Pscch, Pssch };

struct LinkSample {
  UeId tx = 0;
  UeId rx = 0;
  Slot slot = 0;
  SubchannelRange subchannels;
  double sinr_db = 0.0;
  Channel channel = Channel::Pssch;
};

/// A transmission that may interfere: sender and the grant it occupies.
struct Emission {
  UeId ue = 0;
  SubchannelRange grant;
};

double path_loss_db(double distance_m, const RadioParams& params);

double noise_power_dbm(const RadioParams& params, int n_subchannels_used);

/// SINR of `tx` at `rx`, measured over `subchannels`.
///
/// Each emission spreads its power evenly over its grant; the share that
/// falls into the measured range counts (signal and interference alike).
/// Noise covers the measured range only.
double sinr_db(UeId tx, UeId rx, std::span<const Emission> interferers,
               const SubchannelRange& tx_grant, const SubchannelRange& subchannels,
               const Topology& topology, const RadioParams& params);

/// Same, with the measured range equal to the whole grant.
double sinr_db(UeId tx, UeId rx, std::span<const Emission> interferers,
               const SubchannelRange& subchannels, const Topology& topology,
               const RadioParams& params);

class ErrorModel {
 public:
  virtual ~ErrorModel() = default;
  /// Block error probability. `mcs` is always the PSSCH entry; models
  /// derive the PSCCH curve from it. Must be non-increasing in `sinr_db`.
  virtual double bler(double sinr_db, Channel channel, const McsEntry& mcs,
                      int tb_bits) const = 0;
};

/// BLER = 1 / (1 + exp((sinr - t) / s)), t from the MCS spectral efficiency.
class LogisticErrorModel final : public ErrorModel {
 public:
  explicit LogisticErrorModel(const ErrorModelParams& params) : params_(params) {}
  double bler(double sinr_db, Channel channel, const McsEntry& mcs,
              int tb_bits) const override;
  double threshold_db(Channel channel, const McsEntry& mcs) const;

 private:
  ErrorModelParams params_;
  // Thresholds of the last MCS seen; an instance is not shared across threads.
  mutable McsEntry cached_mcs_{0, -1.0};
  mutable double cached_pssch_ = 0.0;
  mutable double cached_pscch_ = 0.0;
};

/// Hard threshold at the same midpoint as the logistic model: decode iff
/// sinr >= t. Useful for deterministic checks.
class StepErrorModel final : public ErrorModel {
 public:
  explicit StepErrorModel(const ErrorModelParams& params) : params_(params) {}
  double bler(double sinr_db, Channel channel, const McsEntry& mcs,
              int tb_bits) const override;

 private:
  ErrorModelParams params_;
};

/// Throws std::invalid_argument for an unknown model name.
std::unique_ptr<ErrorModel> make_error_model(const ErrorModelParams& params);

/// Success drawn as Bernoulli(1 - BLER).
bool decode(const LinkSample& sample, int tb_bits, const RadioParams& params,
            const ErrorModel& model, RandomStream& rng);

}  // namespace slsim
