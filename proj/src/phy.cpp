#include "slsim/phy.hpp"

#include <cmath>
#include <stdexcept>

#include "slsim/scenario.hpp"

namespace slsim {

namespace {

constexpr double kThermalNoiseDbmPerHz = -174.0;

double logistic_midpoint_db(const McsEntry& mcs, const ErrorModelParams& p, Channel channel) {
  double t = linear_to_db(std::exp2(mcs.spectral_efficiency()) - 1.0) + p.shannon_gap_db;
  if (channel == Channel::Pscch) t -= p.pscch_offset_db;
  return t;
}

}  // namespace

std::vector<McsEntry> default_mcs_table() {
  // {Qm, R x 1024}
  static constexpr int kTable[][2] = {
      {2, 120}, {2, 157}, {2, 193}, {2, 251}, {2, 308}, {2, 379}, {2, 602}, {2, 526},
      {2, 602}, {2, 679}, {4, 340}, {4, 378}, {4, 434}, {4, 490}, {4, 553}, {4, 616},
      {4, 658}, {6, 438}, {6, 466}, {6, 517}, {6, 567}, {6, 616}, {6, 666}, {6, 719},
      {6, 772}, {6, 822}, {6, 873}, {6, 910}, {6, 948}};
  std::vector<McsEntry> table;
  for (const auto& row : kTable) table.push_back({row[0], row[1] / 1024.0});
  return table;
}

const McsEntry& RadioParams::pssch_mcs() const {
  if (mcs_pssch < 0 || mcs_pssch >= static_cast<int>(mcs_table.size()))
    throw std::invalid_argument("mcs_pssch out of table range");
  return mcs_table[static_cast<std::size_t>(mcs_pssch)];
}

void RadioParams::validate() const {
  if (n_subchannels <= 0 || n_subchannels > 32)
    throw std::invalid_argument("n_subchannels must be in [1, 32]");
  if (prbs_per_subchannel <= 0) throw std::invalid_argument("prbs_per_subchannel must be positive");
  if (packet_size_bytes <= 0) throw std::invalid_argument("packet_size_bytes must be positive");
  if (ref_distance_m <= 0) throw std::invalid_argument("ref_distance_m must be positive");
  if (pathloss_exponent <= 0) throw std::invalid_argument("pathloss_exponent must be positive");
  if (subcarrier_spacing_khz <= 0) throw std::invalid_argument("subcarrier_spacing_khz must be positive");
  const double expected_us = 1000.0 * 15.0 / subcarrier_spacing_khz;
  if (std::abs(slot_duration_us - expected_us) > 1e-6)
    throw std::invalid_argument("slot_duration_us inconsistent with subcarrier_spacing_khz");
  if (mcs_pscch < 0 || mcs_pscch >= static_cast<int>(mcs_table.size()))
    throw std::invalid_argument("mcs_pscch out of table range");
  (void)pssch_mcs();
  if (error_model.slope_db <= 0) throw std::invalid_argument("error model slope must be positive");
  (void)make_error_model(error_model);
}

double path_loss_db(double distance_m, const RadioParams& params) {
  if (!(distance_m > 0.0)) throw std::invalid_argument("path_loss_db: distance must be positive");
  const double d = std::max(distance_m, params.ref_distance_m);
  return params.ref_loss_db + 10.0 * params.pathloss_exponent * std::log10(d / params.ref_distance_m);
}

double noise_power_dbm(const RadioParams& params, int n_subchannels_used) {
  return kThermalNoiseDbmPerHz + linear_to_db(n_subchannels_used * params.subchannel_bandwidth_hz()) +
         params.noise_figure_db;
}

double sinr_db(UeId tx, UeId rx, std::span<const Emission> interferers,
               const SubchannelRange& tx_grant, const SubchannelRange& subchannels,
               const Topology& topology, const RadioParams& params) {
  auto rx_power_mw = [&](UeId from, const SubchannelRange& grant) {
    const int ov = grant.overlap(subchannels);
    if (ov == 0) return 0.0;
    const double d = topology.distance(from, rx);
    return db_to_linear(params.tx_power_dbm - path_loss_db(d, params)) * ov / grant.count;
  };
  const double signal = rx_power_mw(tx, tx_grant);
  double interference = 0.0;
  for (const auto& e : interferers) {
    if (e.ue == tx || e.ue == rx) continue;
    interference += rx_power_mw(e.ue, e.grant);
  }
  const double noise = db_to_linear(noise_power_dbm(params, subchannels.count));
  return linear_to_db(signal / (noise + interference));
}

double sinr_db(UeId tx, UeId rx, std::span<const Emission> interferers,
               const SubchannelRange& subchannels, const Topology& topology,
               const RadioParams& params) {
  return sinr_db(tx, rx, interferers, subchannels, subchannels, topology, params);
}

double LogisticErrorModel::threshold_db(Channel channel, const McsEntry& mcs) const {
  return logistic_midpoint_db(mcs, params_, channel);
}

double LogisticErrorModel::bler(double sinr, Channel channel, const McsEntry& mcs, int) const {
  if (mcs.bits_per_symbol != cached_mcs_.bits_per_symbol || mcs.code_rate != cached_mcs_.code_rate) {
    cached_mcs_ = mcs;
    cached_pssch_ = threshold_db(Channel::Pssch, mcs);
    cached_pscch_ = threshold_db(Channel::Pscch, mcs);
  }
  const double t = channel == Channel::Pscch ? cached_pscch_ : cached_pssch_;
  const double x = (sinr - t) / params_.slope_db;
  if (x > 700.0) return 0.0;
  return 1.0 / (1.0 + std::exp(x));
}

double StepErrorModel::bler(double sinr, Channel channel, const McsEntry& mcs, int) const {
  return sinr >= logistic_midpoint_db(mcs, params_, channel) ? 0.0 : 1.0;
}

std::unique_ptr<ErrorModel> make_error_model(const ErrorModelParams& params) {
  if (params.name == "logistic") return std::make_unique<LogisticErrorModel>(params);
  if (params.name == "step") return std::make_unique<StepErrorModel>(params);
  throw std::invalid_argument("unknown error model '" + params.name + "'");
}

bool decode(const LinkSample& sample, int tb_bits, const RadioParams& params,
            const ErrorModel& model, RandomStream& rng) {
  if (tb_bits <= 0) throw std::invalid_argument("decode: tb_bits must be positive");
  // PSCCH thresholds are expressed relative to the PSSCH MCS.
  const double p_err = model.bler(sample.sinr_db, sample.channel, params.pssch_mcs(), tb_bits);
  return rng.uniform() >= p_err;
}

}  // namespace slsim
