#include "slsim/cli.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "slsim/engine.hpp"
#include "slsim/mac.hpp"

#ifndef SLSIM_VERSION
#define SLSIM_VERSION "0.0.0"
#endif

namespace slsim {

std::string version_string() { return SLSIM_VERSION; }

const char* to_string(Preset p) {
  switch (p) {
    case Preset::PlrCurves: return "plr-curves";
    case Preset::CapacityVsLambdaB: return "capacity-vs-lambda_b";
    case Preset::CapacityVsPlatoonSize: return "capacity-vs-platoon-size";
    case Preset::CapacityVsLatency: return "capacity-vs-latency";
    case Preset::SingleRun: return "single-run";
  }
  return "?";
}

std::optional<Preset> parse_preset(std::string_view name) {
  for (Preset p : {Preset::PlrCurves, Preset::CapacityVsLambdaB, Preset::CapacityVsPlatoonSize,
                   Preset::CapacityVsLatency, Preset::SingleRun})
    if (name == to_string(p)) return p;
  return std::nullopt;
}

const char* axis_name(Preset p) {
  switch (p) {
    case Preset::PlrCurves: return "lambda_g_per_s";
    case Preset::CapacityVsLambdaB: return "lambda_b_per_s";
    case Preset::CapacityVsPlatoonSize: return "platoon_size";
    case Preset::CapacityVsLatency: return "latency_budget_ms";
    case Preset::SingleRun: return "none";
  }
  return "?";
}

std::vector<double> default_sweep(Preset p) {
  switch (p) {
    case Preset::PlrCurves: {
      std::vector<double> v;
      for (int i = 1; i <= 20; ++i) v.push_back(i);
      return v;
    }
    case Preset::CapacityVsLambdaB: return {0.6, 1.2, 1.8, 2.4, 3.4, 4, 5, 6, 7, 8, 9};
    case Preset::CapacityVsPlatoonSize: return {2, 3, 4, 5, 6, 7, 8, 9, 10};
    case Preset::CapacityVsLatency: return {5, 10, 15, 20};
    case Preset::SingleRun: return {0};
  }
  return {};
}

std::vector<double> ExperimentSpec::resolved_sweep() const {
  if (preset == Preset::SingleRun) return {0};
  std::vector<double> v = sweep_values.empty() ? default_sweep(preset) : sweep_values;
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

std::vector<bool> ExperimentSpec::resolved_modes() const {
  std::vector<bool> m = psfch_modes;
  if (m.empty()) {
    if (preset == Preset::SingleRun || preset == Preset::PlrCurves)
      m = {base.psfch_enabled};
    else
      m = {false, true};
  }
  std::sort(m.begin(), m.end());
  m.erase(std::unique(m.begin(), m.end()), m.end());
  return m;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto comma = v.find(',', start);
    std::string item = trim(v.substr(start, comma == std::string_view::npos ? v.npos : comma - start));
    if (!item.empty()) out.push_back(std::move(item));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double to_double(std::string_view v) {
  const std::string s(v);
  char* end = nullptr;
  errno = 0;
  const double d = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE || !std::isfinite(d))
    throw ConfigError("expected a number, got '" + s + "'");
  return d;
}

long long to_integer(std::string_view v) {
  long long x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("expected an integer, got '" + std::string(v) + "'");
  return x;
}

std::uint64_t to_u64(std::string_view v) {
  std::uint64_t x = 0;
  const auto r = std::from_chars(v.data(), v.data() + v.size(), x);
  if (r.ec != std::errc{} || r.ptr != v.data() + v.size())
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  return x;
}

bool to_bool(std::string_view v) {
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw ConfigError("expected true/false, got '" + std::string(v) + "'");
}

enum class Bound { Any, NonNegative, Positive, Probability };

double checked(double x, Bound b) {
  switch (b) {
    case Bound::Any: break;
    case Bound::NonNegative:
      if (x < 0) throw ConfigError("must be >= 0, got " + fmt(x));
      break;
    case Bound::Positive:
      if (x <= 0) throw ConfigError("must be > 0, got " + fmt(x));
      break;
    case Bound::Probability:
      if (x <= 0 || x >= 1) throw ConfigError("must lie in (0, 1), got " + fmt(x));
      break;
  }
  return x;
}

int checked_int(long long x, long long lo, long long hi) {
  if (x < lo || x > hi)
    throw ConfigError("must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " +
                      std::to_string(x));
  return static_cast<int>(x);
}

template <class T>
std::string join(const std::vector<T>& v, const std::function<std::string(const T&)>& f,
                 const char* sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? sep : "") + f(v[i]);
  return out;
}

struct Key {
  const char* name;
  std::function<void(ExperimentSpec&, std::string_view)> set;
  std::function<std::string(const ExperimentSpec&)> get;
  /// Part of the reproducibility record (hash and header).
  bool recorded = true;
};

template <class Field>
Key real_key(const char* name, Field field, Bound bound) {
  return {name,
          [field, bound](ExperimentSpec& s, std::string_view v) { field(s) = checked(to_double(v), bound); },
          [field](const ExperimentSpec& s) { return fmt(field(s)); }};
}

template <class Field>
Key int_key(const char* name, Field field, long long lo, long long hi) {
  return {name,
          [field, lo, hi](ExperimentSpec& s, std::string_view v) { field(s) = checked_int(to_integer(v), lo, hi); },
          [field](const ExperimentSpec& s) { return std::to_string(field(s)); }};
}

template <class Field>
Key bool_key(const char* name, Field field) {
  return {name, [field](ExperimentSpec& s, std::string_view v) { field(s) = to_bool(v); },
          [field](const ExperimentSpec& s) {
            return std::string(field(s) ? "true" : "false");
          }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = [] {
    constexpr long long kMaxInt = 1'000'000'000;
    std::vector<Key> k;
    // experiment
    k.push_back({"preset",
                 [](ExperimentSpec& s, std::string_view v) {
                   auto p = parse_preset(v);
                   if (!p) throw ConfigError("unknown preset '" + std::string(v) + "'");
                   s.preset = *p;
                 },
                 [](const ExperimentSpec& s) { return std::string(to_string(s.preset)); }});
    k.push_back({"sweep_values",
                 [](ExperimentSpec& s, std::string_view v) {
                   s.sweep_values.clear();
                   for (const auto& item : split_list(v)) s.sweep_values.push_back(to_double(item));
                   if (s.sweep_values.empty()) throw ConfigError("sweep_values must not be empty");
                 },
                 [](const ExperimentSpec& s) {
                   return join<double>(s.resolved_sweep(), [](const double& x) { return fmt(x); });
                 }});
    k.push_back({"psfch_modes",
                 [](ExperimentSpec& s, std::string_view v) {
                   s.psfch_modes.clear();
                   for (const auto& item : split_list(v)) s.psfch_modes.push_back(to_bool(item));
                   if (s.psfch_modes.empty()) throw ConfigError("psfch_modes must not be empty");
                 },
                 [](const ExperimentSpec& s) {
                   std::vector<bool> m = s.resolved_modes();
                   std::string out;
                   for (std::size_t i = 0; i < m.size(); ++i) out += (i ? "," : "") + std::string(m[i] ? "on" : "off");
                   return out;
                 }});
    k.push_back({"seeds",
                 [](ExperimentSpec& s, std::string_view v) {
                   s.search.seeds.clear();
                   for (const auto& item : split_list(v)) s.search.seeds.push_back(to_u64(item));
                   if (s.search.seeds.empty()) throw ConfigError("seeds must not be empty");
                 },
                 [](const ExperimentSpec& s) {
                   return join<std::uint64_t>(s.search.seeds, [](const std::uint64_t& x) { return std::to_string(x); });
                 }});
    k.push_back({"output_path", [](ExperimentSpec& s, std::string_view v) { s.output_path = std::string(v); },
                 [](const ExperimentSpec& s) { return s.output_path; }, false});
    k.push_back({"output_format",
                 [](ExperimentSpec& s, std::string_view v) {
                   if (v == "csv")
                     s.format = OutputFormat::Csv;
                   else if (v == "jsonl")
                     s.format = OutputFormat::Jsonl;
                   else
                     throw ConfigError("output_format must be csv or jsonl, got '" + std::string(v) + "'");
                 },
                 [](const ExperimentSpec& s) { return std::string(s.format == OutputFormat::Csv ? "csv" : "jsonl"); }});
    k.push_back(int_key("workers", [](auto& s) -> auto& { return s.search.workers; }, 1, 1024));
    k.back().recorded = false;
    k.push_back({"k_g_candidates",
                 [](ExperimentSpec& s, std::string_view v) {
                   s.search.k_candidates.clear();
                   for (const auto& item : split_list(v))
                     s.search.k_candidates.push_back(checked_int(to_integer(item), 1, 1000));
                   if (s.search.k_candidates.empty()) throw ConfigError("k_g_candidates must not be empty");
                 },
                 [](const ExperimentSpec& s) {
                   if (s.search.k_candidates.empty()) return std::string("all");
                   return join<int>(s.search.k_candidates, [](const int& x) { return std::to_string(x); });
                 }});
    k.push_back(real_key("lambda_max_per_s", [](auto& s) -> auto& { return s.search.lambda_max; }, Bound::Positive));
    k.push_back(real_key("resolution_per_s", [](auto& s) -> auto& { return s.search.resolution; }, Bound::Positive));
    k.push_back({"min_groupcast_packets",
                 [](ExperimentSpec& s, std::string_view v) { s.search.min_groupcast_packets = checked_int(to_integer(v), 1, kMaxInt); },
                 [](const ExperimentSpec& s) { return std::to_string(s.search.min_groupcast_packets); }});
    k.push_back(real_key("min_probe_duration_s", [](auto& s) -> auto& { return s.search.min_probe_duration_s; }, Bound::Positive));
    k.push_back(real_key("max_probe_duration_s", [](auto& s) -> auto& { return s.search.max_probe_duration_s; }, Bound::Positive));
    k.push_back(bool_key("verify", [](auto& s) -> auto& { return s.search.verify; }));
    k.push_back(int_key("max_widen", [](auto& s) -> auto& { return s.search.max_widen; }, 0, 20));
    k.push_back(real_key("warmup_s", [](auto& s) -> auto& { return s.search.warmup_s; }, Bound::NonNegative));
    // scenario
    k.push_back(int_key("n_ues", [](auto& s) -> auto& { return s.base.n_ues; }, 2, kMaxInt));
    k.push_back(int_key("platoon_size", [](auto& s) -> auto& { return s.base.platoon_size; }, 2, kMaxInt));
    k.push_back(real_key("mean_spacing_m", [](auto& s) -> auto& { return s.base.mean_spacing_m; }, Bound::Positive));
    k.push_back(real_key("lambda_b_per_s", [](auto& s) -> auto& { return s.base.lambda_b; }, Bound::NonNegative));
    k.push_back(real_key("lambda_g_per_s", [](auto& s) -> auto& { return s.base.lambda_g; }, Bound::NonNegative));
    k.push_back(real_key("comm_range_m", [](auto& s) -> auto& { return s.base.comm_range_m; }, Bound::Positive));
    k.push_back(real_key("latency_budget_ms", [](auto& s) -> auto& { return s.base.latency_budget_ms; }, Bound::Positive));
    k.push_back(real_key("plr_qos", [](auto& s) -> auto& { return s.base.plr_qos; }, Bound::Probability));
    k.push_back(int_key("k_g", [](auto& s) -> auto& { return s.base.k_g; }, 1, 1000));
    k.push_back(int_key("k_b", [](auto& s) -> auto& { return s.base.k_b; }, 1, 1000));
    k.push_back(bool_key("psfch_enabled", [](auto& s) -> auto& { return s.base.psfch_enabled; }));
    k.push_back(real_key("ack_delay_ms", [](auto& s) -> auto& { return s.base.ack_delay_ms; }, Bound::Positive));
    k.push_back(real_key("sim_duration_s", [](auto& s) -> auto& { return s.base.sim_duration_s; }, Bound::Positive));
    k.push_back({"seed", [](ExperimentSpec& s, std::string_view v) { s.base.seed = to_u64(v); },
                 [](const ExperimentSpec& s) { return std::to_string(s.base.seed); }});
    k.push_back(bool_key("half_duplex", [](auto& s) -> auto& { return s.base.half_duplex; }));
    k.push_back(bool_key("psfch_ideal", [](auto& s) -> auto& { return s.base.psfch_ideal; }));
    k.push_back(bool_key("harq_combining", [](auto& s) -> auto& { return s.base.harq_combining; }));
    // radio
    k.push_back(real_key("tx_power_dbm", [](auto& s) -> auto& { return s.base.radio.tx_power_dbm; }, Bound::Any));
    k.push_back(real_key("noise_figure_db", [](auto& s) -> auto& { return s.base.radio.noise_figure_db; }, Bound::NonNegative));
    k.push_back(real_key("ref_loss_db", [](auto& s) -> auto& { return s.base.radio.ref_loss_db; }, Bound::Any));
    k.push_back(real_key("ref_distance_m", [](auto& s) -> auto& { return s.base.radio.ref_distance_m; }, Bound::Positive));
    k.push_back(real_key("pathloss_exponent", [](auto& s) -> auto& { return s.base.radio.pathloss_exponent; }, Bound::Positive));
    k.push_back(int_key("mcs_pssch", [](auto& s) -> auto& { return s.base.radio.mcs_pssch; }, 0, 27));
    k.push_back(int_key("mcs_pscch", [](auto& s) -> auto& { return s.base.radio.mcs_pscch; }, 0, 27));
    k.push_back(real_key("subcarrier_spacing_khz", [](auto& s) -> auto& { return s.base.radio.subcarrier_spacing_khz; }, Bound::Positive));
    k.push_back(int_key("prbs_per_subchannel", [](auto& s) -> auto& { return s.base.radio.prbs_per_subchannel; }, 1, 275));
    k.push_back(int_key("n_subchannels", [](auto& s) -> auto& { return s.base.radio.n_subchannels; }, 1, 27));
    k.push_back(real_key("slot_duration_us", [](auto& s) -> auto& { return s.base.radio.slot_duration_us; }, Bound::Positive));
    k.push_back(int_key("packet_size_bytes", [](auto& s) -> auto& { return s.base.radio.packet_size_bytes; }, 1, kMaxInt));
    k.push_back({"error_model",
                 [](ExperimentSpec& s, std::string_view v) {
                   if (v != "logistic" && v != "step")
                     throw ConfigError("unknown error model '" + std::string(v) + "'");
                   s.base.radio.error_model.name = std::string(v);
                 },
                 [](const ExperimentSpec& s) { return s.base.radio.error_model.name; }});
    k.push_back(real_key("error_slope_db", [](auto& s) -> auto& { return s.base.radio.error_model.slope_db; }, Bound::Positive));
    k.push_back(real_key("error_pscch_offset_db", [](auto& s) -> auto& { return s.base.radio.error_model.pscch_offset_db; }, Bound::Any));
    k.push_back(real_key("error_shannon_gap_db", [](auto& s) -> auto& { return s.base.radio.error_model.shannon_gap_db; }, Bound::Any));
    return k;
  }();
  return table;
}

const Key* find_key(std::string_view name) {
  for (const auto& k : keys())
    if (name == k.name) return &k;
  return nullptr;
}

void apply_axis(Preset p, double v, ScenarioConfig& cfg) {
  switch (p) {
    case Preset::PlrCurves: cfg.lambda_g = v; break;
    case Preset::CapacityVsLambdaB: cfg.lambda_b = v; break;
    case Preset::CapacityVsPlatoonSize: cfg.platoon_size = static_cast<int>(std::lround(v)); break;
    case Preset::CapacityVsLatency: cfg.latency_budget_ms = v; break;
    case Preset::SingleRun: break;
  }
}

/// Checks spanning several keys; `where(key)` prefixes the location.
void cross_check(const ExperimentSpec& spec, const std::function<std::string(const char*)>& where) {
  const auto& r = spec.base.radio;
  const double expected_slot = 15000.0 / r.subcarrier_spacing_khz;
  if (std::abs(r.slot_duration_us - expected_slot) > 1e-6)
    throw ConfigError(where("slot_duration_us") + "slot_duration_us " + fmt(r.slot_duration_us) +
                      " does not match subcarrier_spacing_khz " + fmt(r.subcarrier_spacing_khz) +
                      " (expected " + fmt(expected_slot) + ")");
  if (spec.base.latency_budget_ms * 1e3 < r.slot_duration_us)
    throw ConfigError(where("latency_budget_ms") + "latency_budget_ms " + fmt(spec.base.latency_budget_ms) +
                      " is shorter than one slot (" + fmt(r.slot_duration_us) + " us)");
  if (spec.base.platoon_size > spec.base.n_ues)
    throw ConfigError(where("platoon_size") + "platoon_size " + std::to_string(spec.base.platoon_size) +
                      " exceeds n_ues " + std::to_string(spec.base.n_ues));
  const int table = static_cast<int>(r.mcs_table.size());
  if (r.mcs_pssch >= table) throw ConfigError(where("mcs_pssch") + "mcs_pssch outside the MCS table");
  if (r.mcs_pscch >= table) throw ConfigError(where("mcs_pscch") + "mcs_pscch outside the MCS table");
  if (spec.search.max_probe_duration_s < spec.search.min_probe_duration_s)
    throw ConfigError(where("max_probe_duration_s") + "max_probe_duration_s is below min_probe_duration_s");
  try {
    spec.base.validate();
    for (bool psfch : spec.resolved_modes())
      (void)subchannels_required(r.packet_size_bytes, SlotFormat::make(psfch), r);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where(nullptr) + e.what());
  }
  for (double v : spec.resolved_sweep()) {
    ScenarioConfig cfg = spec.base;
    apply_axis(spec.preset, v, cfg);
    const bool integral = spec.preset != Preset::CapacityVsPlatoonSize || v == std::floor(v);
    bool ok = integral;
    if (ok) {
      try {
        cfg.validate();
      } catch (const std::invalid_argument&) {
        ok = false;
      }
    }
    if (ok && spec.preset == Preset::CapacityVsLatency && cfg.latency_budget_ms * 1e3 < r.slot_duration_us) ok = false;
    if (!ok)
      throw ConfigError(where("sweep_values") + "sweep value " + fmt(v) + " is invalid for " +
                        axis_name(spec.preset));
  }
}

}  // namespace

ExperimentSpec parse_config(std::string_view text, std::string_view origin) {
  ExperimentSpec spec;
  std::map<std::string, int> seen;
  const std::string org(origin);
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view raw = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(raw.substr(0, hash));
    if (line.empty()) continue;
    const std::string at = org + ":" + std::to_string(line_no) + ": ";
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(at + "expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(at + "missing key");
    const Key* k = find_key(key);
    if (!k) throw ConfigError(at + "unknown key '" + key + "'");
    if (auto it = seen.find(key); it != seen.end())
      throw ConfigError(at + "duplicate key '" + key + "' (first set on line " + std::to_string(it->second) +
                        ", again on line " + std::to_string(line_no) + ")");
    seen[key] = line_no;
    if (value.empty()) throw ConfigError(at + key + ": missing value");
    try {
      k->set(spec, value);
    } catch (const ConfigError& e) {
      throw ConfigError(at + key + ": " + e.what());
    }
  }
  cross_check(spec, [&](const char* key) {
    if (key) {
      if (auto it = seen.find(key); it != seen.end()) return org + ":" + std::to_string(it->second) + ": ";
      if (std::string_view(key) == "slot_duration_us")
        if (auto it = seen.find("subcarrier_spacing_khz"); it != seen.end())
          return org + ":" + std::to_string(it->second) + ": ";
    }
    return org + ": ";
  });
  return spec;
}

ExperimentSpec load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

void validate_spec(const ExperimentSpec& spec) {
  cross_check(spec, [](const char*) { return std::string(); });
}

std::vector<std::pair<std::string, std::string>> resolved_config(const ExperimentSpec& spec) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& k : keys())
    if (k.recorded) out.emplace_back(k.name, k.get(spec));
  return out;
}

std::uint64_t config_hash(const ExperimentSpec& spec) {
  std::uint64_t h = 14695981039346656037ull;
  for (const auto& [k, v] : resolved_config(spec)) {
    for (unsigned char c : k + "=" + v + "\n") {
      h ^= c;
      h *= 1099511628211ull;
    }
  }
  return h;
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "preset", "axis",     "axis_value", "psfch",    "k_g",      "lambda_g_per_s", "capacity_per_s",
      "is_best_k", "plr_b", "plr_b_lo",   "plr_b_hi", "plr_b_n",  "plr_g",          "plr_g_lo",
      "plr_g_hi", "plr_g_n", "occupancy", "seeds",    "status"};
  return cols;
}

namespace {

std::string fmt_p(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string seeds_text(const std::vector<std::uint64_t>& seeds) {
  return join<std::uint64_t>(seeds, [](const std::uint64_t& x) { return std::to_string(x); }, ";");
}

nlohmann::ordered_json row_json(const ResultRow& r) {
  nlohmann::ordered_json j;
  j["preset"] = r.preset;
  j["axis"] = r.axis;
  j["axis_value"] = r.axis_value;
  j["psfch"] = r.psfch;
  j["k_g"] = r.k_g;
  j["lambda_g_per_s"] = r.lambda_g;
  j["capacity_per_s"] = r.capacity ? nlohmann::ordered_json(*r.capacity) : nlohmann::ordered_json(nullptr);
  j["is_best_k"] = r.is_best_k;
  auto plr = [&](const char* prefix, const PlrEstimate& e) {
    const std::string p(prefix);
    if (e.empty()) {
      j[p] = nullptr;
      j[p + "_lo"] = nullptr;
      j[p + "_hi"] = nullptr;
    } else {
      j[p] = e.point;
      j[p + "_lo"] = e.lo;
      j[p + "_hi"] = e.hi;
    }
    j[p + "_n"] = e.samples;
  };
  plr("plr_b", r.plr_b);
  plr("plr_g", r.plr_g);
  j["occupancy"] = r.occupancy;
  j["seeds"] = r.seeds;
  j["status"] = r.status;
  return j;
}

}  // namespace

std::string csv_line(const ResultRow& r) {
  std::string s;
  auto add = [&](const std::string& v) { s += (s.empty() ? "" : ",") + v; };
  auto plr = [&](const PlrEstimate& e) {
    add(e.empty() ? "" : fmt_p(e.point));
    add(e.empty() ? "" : fmt_p(e.lo));
    add(e.empty() ? "" : fmt_p(e.hi));
    add(std::to_string(e.samples));
  };
  add(r.preset);
  add(r.axis);
  add(fmt(r.axis_value));
  add(r.psfch ? "on" : "off");
  add(std::to_string(r.k_g));
  add(fmt(r.lambda_g));
  add(r.capacity ? fmt(*r.capacity) : "");
  add(r.is_best_k ? "1" : "0");
  plr(r.plr_b);
  plr(r.plr_g);
  add(fmt_p(r.occupancy));
  add(seeds_text(r.seeds));
  add(r.status);
  return s;
}

std::string jsonl_line(const ResultRow& row) { return row_json(row).dump(); }

bool row_less(const ResultRow& a, const ResultRow& b) {
  if (a.axis_value != b.axis_value) return a.axis_value < b.axis_value;
  if (a.psfch != b.psfch) return !a.psfch;
  if (a.k_g != b.k_g) return a.k_g < b.k_g;
  return a.lambda_g < b.lambda_g;
}

std::vector<ResultRow> evaluate_point(const ExperimentSpec& spec, double axis_value, const RunControl& control) {
  ScenarioConfig cfg = spec.base;
  apply_axis(spec.preset, axis_value, cfg);
  SearchOptions opts = spec.search;
  std::vector<ResultRow> rows;
  auto make_row = [&](bool psfch) {
    ResultRow r;
    r.preset = to_string(spec.preset);
    r.axis = axis_name(spec.preset);
    r.axis_value = axis_value;
    r.psfch = psfch;
    r.seeds = opts.seeds;
    return r;
  };
  auto say = [&](const std::string& msg) {
    if (control.log && control.verbosity > 0) *control.log << msg << '\n' << std::flush;
  };

  for (bool psfch : spec.resolved_modes()) {
    cfg.psfch_enabled = psfch;
    const int k_max = max_attempts(cfg.latency_budget_ms, cfg.radio.slot_duration_us, cfg.ack_delay_ms, psfch);
    if (spec.preset == Preset::SingleRun || spec.preset == Preset::PlrCurves) {
      SearchOptions fixed = opts;
      fixed.fixed_duration_s = cfg.sim_duration_s;
      std::vector<int> ks;
      if (spec.preset == Preset::PlrCurves && !opts.k_candidates.empty()) {
        for (int k : opts.k_candidates)
          if (k <= k_max) ks.push_back(k);
      } else {
        ks.push_back(std::min(cfg.k_g, k_max));
      }
      for (int k : ks) {
        const ProbeResult p = evaluate_probe(cfg, k, cfg.lambda_g, fixed);
        ResultRow r = make_row(psfch);
        r.k_g = k;
        r.lambda_g = cfg.lambda_g;
        r.plr_b = p.plr_b;
        r.plr_g = p.plr_g;
        r.occupancy = p.occupancy;
        r.status = p.pass ? "ok" : "qos-violated";
        say(std::string(r.axis) + "=" + fmt(axis_value) + " psfch=" + (psfch ? "on" : "off") +
            " k_g=" + std::to_string(k) + " plr_b=" + fmt_p(p.plr_b.point) + " plr_g=" + fmt_p(p.plr_g.point));
        rows.push_back(std::move(r));
      }
    } else {
      const CapacityResult cap = capacity_search(cfg, cfg.lambda_b, psfch, opts);
      for (const auto& c : cap.candidates) {
        ResultRow r = make_row(psfch);
        r.k_g = c.k_g;
        r.lambda_g = c.at_capacity.lambda_g;
        r.capacity = c.capacity;
        r.is_best_k = cap.capacity > 0 && c.k_g == cap.best_k_g;
        r.plr_b = c.at_capacity.plr_b;
        r.plr_g = c.at_capacity.plr_g;
        r.occupancy = c.at_capacity.occupancy;
        r.status = !cap.baseline.pass ? "zero-capacity" : c.unstable ? "unstable" : "ok";
        rows.push_back(std::move(r));
      }
      say(std::string(axis_name(spec.preset)) + "=" + fmt(axis_value) + " psfch=" + (psfch ? "on" : "off") +
          " capacity=" + fmt(cap.capacity) + " best_k_g=" + std::to_string(cap.best_k_g) +
          (cap.diagnostic.empty() ? "" : " (" + cap.diagnostic + ")"));
    }
    if (control.trace && spec.preset == Preset::SingleRun) {
      ScenarioConfig tc = cfg;
      tc.seed = opts.seeds.front();
      std::ofstream trace(spec.output_path + (psfch ? ".psfch" : "") + ".trace", std::ios::binary);
      RunOptions ro;
      ro.trace = &trace;
      const Scenario sc = make_scenario(tc);
      (void)run(tc, sc.topology, sc.schedule, ro);
    }
  }
  std::sort(rows.begin(), rows.end(), row_less);
  return rows;
}

namespace {

std::vector<std::string> header_lines(const ExperimentSpec& spec) {
  std::vector<std::string> out;
  char hash[32];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(spec)));
  out.push_back("slsim " + version_string());
  out.push_back("preset: " + std::string(to_string(spec.preset)));
  out.push_back("config_hash: " + std::string(hash));
  out.push_back("master_seed: " + std::to_string(spec.base.seed));
  for (const auto& [k, v] : resolved_config(spec)) out.push_back("config: " + k + " = " + v);
  return out;
}

/// Axis values whose rows are already present in a compatible earlier
/// output, with those rows' raw lines.
std::pair<std::set<std::string>, std::vector<std::string>> previous_rows(const ExperimentSpec& spec,
                                                                         const std::vector<std::string>& header) {
  std::set<std::string> done;
  std::vector<std::string> lines;
  std::ifstream in(spec.output_path, std::ios::binary);
  if (!in) return {done, lines};
  std::string hash_line;
  for (const auto& h : header)
    if (h.rfind("config_hash: ", 0) == 0) hash_line = h;
  bool compatible = false;
  std::string line;
  const std::string csv_head = join<std::string>(csv_columns(), [](const std::string& x) { return x; });
  while (std::getline(in, line)) {
    if (spec.format == OutputFormat::Csv) {
      if (line.rfind("# ", 0) == 0) {
        if (line.substr(2) == hash_line) compatible = true;
        continue;
      }
      if (line == csv_head || line.empty()) continue;
      const auto a = line.find(',');
      const auto b = line.find(',', a + 1);
      const auto c = line.find(',', b + 1);
      if (c == std::string::npos) continue;
      done.insert(line.substr(b + 1, c - b - 1));
      lines.push_back(line);
    } else {
      const auto j = nlohmann::json::parse(line, nullptr, false);
      if (j.is_discarded()) continue;
      if (j.contains("meta")) {
        if (j["meta"].value("config_hash", "") == hash_line.substr(13)) compatible = true;
        continue;
      }
      if (!j.contains("axis_value")) continue;
      done.insert(fmt(j["axis_value"].get<double>()));
      lines.push_back(line);
    }
  }
  if (!compatible) return {{}, {}};
  return {done, lines};
}

}  // namespace

std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const RunControl& control) {
  validate_spec(spec);
  const auto header = header_lines(spec);
  std::set<std::string> done;
  std::vector<std::string> kept;
  if (control.resume) std::tie(done, kept) = previous_rows(spec, header);

  std::ofstream out(spec.output_path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error(spec.output_path + ": cannot open output file");
  if (spec.format == OutputFormat::Csv) {
    for (const auto& h : header) out << "# " << h << '\n';
    out << join<std::string>(csv_columns(), [](const std::string& x) { return x; }) << '\n';
  } else {
    nlohmann::ordered_json meta;
    meta["version"] = version_string();
    meta["preset"] = to_string(spec.preset);
    meta["config_hash"] = header[2].substr(13);
    meta["master_seed"] = spec.base.seed;
    nlohmann::ordered_json cfg;
    for (const auto& [k, v] : resolved_config(spec)) cfg[k] = v;
    meta["config"] = cfg;
    out << nlohmann::ordered_json{{"meta", meta}}.dump() << '\n';
  }
  for (const auto& l : kept) out << l << '\n';
  out.flush();

  std::vector<ResultRow> all;
  for (double v : spec.resolved_sweep()) {
    if (done.count(fmt(v))) continue;
    std::vector<ResultRow> rows;
    try {
      rows = evaluate_point(spec, v, control);
    } catch (...) {
      if (spec.format == OutputFormat::Csv)
        out << "# incomplete: resume_from " << axis_name(spec.preset) << " = " << fmt(v) << '\n';
      else
        out << nlohmann::ordered_json{{"incomplete", {{"resume_from", v}}}}.dump() << '\n';
      out.flush();
      throw;
    }
    for (const auto& r : rows) out << (spec.format == OutputFormat::Csv ? csv_line(r) : jsonl_line(r)) << '\n';
    out.flush();
    if (!out) throw std::runtime_error(spec.output_path + ": write failed");
    all.insert(all.end(), rows.begin(), rows.end());
  }
  return all;
}

}  // namespace slsim
