#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "slsim/metrics.hpp"
#include "slsim/scenario.hpp"

namespace slsim {

enum class Preset { PlrCurves, CapacityVsLambdaB, CapacityVsPlatoonSize, CapacityVsLatency, SingleRun };
enum class OutputFormat { Csv, Jsonl };

const char* to_string(Preset p);
std::optional<Preset> parse_preset(std::string_view name);

/// Name of the swept quantity in output rows ("lambda_b_per_s", ...).
const char* axis_name(Preset p);
std::vector<double> default_sweep(Preset p);

/// Raised for any invalid configuration; `what()` starts with
/// "<origin>:<line>: " when the problem can be tied to a line.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentSpec {
  Preset preset = Preset::SingleRun;
  ScenarioConfig base;
  /// Empty means the preset's default sweep.
  std::vector<double> sweep_values;
  /// PSFCH modes to evaluate; empty means both for capacity presets and
  /// the base config's setting for the others.
  std::vector<bool> psfch_modes;
  SearchOptions search;
  std::string output_path = "results.csv";
  OutputFormat format = OutputFormat::Csv;

  std::vector<double> resolved_sweep() const;
  std::vector<bool> resolved_modes() const;
};

/// Parses flat `key = value` text. Blank lines and `#` comments are
/// ignored. Unset keys keep their defaults.
ExperimentSpec parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentSpec load_config(const std::string& path);

/// Re-checks cross-field constraints after command-line overrides.
void validate_spec(const ExperimentSpec& spec);

/// Every configurable key with its resolved value, in canonical order.
std::vector<std::pair<std::string, std::string>> resolved_config(const ExperimentSpec& spec);

/// FNV-1a over the canonical resolved config text.
std::uint64_t config_hash(const ExperimentSpec& spec);

struct ResultRow {
  std::string preset;
  std::string axis;
  double axis_value = 0.0;
  bool psfch = false;
  int k_g = 0;
  double lambda_g = 0.0;
  std::optional<double> capacity;
  bool is_best_k = false;
  PlrEstimate plr_b;
  PlrEstimate plr_g;
  double occupancy = 0.0;
  std::vector<std::uint64_t> seeds;
  std::string status = "ok";
};

const std::vector<std::string>& csv_columns();
std::string csv_line(const ResultRow& row);
std::string jsonl_line(const ResultRow& row);

/// Strict ordering used for output: axis value, PSFCH mode, K_g, lambda_g.
bool row_less(const ResultRow& a, const ResultRow& b);

struct RunControl {
  int verbosity = 0;
  std::ostream* log = nullptr;
  /// Write the per-slot engine trace of single runs next to the output.
  bool trace = false;
  /// Keep rows of sweep values already present in a previous output
  /// produced from the same config.
  bool resume = false;
};

/// Runs the preset and writes the output file. Rows for each sweep value
/// are flushed as soon as the value completes; on failure a
/// `# incomplete` marker naming the next sweep value is appended before
/// the exception propagates.
std::vector<ResultRow> run_experiment(const ExperimentSpec& spec, const RunControl& control = {});

/// Rows for a single sweep value, without touching the filesystem.
std::vector<ResultRow> evaluate_point(const ExperimentSpec& spec, double axis_value,
                                      const RunControl& control = {});

std::string version_string();

}  // namespace slsim
