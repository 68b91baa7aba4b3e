#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mnpapr/admm.hpp"
#include "mnpapr/metrics.hpp"
#include "mnpapr/waveform.hpp"

namespace mnpapr {

class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::size_t line, const std::string& message);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

enum class Waveform { ofdm, fofdm, wofdm };
enum class Method { none, icf, nsicf, oadmm, cuadmm };

const char* to_string(Waveform w);
const char* to_string(Method m);

struct ExperimentConfig {
  // plan
  std::vector<int> scale_exponents{0, 1};
  std::vector<std::size_t> subcarriers{56, 28};
  std::vector<long> guards{8};
  std::size_t oversampling = 4;
  std::vector<double> eta{1.0, 1.0};
  double cp_fraction = 0.07;

  // method
  Waveform waveform = Waveform::ofdm;
  Method method = Method::none;
  double cr_db = 5.0;
  std::size_t n_exec = 1;
  double rho = 0.25;
  std::size_t max_iters = 10;
  double primal_tol = -1.0;
  std::size_t filter_taps = 128;
  double filter_rolloff = 0.25;
  double window_beta = 0.04;

  // batch
  std::size_t symbol_count = 5000;
  std::uint64_t seed = 1;
  std::size_t batch_size = 50;
  std::size_t workers = 1;

  // outputs
  bool out_ccdf = true;
  bool out_evm = true;
  bool out_psd = false;
  bool out_convergence = false;
  bool out_trace = false;
  bool out_symbols = true;
  double ccdf_lo_db = 0.0;
  double ccdf_hi_db = 13.0;
  double ccdf_step_db = 0.05;
  std::size_t psd_nfft = 4096;

  // amplifier
  bool sspa = false;
  double sspa_p = 3.0;
  double sspa_ibo_db = 5.0;

  std::string preset;  // name of the preset this config started from, if any

  PlanRequest plan_request() const;
  AdmmConfig admm_config() const;
  // Throws ConfigError (line 0) naming the first violated invariant.
  void validate() const;

  bool operator==(const ExperimentConfig&) const = default;
};

// Applies `key = value` lines on top of base. Unknown keys, malformed values
// and invariant violations are reported with their line number.
ExperimentConfig parse_config(const std::string& text, ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base = {});
std::string serialize(const ExperimentConfig& config);
std::uint64_t config_hash(const ExperimentConfig& config);

struct Preset {
  std::string name;
  std::string description;
  std::string overrides;  // config text applied on top of the defaults
};

const std::vector<Preset>& presets();
// Throws ConfigError for unknown names.
ExperimentConfig preset_config(const std::string& name);

struct SymbolRecord {
  std::size_t index = 0;
  double papr_before_db = 0.0;
  double papr_after_db = 0.0;
  std::optional<EvmReport> evm;
  std::size_t iterations = 0;
  double first_residual = 0.0;
  double last_residual = 0.0;
};

struct StageTiming {
  std::string stage;
  double seconds = 0.0;
};

struct RunResult {
  ExperimentConfig config;
  NumerologyPlan plan;
  std::vector<SymbolRecord> symbols;
  CcdfCurve ccdf_before;
  CcdfCurve ccdf_after;
  std::optional<RmsEvm> evm;
  std::optional<PsdEstimate> psd;
  std::vector<IterRecord> convergence;  // first symbol
  TimeSignal trace_before;              // first symbol
  TimeSignal trace_after;
  std::vector<StageTiming> timings;
};

RunResult run_experiment(const ExperimentConfig& config);

// Writes the requested CSV files and manifest.json; returns the paths written.
std::vector<std::filesystem::path> emit_results(const RunResult& result,
                                                const std::filesystem::path& out_dir);
std::string manifest_json(const RunResult& result);

}  // namespace mnpapr
