#include <cstdio>
#include <exception>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mnpapr/harness.hpp"

using namespace mnpapr;

namespace {

constexpr int kOk = 0;
constexpr int kConfigError = 1;
constexpr int kRuntimeError = 2;

ExperimentConfig resolve(const std::string& path, const std::string& preset) {
  ExperimentConfig base = preset.empty() ? ExperimentConfig{} : preset_config(preset);
  return load_config(path, base);
}

void print_summary(const RunResult& r) {
  std::cout << std::fixed << std::setprecision(3);
  std::cout << "waveform " << to_string(r.config.waveform) << ", method "
            << to_string(r.config.method) << ", " << r.symbols.size() << " symbols\n";
  std::vector<double> before, after;
  for (const SymbolRecord& s : r.symbols) {
    before.push_back(s.papr_before_db);
    after.push_back(s.papr_after_db);
  }
  std::cout << "PAPR at CCDF 1e-3: before " << papr_at_probability(before, 1e-3) << " dB, after "
            << papr_at_probability(after, 1e-3) << " dB\n";
  if (r.evm) {
    std::cout << "RMS EVM composite " << r.evm->composite_db << " dB";
    for (std::size_t i = 0; i < r.evm->subband_db.size(); ++i) {
      std::cout << ", subband " << i + 1 << ' ' << r.evm->subband_db[i] << " dB";
    }
    std::cout << '\n';
  }
  for (const StageTiming& t : r.timings) {
    std::cout << "time " << t.stage << ' ' << std::setprecision(4) << t.seconds << " s\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mixed-numerology OFDM PAPR reduction experiments"};
  app.require_subcommand(1);

  std::string run_path, out_dir = "results", preset;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  auto* run = app.add_subcommand("run", "run an experiment and write CSV results");
  run->add_option("config", run_path, "config file (key = value lines)")->required();
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--preset", preset, "start from a named preset before applying the file");
  run->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

  auto* list = app.add_subcommand("list-presets", "list the built-in presets");

  std::string validate_path, validate_preset;
  auto* validate = app.add_subcommand("validate", "parse and validate a config file");
  validate->add_option("config", validate_path, "config file")->required();
  validate->add_option("--preset", validate_preset, "start from a named preset");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  if (*list) {
    for (const Preset& p : presets()) {
      std::cout << std::left << std::setw(26) << p.name << p.description << '\n';
    }
    return kOk;
  }

  if (*validate) {
    try {
      const ExperimentConfig c = resolve(validate_path, validate_preset);
      char hash[17];
      std::snprintf(hash, sizeof hash, "%016llx",
                    static_cast<unsigned long long>(config_hash(c)));
      std::cout << "ok " << hash << '\n' << serialize(c);
      return kOk;
    } catch (const ConfigError& e) {
      std::cerr << validate_path << ": " << e.what() << '\n';
      return kConfigError;
    }
  }

  ExperimentConfig config;
  try {
    config = resolve(run_path, preset);
    if (seed) config.seed = *seed;
    if (workers) config.workers = *workers;
    config.validate();
  } catch (const ConfigError& e) {
    std::cerr << run_path << ": " << e.what() << '\n';
    return kConfigError;
  }

  try {
    const RunResult result = run_experiment(config);
    const auto files = emit_results(result, out_dir);
    print_summary(result);
    for (const auto& f : files) std::cout << "wrote " << f.string() << '\n';
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kOk;
}
