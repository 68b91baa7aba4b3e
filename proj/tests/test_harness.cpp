#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <doctest.h>
#include <json.hpp>

#include "mnpapr/harness.hpp"

using namespace mnpapr;
namespace fs = std::filesystem;

namespace {

std::size_t error_line(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.line();
  }
  return 0;
}

std::string error_text(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("mnpapr_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

ExperimentConfig quick(const std::string& preset, std::size_t symbols) {
  ExperimentConfig c = preset_config(preset);
  c.symbol_count = symbols;
  c.batch_size = 7;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MNPAPR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("empty config gives the reference defaults") {
  const ExperimentConfig c = parse_config("");
  CHECK(c == ExperimentConfig{});
  CHECK(c.subcarriers == std::vector<std::size_t>{56, 28});
  CHECK(c.guards == std::vector<long>{8});
  CHECK(c.oversampling == 4);
  CHECK(c.rho == 0.25);
  CHECK(c.cr_db == 5.0);
  CHECK(c.symbol_count == 5000);
  CHECK(c.cp_fraction == 0.07);
  CHECK(parse_config("# only a comment\n\n   \n") == ExperimentConfig{});
}

TEST_CASE("config errors carry line numbers") {
  CHECK(error_line("rho = -1\n") == 1);
  CHECK(error_text("rho = -1\n").find("rho must be > 0") != std::string::npos);
  CHECK(error_line("method = oadmm\n\nbogus = 3\n") == 3);
  CHECK(error_text("bogus = 3").find("unknown key 'bogus'") != std::string::npos);
  CHECK(error_line("seed = 1\nrho = fast\n") == 2);
  CHECK(error_line("symbol_count = -4\n") == 1);
  CHECK(error_line("oversampling = 3\n") == 1);
  CHECK(error_line("no equals sign here\n") == 1);
  CHECK(error_line("method = none\nsubcarriers = 56\n") == 2);
  CHECK(error_line("waveform = fofdm\nmethod = oadmm\n") == 2);
  CHECK(error_line("guards = 3\n") == 1);
  CHECK(error_line("waveform = wofdm\nwindow_beta = 0.2\n") == 2);
  CHECK(error_line("outputs = ccdf,plots\n") == 1);
  CHECK(error_line("preset = nope\n") == 1);
  CHECK_THROWS_AS(preset_config("nope"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/path.cfg"), ConfigError);
}

TEST_CASE("serialize round trip") {
  ExperimentConfig c = parse_config("method = cuadmm\nrho = 0.125\nscale_exponents = 0,2\n"
                                    "subcarriers = 40,10\nguards = 12\noutputs = psd,evm\n"
                                    "sspa = on\nsspa_ibo_db = 3.5\ncr_db = 4.3\n");
  CHECK(parse_config(serialize(c)) == c);
  for (const Preset& p : presets()) {
    const ExperimentConfig pc = preset_config(p.name);
    ExperimentConfig back = parse_config(serialize(pc));
    back.preset = pc.preset;
    CHECK(back == pc);
  }
}

TEST_CASE("presets cover every figure and table") {
  for (const char* name :
       {"default", "table3_icf", "table3_nsicf", "table3_oadmm", "table3_cuadmm", "fig4_trace_icf",
        "fig5_trace_nsicf", "fig5_trace_oadmm", "fig5_trace_cuadmm", "fig6_convergence_oadmm",
        "fig6_convergence_cuadmm", "fig8_original", "fig8_icf", "fig8_nsicf", "fig8_oadmm",
        "fig8_cuadmm", "fig9_nsicf_x6", "fig9_nsicf_x12", "fig9_oadmm_x1", "fig9_oadmm_x2",
        "fig10_fofdm_nsicf", "fig10_wofdm_cuadmm", "fig11_fofdm_baseline", "fig11_fofdm_nsicf",
        "fig12_wofdm_baseline", "fig12_wofdm_cuadmm"}) {
    CHECK_NOTHROW(preset_config(name));
  }
  const ExperimentConfig c = parse_config("preset = fig9_nsicf_x6\nseed = 9\n");
  CHECK(c.method == Method::nsicf);
  CHECK(c.n_exec == 6);
  CHECK(c.seed == 9);
  CHECK(c.preset == "fig9_nsicf_x6");
}

TEST_CASE("config hash ignores the worker count") {
  ExperimentConfig a = preset_config("table3_oadmm");
  ExperimentConfig b = a;
  b.workers = 4;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 2;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("no-reduction run leaves the PAPR untouched") {
  ExperimentConfig c;
  c.symbol_count = 1;
  const RunResult r = run_experiment(c);
  REQUIRE(r.symbols.size() == 1);
  CHECK(r.symbols[0].papr_before_db == r.symbols[0].papr_after_db);
  CHECK(r.evm->composite_db == kDbFloor);
  CHECK(r.trace_before == r.trace_after);
}

TEST_CASE("every method runs and records one entry per symbol") {
  for (const char* name : {"table3_icf", "table3_nsicf", "table3_oadmm", "table3_cuadmm",
                           "fig9_oadmm_x2", "fig10_fofdm_nsicf", "fig10_wofdm_cuadmm",
                           "fig11_fofdm_baseline", "fig12_wofdm_cuadmm"}) {
    const ExperimentConfig c = quick(name, 12);
    const RunResult r = run_experiment(c);
    CHECK(r.symbols.size() == 12);
    for (std::size_t k = 0; k < 12; ++k) CHECK(r.symbols[k].index == k);
    if (c.method == Method::cuadmm) {
      for (const SymbolRecord& s : r.symbols) CHECK(s.papr_after_db <= c.cr_db + 0.05);
    }
    if (c.method != Method::none && c.waveform != Waveform::fofdm) CHECK(r.evm.has_value());
  }
  const RunResult f = run_experiment(quick("fig10_fofdm_nsicf", 3));
  CHECK(f.trace_after.size() == 548 + 127);
  const RunResult w = run_experiment(quick("fig12_wofdm_baseline", 3));
  CHECK(w.trace_after.size() == 570);
  CHECK(w.psd.has_value());
}

TEST_CASE("cu-admm preset cuts the ccdf at the clipping ratio") {
  const RunResult r = run_experiment(quick("fig8_cuadmm", 200));
  std::vector<double> after;
  for (const auto& s : r.symbols) after.push_back(s.papr_after_db);
  CHECK(exceedance(after, 5.05) <= 1e-3);
}

TEST_CASE("convergence preset records twenty iterations") {
  const RunResult r = run_experiment(quick("fig6_convergence_oadmm", 2));
  REQUIRE(r.convergence.size() == 20);
  CHECK(r.convergence[19].primal_residual < r.convergence[0].primal_residual);
}

TEST_CASE("results are identical for any worker count") {
  ExperimentConfig c = quick("fig12_wofdm_cuadmm", 30);
  c.out_symbols = true;
  const RunResult one = run_experiment(c);
  c.workers = 3;
  const RunResult three = run_experiment(c);
  const fs::path d1 = scratch("w1"), d3 = scratch("w3");
  const auto files1 = emit_results(one, d1);
  const auto files3 = emit_results(three, d3);
  REQUIRE(files1.size() == files3.size());
  for (std::size_t k = 0; k < files1.size(); ++k) {
    CHECK(files1[k].filename() == files3[k].filename());
    CHECK(slurp(files1[k]) == slurp(files3[k]));
  }
  fs::remove_all(d1);
  fs::remove_all(d3);
}

TEST_CASE("emitted files are consistent") {
  ExperimentConfig c = quick("table3_nsicf", 40);
  c.out_psd = true;
  c.out_trace = true;
  const RunResult r = run_experiment(c);
  const fs::path d = scratch("emit");
  emit_results(r, d);
  const fs::path d2 = scratch("emit2");
  emit_results(r, d2);
  for (const char* f : {"ccdf.csv", "ccdf_original.csv", "evm.csv", "psd.csv", "trace.csv", "symbols.csv",
                        "manifest.json"}) {
    REQUIRE(fs::exists(d / f));
    CHECK(slurp(d / f) == slurp(d2 / f));
  }

  std::istringstream ccdf_in(slurp(d / "ccdf.csv"));
  std::string line;
  std::getline(ccdf_in, line);
  CHECK(line == "threshold_db,ccdf");
  double prev = 1.0;
  while (std::getline(ccdf_in, line)) {
    const double p = std::stod(line.substr(line.find(',') + 1));
    CHECK(p <= prev);
    prev = p;
  }

  std::istringstream sym_in(slurp(d / "symbols.csv"));
  std::getline(sym_in, line);
  CHECK(line == "index,papr_before_db,papr_after_db,iterations,evm_composite,evm_sb1,evm_sb2");
  double acc = 0.0;
  std::size_t rows = 0;
  while (std::getline(sym_in, line)) {
    std::istringstream fields(line);
    std::string cell;
    for (int k = 0; k < 5; ++k) std::getline(fields, cell, ',');
    const double e = std::stod(cell);
    acc += e * e;
    ++rows;
  }
  CHECK(rows == 40);
  const auto manifest = nlohmann::json::parse(slurp(d / "manifest.json"));
  CHECK(manifest["method"] == "nsicf");
  CHECK(manifest["symbol_count"] == 40);
  CHECK(manifest["files"].size() == 6);
  const double recomputed = 20.0 * std::log10(std::sqrt(acc / double(rows)));
  CHECK(manifest["aggregates"]["rms_evm_composite_db"].get<double>() == doctest::Approx(recomputed).epsilon(1e-12));
  fs::remove_all(d);
  fs::remove_all(d2);
}

TEST_CASE("command line exit codes") {
  const fs::path d = scratch("cli");
  {
    std::ofstream(d / "ok.cfg") << "preset = table3_cuadmm\nsymbol_count = 3\n";
    std::ofstream(d / "bad.cfg") << "method = oadmm\nrho = -1\n";
    std::ofstream(d / "fail.cfg") << "symbol_count = 2\n";
  }
  CHECK(run_cli("list-presets") == 0);
  CHECK(run_cli("validate " + (d / "ok.cfg").string()) == 0);
  CHECK(run_cli("validate " + (d / "bad.cfg").string()) == 1);
  CHECK(run_cli("validate " + (d / "missing.cfg").string()) == 1);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("run " + (d / "ok.cfg").string() + " --out " + (d / "out").string() + " --seed 5 --workers 2") == 0);
  CHECK(fs::exists(d / "out" / "manifest.json"));
  CHECK(run_cli("run " + (d / "bad.cfg").string() + " --out " + (d / "out2").string()) == 1);
  {
    std::ofstream(d / "blocker") << "x";
  }
  CHECK(run_cli("run " + (d / "fail.cfg").string() + " --out " + (d / "blocker" / "sub").string()) == 2);
  fs::remove_all(d);
}
