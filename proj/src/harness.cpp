#include "mnpapr/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "mnpapr/clipfilter.hpp"

namespace mnpapr {

ConfigError::ConfigError(std::size_t line, const std::string& message)
    : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + message : message),
      line_(line) {}

const char* to_string(Waveform w) {
  switch (w) {
    case Waveform::ofdm: return "ofdm";
    case Waveform::fofdm: return "fofdm";
    case Waveform::wofdm: return "wofdm";
  }
  return "?";
}

const char* to_string(Method m) {
  switch (m) {
    case Method::none: return "none";
    case Method::icf: return "icf";
    case Method::nsicf: return "nsicf";
    case Method::oadmm: return "oadmm";
    case Method::cuadmm: return "cuadmm";
  }
  return "?";
}

namespace {

using LineMap = std::map<std::string, std::size_t>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
T parse_number(const std::string& key, const std::string& v, std::size_t line) {
  T out{};
  const char* first = v.data();
  const char* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || v.empty()) {
    throw ConfigError(line, "'" + key + "' expects " +
                                (std::is_floating_point_v<T> ? "a number" : "an integer") +
                                ", got '" + v + "'");
  }
  return out;
}

std::size_t parse_count(const std::string& key, const std::string& v, std::size_t line) {
  if (!v.empty() && v.front() == '-') {
    throw ConfigError(line, "'" + key + "' expects a non-negative integer, got '" + v + "'");
  }
  return parse_number<std::size_t>(key, v, line);
}

bool parse_bool(const std::string& key, const std::string& v, std::size_t line) {
  if (v == "on" || v == "true" || v == "yes" || v == "1") return true;
  if (v == "off" || v == "false" || v == "no" || v == "0") return false;
  throw ConfigError(line, "'" + key + "' expects on/off, got '" + v + "'");
}

template <typename T, typename F>
std::vector<T> parse_list(const std::string& v, F&& item) {
  std::vector<T> out;
  for (const std::string& s : split_list(v)) out.push_back(item(s));
  return out;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::size_t line_of(const LineMap& lines, const std::string& key) {
  const auto it = lines.find(key);
  return it == lines.end() ? 0 : it->second;
}

void check(bool ok, const LineMap& lines, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError(line_of(lines, key), message);
}

void validate_config(const ExperimentConfig& c, const LineMap& lines) {
  check(c.subcarriers.size() == c.scale_exponents.size(), lines, "subcarriers",
        "subcarriers must list one entry per scale exponent");
  check(c.guards.size() + 1 == c.scale_exponents.size(), lines, "guards",
        "guards must list one entry fewer than scale_exponents");
  check(c.eta.empty() || c.eta.size() == c.scale_exponents.size(), lines, "eta",
        "eta must list one entry per subband");
  check(c.cp_fraction >= 0.0 && c.cp_fraction < 1.0, lines, "cp_fraction",
        "cp_fraction must lie in [0, 1)");
  check(c.rho > 0.0, lines, "rho", "rho must be > 0");
  check(c.max_iters >= 1, lines, "max_iters", "max_iters must be >= 1");
  check(c.n_exec >= 1, lines, "n_exec", "n_exec must be >= 1");
  check(c.symbol_count >= 1, lines, "symbol_count", "symbol_count must be >= 1");
  check(c.batch_size >= 1, lines, "batch_size", "batch_size must be >= 1");
  check(c.workers >= 1, lines, "workers", "workers must be >= 1");
  check(c.filter_taps >= 1, lines, "filter_taps", "filter_taps must be >= 1");
  check(c.filter_rolloff >= 0.0 && c.filter_rolloff <= 1.0, lines, "filter_rolloff",
        "filter_rolloff must lie in [0, 1]");
  check(c.window_beta >= 0.0 && c.window_beta < 1.0, lines, "window_beta",
        "window_beta must lie in [0, 1)");
  check(c.ccdf_step_db > 0.0 && c.ccdf_hi_db >= c.ccdf_lo_db, lines, "ccdf_step_db",
        "ccdf grid needs ccdf_step_db > 0 and ccdf_hi_db >= ccdf_lo_db");
  check(is_power_of_two(c.psd_nfft), lines, "psd_nfft", "psd_nfft must be a power of two");
  check(c.sspa_p >= 1.0, lines, "sspa_p", "sspa_p must be >= 1");
  check(std::isfinite(c.cr_db), lines, "cr_db", "cr_db must be finite");
  check(c.waveform != Waveform::fofdm || c.method == Method::none || c.method == Method::nsicf,
        lines, "method", "the fofdm waveform supports method none or nsicf only");

  NumerologyPlan plan;
  try {
    plan = build_plan(c.plan_request());
  } catch (const std::invalid_argument& e) {
    std::size_t line = 0;
    for (const char* k : {"scale_exponents", "subcarriers", "guards", "oversampling", "eta",
                          "cp_fraction"}) {
      line = std::max(line, line_of(lines, k));
    }
    throw ConfigError(line, e.what());
  }
  if (c.waveform == Waveform::fofdm) {
    check(c.filter_taps <= plan.lcm_len, lines, "filter_taps",
          "filter_taps exceeds the LCM symbol length " + std::to_string(plan.lcm_len));
    check(plan.lcm_len + c.filter_taps - 1 <= c.psd_nfft || !c.out_psd, lines, "psd_nfft",
          "psd_nfft is shorter than the filtered symbol");
  } else {
    check(plan.lcm_len <= c.psd_nfft || !c.out_psd, lines, "psd_nfft",
          "psd_nfft is shorter than the LCM symbol");
  }
  if (c.waveform == Waveform::wofdm) {
    try {
      std::vector<WindowSpec> ws;
      for (std::size_t i = 0; i < plan.count(); ++i) ws.push_back(build_window(plan, i, c.window_beta));
      const OperatorSet ops = windowed_operators(plan, ws);
      check(ops.signal_len() <= c.psd_nfft || !c.out_psd, lines, "psd_nfft",
            "psd_nfft is shorter than the windowed symbol");
    } catch (const std::invalid_argument& e) {
      throw ConfigError(line_of(lines, "window_beta"), e.what());
    }
  }
}

void apply_key(ExperimentConfig& c, const std::string& key, const std::string& v,
               std::size_t line) {
  auto dbl = [&](const std::string& s) { return parse_number<double>(key, s, line); };
  if (key == "scale_exponents") {
    c.scale_exponents = parse_list<int>(v, [&](const std::string& s) {
      return parse_number<int>(key, s, line);
    });
  } else if (key == "subcarriers") {
    c.subcarriers = parse_list<std::size_t>(v, [&](const std::string& s) {
      return parse_count(key, s, line);
    });
  } else if (key == "guards") {
    c.guards = parse_list<long>(v, [&](const std::string& s) {
      return parse_number<long>(key, s, line);
    });
  } else if (key == "oversampling") {
    c.oversampling = parse_count(key, v, line);
    if (!is_power_of_two(c.oversampling)) throw ConfigError(line, "oversampling must be a power of two");
  } else if (key == "eta") {
    c.eta = parse_list<double>(v, dbl);
    for (double e : c.eta) {
      if (!(e > 0.0)) throw ConfigError(line, "eta entries must be > 0");
    }
  } else if (key == "cp_fraction") {
    c.cp_fraction = dbl(v);
    if (!(c.cp_fraction >= 0.0 && c.cp_fraction < 1.0)) {
      throw ConfigError(line, "cp_fraction must lie in [0, 1)");
    }
  } else if (key == "waveform") {
    if (v == "ofdm") c.waveform = Waveform::ofdm;
    else if (v == "fofdm") c.waveform = Waveform::fofdm;
    else if (v == "wofdm") c.waveform = Waveform::wofdm;
    else throw ConfigError(line, "waveform must be ofdm, fofdm or wofdm, got '" + v + "'");
  } else if (key == "method") {
    if (v == "none") c.method = Method::none;
    else if (v == "icf") c.method = Method::icf;
    else if (v == "nsicf") c.method = Method::nsicf;
    else if (v == "oadmm") c.method = Method::oadmm;
    else if (v == "cuadmm") c.method = Method::cuadmm;
    else throw ConfigError(line, "method must be none, icf, nsicf, oadmm or cuadmm, got '" + v + "'");
  } else if (key == "cr_db") {
    c.cr_db = dbl(v);
  } else if (key == "n_exec") {
    c.n_exec = parse_count(key, v, line);
    if (c.n_exec < 1) throw ConfigError(line, "n_exec must be >= 1");
  } else if (key == "rho") {
    c.rho = dbl(v);
    if (!(c.rho > 0.0)) throw ConfigError(line, "rho must be > 0, got " + v);
  } else if (key == "max_iters") {
    c.max_iters = parse_count(key, v, line);
    if (c.max_iters < 1) throw ConfigError(line, "max_iters must be >= 1");
  } else if (key == "primal_tol") {
    c.primal_tol = dbl(v);
  } else if (key == "filter_taps") {
    c.filter_taps = parse_count(key, v, line);
    if (c.filter_taps < 1) throw ConfigError(line, "filter_taps must be >= 1");
  } else if (key == "filter_rolloff") {
    c.filter_rolloff = dbl(v);
    if (!(c.filter_rolloff >= 0.0 && c.filter_rolloff <= 1.0)) {
      throw ConfigError(line, "filter_rolloff must lie in [0, 1]");
    }
  } else if (key == "window_beta") {
    c.window_beta = dbl(v);
    if (!(c.window_beta >= 0.0 && c.window_beta < 1.0)) {
      throw ConfigError(line, "window_beta must lie in [0, 1)");
    }
  } else if (key == "symbol_count") {
    c.symbol_count = parse_count(key, v, line);
    if (c.symbol_count < 1) throw ConfigError(line, "symbol_count must be >= 1");
  } else if (key == "seed") {
    c.seed = parse_count(key, v, line);
  } else if (key == "batch_size") {
    c.batch_size = parse_count(key, v, line);
    if (c.batch_size < 1) throw ConfigError(line, "batch_size must be >= 1");
  } else if (key == "workers") {
    c.workers = parse_count(key, v, line);
    if (c.workers < 1) throw ConfigError(line, "workers must be >= 1");
  } else if (key == "outputs") {
    c.out_ccdf = c.out_evm = c.out_psd = c.out_convergence = c.out_trace = c.out_symbols = false;
    for (const std::string& o : split_list(v)) {
      if (o == "ccdf") c.out_ccdf = true;
      else if (o == "evm") c.out_evm = true;
      else if (o == "psd") c.out_psd = true;
      else if (o == "convergence") c.out_convergence = true;
      else if (o == "trace") c.out_trace = true;
      else if (o == "symbols") c.out_symbols = true;
      else throw ConfigError(line, "unknown output '" + o +
                                       "' (expected ccdf, evm, psd, convergence, trace, symbols)");
    }
  } else if (key == "ccdf_lo_db") {
    c.ccdf_lo_db = dbl(v);
  } else if (key == "ccdf_hi_db") {
    c.ccdf_hi_db = dbl(v);
  } else if (key == "ccdf_step_db") {
    c.ccdf_step_db = dbl(v);
    if (!(c.ccdf_step_db > 0.0)) throw ConfigError(line, "ccdf_step_db must be > 0");
  } else if (key == "psd_nfft") {
    c.psd_nfft = parse_count(key, v, line);
    if (!is_power_of_two(c.psd_nfft)) throw ConfigError(line, "psd_nfft must be a power of two");
  } else if (key == "sspa") {
    c.sspa = parse_bool(key, v, line);
  } else if (key == "sspa_p") {
    c.sspa_p = dbl(v);
    if (!(c.sspa_p >= 1.0)) throw ConfigError(line, "sspa_p must be >= 1");
  } else if (key == "sspa_ibo_db") {
    c.sspa_ibo_db = dbl(v);
  } else {
    throw ConfigError(line, "unknown key '" + key + "'");
  }
}

ExperimentConfig parse_lines(const std::string& text, ExperimentConfig base, LineMap& lines) {
  std::istringstream is(text);
  std::string raw;
  std::size_t line = 0;
  while (std::getline(is, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string body = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw ConfigError(line, "expected 'key = value', got '" + body + "'");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    if (key.empty()) throw ConfigError(line, "missing key before '='");
    if (key == "preset") {
      try {
        base = preset_config(value);
      } catch (const ConfigError& e) {
        throw ConfigError(line, e.what());
      }
      lines.clear();
    } else {
      apply_key(base, key, value, line);
    }
    lines[key] = line;
  }
  return base;
}

// Everything one worker needs; immutable once built.
struct Engine {
  ExperimentConfig cfg;
  NumerologyPlan plan;
  std::optional<OperatorSet> ops;
  std::optional<FilteredOfdm> fofdm;
  AdmmConfig admm;
  SspaModel sspa;

  explicit Engine(const ExperimentConfig& c) : cfg(c), plan(build_plan(c.plan_request())) {
    admm = c.admm_config();
    sspa = SspaModel{c.sspa_p, c.sspa_ibo_db};
    if (c.waveform == Waveform::wofdm) {
      std::vector<WindowSpec> ws;
      for (std::size_t i = 0; i < plan.count(); ++i) ws.push_back(build_window(plan, i, c.window_beta));
      ops.emplace(windowed_operators(plan, ws));
    } else {
      ops.emplace(plan);
    }
    if (c.waveform == Waveform::fofdm) {
      std::vector<FilterSpec> fs;
      for (std::size_t i = 0; i < plan.count(); ++i) {
        fs.push_back(design_subband_filter(plan, i, c.filter_taps, c.filter_rolloff));
      }
      fofdm.emplace(plan, std::move(fs));
    }
  }

  struct Outcome {
    SymbolRecord record;
    TimeSignal before;
    TimeSignal after;
    std::vector<IterRecord> history;
  };

  Outcome process(std::size_t index) const {
    Outcome out;
    out.record.index = index;
    const SymbolSet x = gen_qpsk(cfg.seed, index, plan);
    std::optional<SymbolSet> xhat;

    if (fofdm) {
      out.before = fofdm->compose(x);
      out.after = cfg.method == Method::nsicf ? fofdm->ns_icf_run(x, cfg.cr_db, cfg.n_exec)
                                              : out.before;
    } else {
      out.before = ops->compose(x);
      switch (cfg.method) {
        case Method::none:
          out.after = out.before;
          xhat = x;
          break;
        case Method::icf: {
          IcfOutcome r = icf_run(x, *ops, cfg.cr_db, cfg.n_exec);
          out.after = std::move(r.signal);
          xhat = std::move(r.symbols);
          break;
        }
        case Method::nsicf: {
          IcfOutcome r = ns_icf_run(x, *ops, cfg.cr_db, cfg.n_exec);
          out.after = std::move(r.signal);
          xhat = std::move(r.symbols);
          break;
        }
        case Method::oadmm:
        case Method::cuadmm: {
          SymbolSet ref = x;
          for (std::size_t e = 0; e < cfg.n_exec; ++e) {
            AdmmResult r = run_admm(ref, *ops, admm);
            if (e == 0) {
              out.record.first_residual = r.history.front().primal_residual;
              out.history = r.history;
            }
            out.record.iterations += r.iterations;
            out.record.last_residual = r.history.back().primal_residual;
            out.after = std::move(r.zhat);
            ref = std::move(r.xhat);
          }
          xhat = std::move(ref);
          break;
        }
      }
    }
    out.record.papr_before_db = papr_db(out.before);
    out.record.papr_after_db = papr_db(out.after);
    if (xhat) out.record.evm = evm(x, *xhat, plan);
    return out;
  }

  std::size_t signal_len() const { return fofdm ? fofdm->signal_len() : ops->signal_len(); }
};

struct BatchResult {
  std::vector<SymbolRecord> records;
  std::optional<PsdAccumulator> psd;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

PlanRequest ExperimentConfig::plan_request() const {
  PlanRequest r;
  r.scale_exponents = scale_exponents;
  r.subcarriers = subcarriers;
  r.guards = guards;
  r.oversampling = oversampling;
  r.eta = eta;
  r.cp_fraction = cp_fraction;
  return r;
}

AdmmConfig ExperimentConfig::admm_config() const {
  AdmmConfig a;
  a.rho = rho;
  a.gamma = AdmmConfig::gamma_from_cr(cr_db);
  a.max_iters = max_iters;
  a.primal_tol = primal_tol;
  a.variant = method == Method::cuadmm ? AdmmVariant::constraint_update : AdmmVariant::original;
  a.record_evm = out_convergence;
  return a;
}

void ExperimentConfig::validate() const { validate_config(*this, {}); }

ExperimentConfig parse_config(const std::string& text, ExperimentConfig base) {
  LineMap lines;
  ExperimentConfig c = parse_lines(text, std::move(base), lines);
  validate_config(c, lines);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string serialize(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "scale_exponents = " << join(c.scale_exponents) << '\n'
     << "subcarriers = " << join(c.subcarriers) << '\n'
     << "guards = " << join(c.guards) << '\n'
     << "oversampling = " << c.oversampling << '\n'
     << "eta = " << join(c.eta) << '\n'
     << "cp_fraction = " << fmt_double(c.cp_fraction) << '\n'
     << "waveform = " << to_string(c.waveform) << '\n'
     << "method = " << to_string(c.method) << '\n'
     << "cr_db = " << fmt_double(c.cr_db) << '\n'
     << "n_exec = " << c.n_exec << '\n'
     << "rho = " << fmt_double(c.rho) << '\n'
     << "max_iters = " << c.max_iters << '\n'
     << "primal_tol = " << fmt_double(c.primal_tol) << '\n'
     << "filter_taps = " << c.filter_taps << '\n'
     << "filter_rolloff = " << fmt_double(c.filter_rolloff) << '\n'
     << "window_beta = " << fmt_double(c.window_beta) << '\n'
     << "symbol_count = " << c.symbol_count << '\n'
     << "seed = " << c.seed << '\n'
     << "batch_size = " << c.batch_size << '\n';
  std::vector<std::string> outs;
  if (c.out_ccdf) outs.push_back("ccdf");
  if (c.out_evm) outs.push_back("evm");
  if (c.out_psd) outs.push_back("psd");
  if (c.out_convergence) outs.push_back("convergence");
  if (c.out_trace) outs.push_back("trace");
  if (c.out_symbols) outs.push_back("symbols");
  os << "outputs = " << join(outs) << '\n'
     << "ccdf_lo_db = " << fmt_double(c.ccdf_lo_db) << '\n'
     << "ccdf_hi_db = " << fmt_double(c.ccdf_hi_db) << '\n'
     << "ccdf_step_db = " << fmt_double(c.ccdf_step_db) << '\n'
     << "psd_nfft = " << c.psd_nfft << '\n'
     << "sspa = " << (c.sspa ? "on" : "off") << '\n'
     << "sspa_p = " << fmt_double(c.sspa_p) << '\n'
     << "sspa_ibo_db = " << fmt_double(c.sspa_ibo_db) << '\n'
     << "workers = " << c.workers << '\n';
  return os.str();
}

std::uint64_t config_hash(const ExperimentConfig& c) {
  // Worker count does not affect results, so it stays out of the hash.
  ExperimentConfig h = c;
  h.workers = 1;
  const std::string text = serialize(h);
  std::uint64_t v = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    v ^= ch;
    v *= 0x100000001b3ULL;
  }
  return v;
}

const std::vector<Preset>& presets() {
  static const std::vector<Preset> table = {
      {"default", "plain OFDM mixed numerology, no PAPR reduction", "method = none\n"},
      {"table3_icf", "EVM batch, classical ICF, 1 execution",
       "method = icf\noutputs = ccdf,evm,symbols\n"},
      {"table3_nsicf", "EVM batch, NS-ICF, 1 execution",
       "method = nsicf\noutputs = ccdf,evm,symbols\n"},
      {"table3_oadmm", "EVM batch, O-ADMM, 10 iterations",
       "method = oadmm\noutputs = ccdf,evm,symbols\n"},
      {"table3_cuadmm", "EVM batch, CU-ADMM, 10 iterations",
       "method = cuadmm\noutputs = ccdf,evm,symbols\n"},
      {"fig4_trace_icf", "single-symbol magnitude trace, classical ICF",
       "method = icf\nsymbol_count = 1\noutputs = trace,evm\n"},
      {"fig5_trace_nsicf", "single-symbol magnitude trace, NS-ICF",
       "method = nsicf\nsymbol_count = 1\noutputs = trace,evm\n"},
      {"fig5_trace_oadmm", "single-symbol magnitude trace, O-ADMM",
       "method = oadmm\nsymbol_count = 1\noutputs = trace,evm\n"},
      {"fig5_trace_cuadmm", "single-symbol magnitude trace, CU-ADMM",
       "method = cuadmm\nsymbol_count = 1\noutputs = trace,evm\n"},
      {"fig6_convergence_oadmm", "objective and residual traces, O-ADMM, 20 iterations",
       "method = oadmm\nmax_iters = 20\nprimal_tol = 0\nsymbol_count = 100\n"
       "outputs = convergence,evm,symbols\n"},
      {"fig6_convergence_cuadmm", "objective and residual traces, CU-ADMM, 20 iterations",
       "method = cuadmm\nmax_iters = 20\nprimal_tol = 0\nsymbol_count = 100\n"
       "outputs = convergence,evm,symbols\n"},
      {"fig8_original", "PAPR CCDF without reduction", "method = none\noutputs = ccdf\n"},
      {"fig8_icf", "PAPR CCDF, classical ICF", "method = icf\noutputs = ccdf,evm\n"},
      {"fig8_nsicf", "PAPR CCDF, NS-ICF", "method = nsicf\noutputs = ccdf,evm\n"},
      {"fig8_oadmm", "PAPR CCDF, O-ADMM", "method = oadmm\noutputs = ccdf,evm\n"},
      {"fig8_cuadmm", "PAPR CCDF, CU-ADMM", "method = cuadmm\noutputs = ccdf,evm\n"},
      {"fig9_nsicf_x1", "PAPR CCDF, NS-ICF, 1 execution",
       "method = nsicf\nn_exec = 1\noutputs = ccdf,evm\n"},
      {"fig9_nsicf_x6", "PAPR CCDF, NS-ICF, 6 executions",
       "method = nsicf\nn_exec = 6\noutputs = ccdf,evm\n"},
      {"fig9_nsicf_x12", "PAPR CCDF, NS-ICF, 12 executions",
       "method = nsicf\nn_exec = 12\noutputs = ccdf,evm\n"},
      {"fig9_oadmm_x1", "PAPR CCDF, O-ADMM, 1 execution",
       "method = oadmm\nn_exec = 1\noutputs = ccdf,evm\n"},
      {"fig9_oadmm_x2", "PAPR CCDF, O-ADMM, 2 executions",
       "method = oadmm\nn_exec = 2\noutputs = ccdf,evm\n"},
      {"fig10_fofdm_nsicf", "PAPR CCDF, F-OFDM with NS-ICF, 12 executions",
       "waveform = fofdm\nmethod = nsicf\nn_exec = 12\noutputs = ccdf\n"},
      {"fig10_wofdm_cuadmm", "PAPR CCDF, W-OFDM with CU-ADMM",
       "waveform = wofdm\nmethod = cuadmm\noutputs = ccdf,evm\n"},
      {"fig11_fofdm_plain", "PSD of F-OFDM without amplifier",
       "waveform = fofdm\nmethod = none\noutputs = psd,ccdf\n"},
      {"fig11_fofdm_baseline", "PSD of F-OFDM through the SSPA, no PAPR reduction",
       "waveform = fofdm\nmethod = none\nsspa = on\noutputs = psd,ccdf\n"},
      {"fig11_fofdm_nsicf", "PSD of F-OFDM with NS-ICF (12 executions) through the SSPA",
       "waveform = fofdm\nmethod = nsicf\nn_exec = 12\nsspa = on\noutputs = psd,ccdf\n"},
      {"fig12_wofdm_plain", "PSD of W-OFDM without amplifier",
       "waveform = wofdm\nmethod = none\noutputs = psd,ccdf\n"},
      {"fig12_wofdm_baseline", "PSD of W-OFDM through the SSPA, no PAPR reduction",
       "waveform = wofdm\nmethod = none\nsspa = on\noutputs = psd,ccdf\n"},
      {"fig12_wofdm_cuadmm", "PSD of W-OFDM with CU-ADMM through the SSPA",
       "waveform = wofdm\nmethod = cuadmm\nsspa = on\noutputs = psd,ccdf,evm\n"},
  };
  return table;
}

ExperimentConfig preset_config(const std::string& name) {
  for (const Preset& p : presets()) {
    if (p.name == name) {
      LineMap lines;
      ExperimentConfig c = parse_lines(p.overrides, ExperimentConfig{}, lines);
      c.preset = name;
      validate_config(c, {});
      return c;
    }
  }
  throw ConfigError(0, "unknown preset '" + name + "' (see list-presets)");
}

RunResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  RunResult res;
  res.config = config;

  auto t0 = std::chrono::steady_clock::now();
  const Engine engine(config);
  res.plan = engine.plan;
  res.timings.push_back({"setup", seconds_since(t0)});

  const std::size_t n = config.symbol_count;
  const std::size_t bs = config.batch_size;
  const std::size_t n_batches = (n + bs - 1) / bs;
  std::vector<BatchResult> batches(n_batches);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  const bool want_psd = config.out_psd;
  const double rate = engine.plan.sample_rate_f1();

  Engine::Outcome first;
  auto work = [&]() {
    for (;;) {
      const std::size_t b = next.fetch_add(1);
      if (b >= n_batches) return;
      {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (failure) return;
      }
      BatchResult& br = batches[b];
      if (want_psd) br.psd.emplace(config.psd_nfft, rate);
      const std::size_t lo = b * bs;
      const std::size_t hi = std::min(n, lo + bs);
      std::size_t idx = lo;
      try {
        for (; idx < hi; ++idx) {
          Engine::Outcome o = engine.process(idx);
          if (want_psd) {
            br.psd->add(config.sspa ? sspa_apply(o.after, engine.sspa) : o.after);
          }
          br.records.push_back(o.record);
          if (idx == 0) first = std::move(o);
        }
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) {
          failure = std::make_exception_ptr(
              std::runtime_error("symbol " + std::to_string(idx) + ": " + e.what()));
        }
        return;
      }
    }
  };

  t0 = std::chrono::steady_clock::now();
  const std::size_t workers = std::min(config.workers, n_batches);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  res.timings.push_back({"symbols", seconds_since(t0)});

  t0 = std::chrono::steady_clock::now();
  res.symbols.reserve(n);
  std::optional<PsdAccumulator> psd;
  if (want_psd) psd.emplace(config.psd_nfft, rate);
  for (BatchResult& br : batches) {
    for (SymbolRecord& r : br.records) res.symbols.push_back(std::move(r));
    if (psd) psd->merge(*br.psd);
  }
  if (psd) res.psd = psd->finish();

  std::vector<double> before, after;
  std::vector<EvmReport> reports;
  for (const SymbolRecord& r : res.symbols) {
    before.push_back(r.papr_before_db);
    after.push_back(r.papr_after_db);
    if (r.evm) reports.push_back(*r.evm);
  }
  const std::vector<double> grid =
      threshold_grid(config.ccdf_lo_db, config.ccdf_hi_db, config.ccdf_step_db);
  res.ccdf_before = ccdf(before, grid);
  res.ccdf_after = ccdf(after, grid);
  if (!reports.empty() && reports.size() == res.symbols.size()) res.evm = rms_evm(reports);
  res.convergence = std::move(first.history);
  res.trace_before = std::move(first.before);
  res.trace_after = std::move(first.after);
  res.timings.push_back({"aggregate", seconds_since(t0)});
  return res;
}

std::string manifest_json(const RunResult& r) {
  nlohmann::ordered_json j;
  const ExperimentConfig& c = r.config;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  j["preset"] = c.preset;
  j["waveform"] = to_string(c.waveform);
  j["method"] = to_string(c.method);
  j["config_hash"] = hash;
  j["seed"] = c.seed;
  j["symbol_count"] = c.symbol_count;
  j["symbol_reuse"] = "symbol draws depend only on (seed, symbol index) and are shared across methods";
  j["plan"] = {{"bandwidth_f1", r.plan.bandwidth},
               {"lcm_len", r.plan.lcm_len},
               {"fft_bins", std::vector<std::size_t>{}},
               {"cp_len", std::vector<std::size_t>{}},
               {"offset", std::vector<std::size_t>{}}};
  for (const Subband& sb : r.plan.subbands) {
    j["plan"]["fft_bins"].push_back(sb.fft_bins);
    j["plan"]["cp_len"].push_back(sb.cp_len);
    j["plan"]["offset"].push_back(sb.offset);
  }
  std::vector<double> before, after;
  for (const SymbolRecord& s : r.symbols) {
    before.push_back(s.papr_before_db);
    after.push_back(s.papr_after_db);
  }
  nlohmann::ordered_json agg;
  agg["papr_before_db_at_1e-3"] = papr_at_probability(before, 1e-3);
  agg["papr_after_db_at_1e-3"] = papr_at_probability(after, 1e-3);
  agg["ccdf_after_at_cr_plus_0.05"] = exceedance(after, c.cr_db + 0.05);
  if (r.evm) {
    agg["rms_evm_composite_db"] = r.evm->composite_db;
    agg["rms_evm_subband_db"] = r.evm->subband_db;
  }
  if (r.psd) agg["psd_averages"] = r.psd->averages;
  j["aggregates"] = agg;
  std::vector<std::string> files;
  if (c.out_ccdf) files.insert(files.end(), {"ccdf.csv", "ccdf_original.csv"});
  if (c.out_evm && r.evm) files.push_back("evm.csv");
  if (c.out_psd && r.psd) files.push_back("psd.csv");
  if (c.out_convergence && !r.convergence.empty()) files.push_back("convergence.csv");
  if (c.out_trace) files.push_back("trace.csv");
  if (c.out_symbols) files.push_back("symbols.csv");
  j["files"] = files;
  return j.dump(2) + "\n";
}

std::vector<std::filesystem::path> emit_results(const RunResult& r,
                                                const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + out_dir.string() + "': " + ec.message());
  std::vector<std::filesystem::path> written;
  auto write = [&](const std::string& name, const std::function<void(std::ostream&)>& body) {
    const auto path = out_dir / name;
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
    body(os);
    os.flush();
    if (!os) throw std::runtime_error("write failed for '" + path.string() + "'");
    written.push_back(path);
  };
  const ExperimentConfig& c = r.config;
  if (c.out_ccdf) {
    write("ccdf.csv", [&](std::ostream& os) { write_ccdf_csv(os, r.ccdf_after); });
    write("ccdf_original.csv", [&](std::ostream& os) { write_ccdf_csv(os, r.ccdf_before); });
  }
  if (c.out_evm && r.evm) write("evm.csv", [&](std::ostream& os) { write_evm_csv(os, *r.evm); });
  if (c.out_psd && r.psd) write("psd.csv", [&](std::ostream& os) { write_psd_csv(os, *r.psd); });
  if (c.out_convergence && !r.convergence.empty()) {
    write("convergence.csv", [&](std::ostream& os) { write_history_csv(os, r.convergence); });
  }
  if (c.out_trace) {
    write("trace.csv", [&](std::ostream& os) {
      os << "n,before_mag,after_mag\n";
      os.precision(12);
      const std::size_t len = std::max(r.trace_before.size(), r.trace_after.size());
      for (std::size_t k = 0; k < len; ++k) {
        os << k << ',' << (k < r.trace_before.size() ? std::abs(r.trace_before[k]) : 0.0) << ','
           << (k < r.trace_after.size() ? std::abs(r.trace_after[k]) : 0.0) << '\n';
      }
    });
  }
  if (c.out_symbols) {
    write("symbols.csv", [&](std::ostream& os) {
      os << "index,papr_before_db,papr_after_db,iterations,evm_composite";
      for (std::size_t i = 0; i < r.plan.count(); ++i) os << ",evm_sb" << i + 1;
      os << '\n';
      os.precision(17);
      for (const SymbolRecord& s : r.symbols) {
        os << s.index << ',' << s.papr_before_db << ',' << s.papr_after_db << ',' << s.iterations;
        if (s.evm) {
          os << ',' << s.evm->composite;
          for (double e : s.evm->subband) os << ',' << e;
        } else {
          os << ",";
          for (std::size_t i = 0; i < r.plan.count(); ++i) os << ',';
        }
        os << '\n';
      }
    });
  }
  write("manifest.json", [&](std::ostream& os) { os << manifest_json(r); });
  return written;
}

}  // namespace mnpapr
