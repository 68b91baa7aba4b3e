#include "mnpapr/clipfilter.hpp"

#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace mnpapr {

namespace {

double energy(std::span<const Complex> s) {
  double e = 0.0;
  for (const Complex& v : s) e += std::norm(v);
  return e;
}

void check_len(std::span<const Complex> z, const OperatorSet& ops, const char* who) {
  if (z.size() != ops.signal_len()) {
    throw std::invalid_argument(std::string(who) + ": expected " +
                                std::to_string(ops.signal_len()) + " samples, got " +
                                std::to_string(z.size()));
  }
}

double sinc(double x) {
  if (std::abs(x) < 1e-12) return 1.0;
  const double px = std::numbers::pi * x;
  return std::sin(px) / px;
}

}  // namespace

double level_from_cr(std::span<const Complex> s, double cr_db) {
  if (s.empty()) throw std::invalid_argument("level_from_cr: empty signal");
  const double e = energy(s);
  if (!(e > 0.0)) throw std::invalid_argument("level_from_cr: zero signal");
  return std::pow(10.0, cr_db / 20.0) * std::sqrt(e / static_cast<double>(s.size()));
}

std::size_t clip_in_place(std::span<Complex> s, double level) {
  if (!(level > 0.0)) throw std::invalid_argument("clip: level must be > 0");
  std::size_t count = 0;
  for (Complex& v : s) {
    const double r = std::abs(v);
    if (r > level) {
      v *= level / r;
      ++count;
    }
  }
  return count;
}

ClipOutcome clip(std::span<const Complex> s, double level) {
  ClipOutcome out;
  out.level = level;
  out.clipped.assign(s.begin(), s.end());
  out.clipped_count = clip_in_place(out.clipped, level);
  out.noise.resize(s.size());
  for (std::size_t n = 0; n < s.size(); ++n) out.noise[n] = out.clipped[n] - s[n];
  return out;
}

IcfOutcome icf_step_classical(std::span<const Complex> z, const OperatorSet& ops, double level) {
  check_len(z, ops, "icf_step_classical");
  TimeSignal clipped(z.begin(), z.end());
  clip_in_place(clipped, level);
  IcfOutcome out;
  out.symbols.reserve(ops.count());
  for (std::size_t i = 0; i < ops.count(); ++i) out.symbols.push_back(ops[i].demodulate(clipped));
  out.signal = ops.compose(out.symbols);
  return out;
}

IcfOutcome icf_step_classical(std::span<const Complex> z, const NumerologyPlan& plan,
                              double level) {
  return icf_step_classical(z, OperatorSet(plan), level);
}

IcfOutcome icf_run(const SymbolSet& x, const OperatorSet& ops, double cr_db, std::size_t n_exec) {
  if (n_exec < 1) throw std::invalid_argument("icf_run: n_exec must be >= 1");
  IcfOutcome cur{ops.compose(x), x};
  for (std::size_t e = 0; e < n_exec; ++e) {
    const double level = level_from_cr(cur.signal, cr_db);
    cur = icf_step_classical(cur.signal, ops, level);
  }
  return cur;
}

TimeSignal ns_icf_step(std::span<const Complex> z, const OperatorSet& ops, double level) {
  check_len(z, ops, "ns_icf_step");
  const ClipOutcome c = clip(z, level);
  TimeSignal out(z.begin(), z.end());
  if (c.clipped_count == 0) return out;
  TimeSignal part(z.size());
  for (std::size_t i = 0; i < ops.count(); ++i) {
    ops[i].modulate(ops[i].analyze(c.noise), part);
    for (std::size_t n = 0; n < out.size(); ++n) out[n] += part[n];
  }
  return out;
}

TimeSignal ns_icf_step(std::span<const Complex> z, const NumerologyPlan& plan, double level) {
  return ns_icf_step(z, OperatorSet(plan), level);
}

IcfOutcome ns_icf_run(const SymbolSet& x, const OperatorSet& ops, double cr_db,
                      std::size_t n_exec) {
  if (n_exec < 1) throw std::invalid_argument("ns_icf_run: n_exec must be >= 1");
  IcfOutcome cur{ops.compose(x), x};
  TimeSignal part(ops.signal_len());
  for (std::size_t e = 0; e < n_exec; ++e) {
    const ClipOutcome c = clip(cur.signal, level_from_cr(cur.signal, cr_db));
    if (c.clipped_count == 0) continue;
    for (std::size_t i = 0; i < ops.count(); ++i) {
      const SubbandSymbols shaped = ops[i].analyze(c.noise);
      for (std::size_t k = 0; k < shaped.values.size(); ++k) {
        cur.symbols[i].values[k] += shaped.values[k];
      }
      ops[i].modulate(shaped, part);
      for (std::size_t n = 0; n < part.size(); ++n) cur.signal[n] += part[n];
    }
  }
  return cur;
}

TimeSignal ns_icf_run(const SymbolSet& x, const NumerologyPlan& plan, double cr_db,
                      std::size_t n_exec) {
  return ns_icf_run(x, OperatorSet(plan), cr_db, n_exec).signal;
}

FilterSpec design_subband_filter(const NumerologyPlan& plan, std::size_t i, std::size_t taps,
                                 double rolloff) {
  if (taps < 1) throw std::invalid_argument("design_subband_filter: L_f must be >= 1");
  if (i >= plan.count()) throw std::invalid_argument("design_subband_filter: no subband " + std::to_string(i + 1));
  if (taps > plan.lcm_len) {
    throw std::invalid_argument("design_subband_filter: L_f = " + std::to_string(taps) +
                                " exceeds L_sys = " + std::to_string(plan.lcm_len));
  }
  if (!(rolloff >= 0.0 && rolloff <= 1.0)) {
    throw std::invalid_argument("design_subband_filter: rolloff must lie in [0, 1]");
  }
  const Subband& sb = plan[i];
  const double fs = plan.sample_rate_f1();
  const double width = static_cast<double>(sb.subcarriers * sb.spacing) / fs;
  const double fc =
      (static_cast<double>(sb.offset) + 0.5 * static_cast<double>(sb.subcarriers - 1)) *
      static_cast<double>(sb.spacing) / fs;
  const double half = 0.5 * static_cast<double>(taps);
  const double flat = (1.0 - rolloff) * half;

  FilterSpec f;
  f.subband = i;
  f.taps.resize(taps);
  const long delay = static_cast<long>(taps / 2);
  double e = 0.0;
  for (std::size_t n = 0; n < taps; ++n) {
    const double m = static_cast<double>(static_cast<long>(n) - delay);
    const double am = std::abs(m);
    double w = 1.0;
    if (am > flat) {
      w = am >= half ? 0.0
                     : std::sqrt(0.5 * (1.0 + std::cos(std::numbers::pi * (am / half -
                                                                          (1.0 - rolloff)) /
                                                       rolloff)));
    }
    const double phase = 2.0 * std::numbers::pi * fc * m;
    f.taps[n] = width * sinc(width * m) * w * Complex{std::cos(phase), std::sin(phase)};
    e += std::norm(f.taps[n]);
  }
  if (!(e > 0.0)) throw std::invalid_argument("design_subband_filter: all taps are zero");
  const double g = 1.0 / std::sqrt(e);
  for (Complex& a : f.taps) a *= g;
  return f;
}

FilterSpec identity_filter(std::size_t subband) { return FilterSpec{{Complex{1.0, 0.0}}, subband, true}; }

Complex filter_response(const FilterSpec& filter, const NumerologyPlan& plan, double freq_f1) {
  const double fs = plan.sample_rate_f1();
  const long delay = static_cast<long>(filter.delay());
  Complex acc{};
  for (std::size_t l = 0; l < filter.taps.size(); ++l) {
    const double phase = -2.0 * std::numbers::pi * freq_f1 *
                         static_cast<double>(static_cast<long>(l) - delay) / fs;
    acc += filter.taps[l] * Complex{std::cos(phase), std::sin(phase)};
  }
  return acc;
}

void write_filter_csv(std::ostream& os, const FilterSpec& filter) {
  os << "index,re,im\n";
  os.precision(17);
  for (std::size_t l = 0; l < filter.taps.size(); ++l) {
    os << l << ',' << filter.taps[l].real() << ',' << filter.taps[l].imag() << '\n';
  }
}

FilterSpec read_filter_csv(std::istream& is, std::size_t subband) {
  FilterSpec f;
  f.subband = subband;
  std::string line;
  std::size_t line_no = 0;
  bool header = false;
  while (std::getline(is, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!header) {
      if (line != "index,re,im") {
        throw std::runtime_error("filter csv: expected header 'index,re,im' on line " +
                                 std::to_string(line_no));
      }
      header = true;
      continue;
    }
    std::istringstream ss(line);
    std::size_t index = 0;
    double re = 0.0, im = 0.0;
    char c1 = 0, c2 = 0;
    if (!(ss >> index >> c1 >> re >> c2 >> im) || c1 != ',' || c2 != ',') {
      throw std::runtime_error("filter csv: malformed row on line " + std::to_string(line_no));
    }
    if (index != f.taps.size()) {
      throw std::runtime_error("filter csv: tap index " + std::to_string(index) +
                               " out of order on line " + std::to_string(line_no));
    }
    f.taps.emplace_back(re, im);
  }
  if (f.taps.empty()) throw std::runtime_error("filter csv: no taps");
  double e = 0.0;
  for (const Complex& a : f.taps) e += std::norm(a);
  f.unit_energy = std::abs(e - 1.0) <= 1e-12;
  return f;
}

LinearConvolver::LinearConvolver(CVec taps, std::size_t input_len)
    : input_len_(input_len),
      taps_(taps.size()),
      delay_(taps.size() / 2),
      fft_(next_power_of_two(input_len + taps.size() - 1)) {
  if (taps.empty()) throw std::invalid_argument("LinearConvolver: no taps");
  if (input_len == 0) throw std::invalid_argument("LinearConvolver: zero input length");
  response_.assign(fft_.size(), Complex{});
  std::copy(taps.begin(), taps.end(), response_.begin());
  fft_.forward(response_);
  const double inv = 1.0 / static_cast<double>(fft_.size());
  for (Complex& h : response_) h *= inv;
}

void LinearConvolver::transform(std::span<const Complex> x, CVec& buf) const {
  if (x.size() != input_len_) {
    throw std::invalid_argument("LinearConvolver: expected input length " +
                                std::to_string(input_len_) + ", got " + std::to_string(x.size()));
  }
  buf.assign(fft_.size(), Complex{});
  std::copy(x.begin(), x.end(), buf.begin());
  fft_.forward(buf);
  for (std::size_t k = 0; k < buf.size(); ++k) buf[k] *= response_[k];
  fft_.inverse(buf);
}

void LinearConvolver::full(std::span<const Complex> x, std::span<Complex> out) const {
  if (out.size() != full_len()) throw std::invalid_argument("LinearConvolver: output length");
  CVec buf;
  transform(x, buf);
  std::copy(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(full_len()), out.begin());
}

CVec LinearConvolver::full(std::span<const Complex> x) const {
  CVec out(full_len());
  full(x, out);
  return out;
}

void LinearConvolver::aligned_add(std::span<const Complex> x, std::span<Complex> acc) const {
  if (acc.size() != input_len_) throw std::invalid_argument("LinearConvolver: output length");
  CVec buf;
  transform(x, buf);
  for (std::size_t n = 0; n < input_len_; ++n) acc[n] += buf[n + delay_];
}

FilteredOfdm::FilteredOfdm(const NumerologyPlan& plan, std::vector<FilterSpec> filters)
    : ops_(plan), filters_(std::move(filters)) {
  if (filters_.size() != plan.count()) {
    throw std::invalid_argument("FilteredOfdm: expected " + std::to_string(plan.count()) +
                                " filters, got " + std::to_string(filters_.size()));
  }
  const std::size_t lf = filters_.front().length();
  for (std::size_t i = 0; i < filters_.size(); ++i) {
    if (filters_[i].subband != i) {
      throw std::invalid_argument("FilteredOfdm: filter " + std::to_string(i) +
                                  " was designed for subband " +
                                  std::to_string(filters_[i].subband));
    }
    if (filters_[i].length() != lf) {
      throw std::invalid_argument("FilteredOfdm: all filters must share one length");
    }
    if (lf == 0 || lf > plan.lcm_len) {
      throw std::invalid_argument("FilteredOfdm: filter length must lie in [1, L_sys]");
    }
  }
  signal_len_ = ops_.signal_len() + lf - 1;
  for (const FilterSpec& f : filters_) {
    signal_conv_.emplace_back(f.taps, ops_.signal_len());
    noise_conv_.emplace_back(f.taps, signal_len_);
  }
}

TimeSignal FilteredOfdm::compose(const SymbolSet& xs) const {
  if (xs.size() != ops_.count()) throw std::invalid_argument("FilteredOfdm: subband count");
  TimeSignal zf(signal_len_);
  TimeSignal part(signal_len_);
  for (std::size_t i = 0; i < ops_.count(); ++i) {
    signal_conv_[i].full(ops_[i].modulate(xs[i]), part);
    for (std::size_t n = 0; n < signal_len_; ++n) zf[n] += part[n];
  }
  return zf;
}

TimeSignal FilteredOfdm::ns_icf_step(std::span<const Complex> zf, double level) const {
  if (zf.size() != signal_len_) {
    throw std::invalid_argument("ns_icf_filtered_step: expected " + std::to_string(signal_len_) +
                                " samples, got " + std::to_string(zf.size()));
  }
  const ClipOutcome c = clip(zf, level);
  TimeSignal out(zf.begin(), zf.end());
  if (c.clipped_count == 0) return out;
  for (const LinearConvolver& conv : noise_conv_) conv.aligned_add(c.noise, out);
  return out;
}

TimeSignal FilteredOfdm::ns_icf_run(const SymbolSet& xs, double cr_db, std::size_t n_exec) const {
  if (n_exec < 1) throw std::invalid_argument("ns_icf_run: n_exec must be >= 1");
  TimeSignal zf = compose(xs);
  for (std::size_t e = 0; e < n_exec; ++e) zf = ns_icf_step(zf, level_from_cr(zf, cr_db));
  return zf;
}

TimeSignal ns_icf_filtered_step(std::span<const Complex> zf, const NumerologyPlan& plan,
                                const std::vector<FilterSpec>& filters, double level) {
  return FilteredOfdm(plan, filters).ns_icf_step(zf, level);
}

}  // namespace mnpapr
