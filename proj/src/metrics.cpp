#include "mnpapr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mnpapr {

double amplitude_db(double linear) {
  return linear > 0.0 ? std::max(kDbFloor, 20.0 * std::log10(linear)) : kDbFloor;
}

double power_db(double linear) {
  return linear > 0.0 ? std::max(kDbFloor, 10.0 * std::log10(linear)) : kDbFloor;
}

double papr_db(std::span<const Complex> s) {
  if (s.empty()) throw std::invalid_argument("papr_db: empty signal");
  double e = 0.0;
  double m = 0.0;
  for (const Complex& v : s) {
    const double p = std::norm(v);
    e += p;
    m = std::max(m, p);
  }
  if (!(e > 0.0)) throw std::invalid_argument("papr_db: zero signal");
  return 10.0 * std::log10(m * static_cast<double>(s.size()) / e);
}

std::vector<double> threshold_grid(double lo_db, double hi_db, double step_db) {
  if (!(step_db > 0.0) || hi_db < lo_db) throw std::invalid_argument("threshold_grid: bad range");
  std::vector<double> g;
  const auto n = static_cast<std::size_t>(std::floor((hi_db - lo_db) / step_db + 1e-9));
  for (std::size_t k = 0; k <= n; ++k) g.push_back(lo_db + step_db * static_cast<double>(k));
  return g;
}

double exceedance(std::span<const double> papr, double threshold_db) {
  if (papr.empty()) throw std::invalid_argument("ccdf: no samples");
  const auto above = std::count_if(papr.begin(), papr.end(),
                                   [&](double p) { return p > threshold_db; });
  return static_cast<double>(above) / static_cast<double>(papr.size());
}

CcdfCurve ccdf(std::span<const double> papr, std::span<const double> grid) {
  if (papr.empty()) throw std::invalid_argument("ccdf: no samples");
  std::vector<double> sorted(papr.begin(), papr.end());
  std::sort(sorted.begin(), sorted.end());
  CcdfCurve c;
  c.samples = sorted.size();
  c.thresholds.assign(grid.begin(), grid.end());
  for (double t : grid) {
    const auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
    c.probabilities.push_back(static_cast<double>(sorted.end() - it) /
                              static_cast<double>(sorted.size()));
  }
  return c;
}

double papr_at_probability(std::span<const double> papr, double probability) {
  if (papr.empty()) throw std::invalid_argument("papr_at_probability: no samples");
  if (!(probability >= 0.0 && probability < 1.0)) {
    throw std::invalid_argument("papr_at_probability: probability must lie in [0, 1)");
  }
  std::vector<double> sorted(papr.begin(), papr.end());
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  const auto k = static_cast<std::size_t>(std::floor(probability * static_cast<double>(sorted.size())));
  return sorted[std::min(k, sorted.size() - 1)];
}

EvmReport evm(const SymbolSet& x, const SymbolSet& xhat, const NumerologyPlan& plan) {
  if (x.size() != plan.count() || xhat.size() != plan.count()) {
    throw std::invalid_argument("evm: subband count mismatch");
  }
  EvmReport r;
  double total = 0.0;
  for (std::size_t i = 0; i < plan.count(); ++i) {
    check_conforms(x[i], plan, i);
    check_conforms(xhat[i], plan, i);
    double ref = 0.0;
    double err = 0.0;
    for (std::size_t k = 0; k < x[i].values.size(); ++k) {
      ref += std::norm(x[i].values[k]);
      err += std::norm(x[i].values[k] - xhat[i].values[k]);
    }
    if (!(ref > 0.0)) {
      throw std::invalid_argument("evm: zero reference on subband " + std::to_string(i + 1));
    }
    const double ratio = err / ref;
    total += ratio;
    r.subband.push_back(std::sqrt(ratio));
    r.subband_db.push_back(amplitude_db(std::sqrt(ratio)));
  }
  r.composite = std::sqrt(total);
  r.composite_db = amplitude_db(r.composite);
  return r;
}

double evm_block_weighted(const SymbolSet& x, const SymbolSet& xhat, const NumerologyPlan& plan) {
  if (x.size() != plan.count() || xhat.size() != plan.count()) {
    throw std::invalid_argument("evm: subband count mismatch");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < plan.count(); ++i) {
    check_conforms(x[i], plan, i);
    check_conforms(xhat[i], plan, i);
    double acc = 0.0;
    for (std::size_t b = 0; b < x[i].blocks; ++b) {
      const auto xb = x[i].block(b);
      const auto hb = xhat[i].block(b);
      double ref = 0.0;
      double err = 0.0;
      for (std::size_t k = 0; k < xb.size(); ++k) {
        ref += std::norm(xb[k]);
        err += std::norm(xb[k] - hb[k]);
      }
      if (!(ref > 0.0)) throw std::invalid_argument("evm: zero reference block");
      acc += err / ref;
    }
    total += acc / static_cast<double>(x[i].blocks);
  }
  return std::sqrt(total);
}

RmsEvm rms_evm(std::span<const EvmReport> reports) {
  if (reports.empty()) throw std::invalid_argument("rms_evm: empty batch");
  const std::size_t m = reports.front().subband.size();
  std::vector<double> acc(m, 0.0);
  double comp = 0.0;
  for (const EvmReport& r : reports) {
    if (r.subband.size() != m) throw std::invalid_argument("rms_evm: subband count mismatch");
    for (std::size_t i = 0; i < m; ++i) acc[i] += r.subband[i] * r.subband[i];
    comp += r.composite * r.composite;
  }
  const double n = static_cast<double>(reports.size());
  RmsEvm out;
  out.count = reports.size();
  for (double a : acc) out.subband_db.push_back(amplitude_db(std::sqrt(a / n)));
  out.composite_db = amplitude_db(std::sqrt(comp / n));
  return out;
}

std::vector<double> PsdEstimate::power_db() const {
  std::vector<double> out;
  out.reserve(power.size());
  for (double p : power) out.push_back(mnpapr::power_db(p));
  return out;
}

double PsdEstimate::band_mean(double lo_f1, double hi_f1) const {
  double acc = 0.0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < freq_f1.size(); ++k) {
    if (freq_f1[k] >= lo_f1 && freq_f1[k] < hi_f1) {
      acc += power[k];
      ++n;
    }
  }
  if (n == 0) throw std::invalid_argument("band_mean: no bins in the requested band");
  return acc / static_cast<double>(n);
}

double PsdEstimate::peak() const {
  return power.empty() ? 0.0 : *std::max_element(power.begin(), power.end());
}

PsdAccumulator::PsdAccumulator(std::size_t nfft, double sample_rate_f1)
    : fft_(nfft), rate_(sample_rate_f1), acc_(nfft, 0.0) {}

void PsdAccumulator::add(std::span<const Complex> s) {
  if (s.empty()) throw std::invalid_argument("psd: empty signal");
  if (s.size() > fft_.size()) {
    throw std::invalid_argument("psd: signal of " + std::to_string(s.size()) +
                                " samples exceeds nfft = " + std::to_string(fft_.size()));
  }
  CVec buf(fft_.size());
  std::copy(s.begin(), s.end(), buf.begin());
  fft_.forward(buf);
  const double scale = 1.0 / (static_cast<double>(fft_.size()) * static_cast<double>(s.size()));
  for (std::size_t k = 0; k < buf.size(); ++k) acc_[k] += scale * std::norm(buf[k]);
  ++count_;
}

void PsdAccumulator::merge(const PsdAccumulator& other) {
  if (other.acc_.size() != acc_.size()) throw std::invalid_argument("psd: nfft mismatch");
  for (std::size_t k = 0; k < acc_.size(); ++k) acc_[k] += other.acc_[k];
  count_ += other.count_;
}

PsdEstimate PsdAccumulator::finish() const {
  if (count_ == 0) throw std::invalid_argument("psd: empty batch");
  const std::size_t n = acc_.size();
  PsdEstimate est;
  est.nfft = n;
  est.averages = count_;
  const double inv = 1.0 / static_cast<double>(count_);
  // Reorder bins so frequencies run from -fs/2 upwards.
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t k = (j + n / 2) % n;
    const double signed_k = k >= n / 2 ? static_cast<double>(k) - static_cast<double>(n)
                                       : static_cast<double>(k);
    est.freq_f1.push_back(signed_k * rate_ / static_cast<double>(n));
    est.power.push_back(acc_[k] * inv);
  }
  return est;
}

PsdEstimate psd_periodogram(const std::vector<TimeSignal>& signals, std::size_t nfft,
                            double sample_rate_f1) {
  if (signals.empty()) throw std::invalid_argument("psd_periodogram: empty batch");
  PsdAccumulator acc(nfft, sample_rate_f1);
  for (const TimeSignal& s : signals) acc.add(s);
  return acc.finish();
}

void SspaModel::validate() const {
  if (!(smoothness >= 1.0)) throw std::invalid_argument("sspa: smoothness p must be >= 1");
}

double SspaModel::saturation(double rms) const {
  const double a = rms * std::pow(10.0, ibo_db / 20.0);
  if (!(a > 0.0)) throw std::invalid_argument("sspa: saturation amplitude must be > 0");
  return a;
}

TimeSignal sspa_apply_level(std::span<const Complex> s, double saturation, double smoothness) {
  if (!(saturation > 0.0)) throw std::invalid_argument("sspa: saturation amplitude must be > 0");
  const double two_p = 2.0 * smoothness;
  TimeSignal out(s.size());
  for (std::size_t n = 0; n < s.size(); ++n) {
    const double r = std::abs(s[n]);
    if (r == 0.0) continue;
    const double g = 1.0 / std::pow(1.0 + std::pow(r / saturation, two_p), 1.0 / two_p);
    out[n] = g * s[n];
  }
  return out;
}

TimeSignal sspa_apply(std::span<const Complex> s, const SspaModel& model) {
  model.validate();
  if (s.empty()) return {};
  double e = 0.0;
  for (const Complex& v : s) e += std::norm(v);
  const double rms = std::sqrt(e / static_cast<double>(s.size()));
  return sspa_apply_level(s, model.saturation(rms), model.smoothness);
}

void write_ccdf_csv(std::ostream& os, const CcdfCurve& curve) {
  os << "threshold_db,ccdf\n";
  os.precision(10);
  for (std::size_t k = 0; k < curve.thresholds.size(); ++k) {
    os << curve.thresholds[k] << ',' << curve.probabilities[k] << '\n';
  }
}

void write_psd_csv(std::ostream& os, const PsdEstimate& psd) {
  os << "freq_f1,psd_db\n";
  os.precision(10);
  const double ref = psd.peak();
  for (std::size_t k = 0; k < psd.freq_f1.size(); ++k) {
    os << psd.freq_f1[k] << ',' << power_db(ref > 0.0 ? psd.power[k] / ref : 0.0) << '\n';
  }
}

void write_evm_csv(std::ostream& os, const RmsEvm& evm) {
  os << "subband,evm_db\n";
  os.precision(10);
  for (std::size_t i = 0; i < evm.subband_db.size(); ++i) {
    os << i + 1 << ',' << evm.subband_db[i] << '\n';
  }
  os << "composite," << evm.composite_db << '\n';
}

}  // namespace mnpapr
