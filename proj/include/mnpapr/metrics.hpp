#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include "mnpapr/fft.hpp"
#include "mnpapr/types.hpp"
#include "mnpapr/waveform.hpp"

namespace mnpapr {

inline constexpr double kDbFloor = -200.0;

// 20 log10 of an amplitude ratio, floored at kDbFloor.
double amplitude_db(double linear);
double power_db(double linear);

double papr_db(std::span<const Complex> s);

struct CcdfCurve {
  std::vector<double> thresholds;
  std::vector<double> probabilities;
  std::size_t samples = 0;
};

std::vector<double> threshold_grid(double lo_db, double hi_db, double step_db);
CcdfCurve ccdf(std::span<const double> papr, std::span<const double> grid);
double exceedance(std::span<const double> papr, double threshold_db);
// Smallest threshold t with Pr(PAPR > t) <= probability, read from the
// sorted samples.
double papr_at_probability(std::span<const double> papr, double probability);

struct EvmReport {
  std::vector<double> subband;     // ||x_i - xhat_i|| / ||x_i||
  std::vector<double> subband_db;
  double composite = 0.0;          // sqrt(sum_i subband_i^2)
  double composite_db = kDbFloor;
};

EvmReport evm(const SymbolSet& x, const SymbolSet& xhat, const NumerologyPlan& plan);
// Block-weighted alternative: per subband, the mean over its 2^v_i blocks of
// the squared per-block error ratio.
double evm_block_weighted(const SymbolSet& x, const SymbolSet& xhat, const NumerologyPlan& plan);

struct RmsEvm {
  std::vector<double> subband_db;
  double composite_db = kDbFloor;
  std::size_t count = 0;
};

// sqrt(E[EVM^2]) over a batch, per subband and composite.
RmsEvm rms_evm(std::span<const EvmReport> reports);

struct PsdEstimate {
  std::vector<double> freq_f1;
  std::vector<double> power;  // linear, sums to the mean sample power
  std::size_t averages = 0;
  std::size_t nfft = 0;

  std::vector<double> power_db() const;
  // Mean linear power density over bins with lo <= f < hi.
  double band_mean(double lo_f1, double hi_f1) const;
  double peak() const;
};

// Averages |DFT|^2 / (nfft * L) over signals, with zero padding to nfft.
class PsdAccumulator {
 public:
  PsdAccumulator(std::size_t nfft, double sample_rate_f1);

  void add(std::span<const Complex> s);
  void merge(const PsdAccumulator& other);
  PsdEstimate finish() const;
  std::size_t count() const { return count_; }

 private:
  Fft fft_;
  double rate_;
  std::vector<double> acc_;
  std::size_t count_ = 0;
};

PsdEstimate psd_periodogram(const std::vector<TimeSignal>& signals, std::size_t nfft,
                            double sample_rate_f1);

struct SspaModel {
  double smoothness = 3.0;  // p
  double ibo_db = 5.0;

  void validate() const;
  double saturation(double rms) const;
};

// Rapp amplifier with A_sat = RMS(s) * 10^(IBO/20).
TimeSignal sspa_apply(std::span<const Complex> s, const SspaModel& model);
TimeSignal sspa_apply_level(std::span<const Complex> s, double saturation, double smoothness);

void write_ccdf_csv(std::ostream& os, const CcdfCurve& curve);
// Power in dB relative to the spectrum peak.
void write_psd_csv(std::ostream& os, const PsdEstimate& psd);
void write_evm_csv(std::ostream& os, const RmsEvm& evm);

}  // namespace mnpapr
