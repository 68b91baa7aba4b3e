#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mnpapr/fft.hpp"
#include "mnpapr/types.hpp"
#include "mnpapr/waveform.hpp"

namespace mnpapr {

struct ClipOutcome {
  TimeSignal clipped;
  TimeSignal noise;  // clipped - original
  double level = 0.0;
  std::size_t clipped_count = 0;
};

// A = 10^(cr_db/20) * ||s||_2 / sqrt(L).
double level_from_cr(std::span<const Complex> s, double cr_db);

ClipOutcome clip(std::span<const Complex> s, double level);
// Clips in place and returns the number of samples that exceeded the level.
std::size_t clip_in_place(std::span<Complex> s, double level);

struct IcfOutcome {
  TimeSignal signal;
  SymbolSet symbols;
};

// Classical ICF extended to mixed numerology: clip, then per subband drop the
// CP, take the used bins and re-modulate. Inter-numerology leakage is carried
// into both the returned symbols and the new composite.
IcfOutcome icf_step_classical(std::span<const Complex> z, const OperatorSet& ops, double level);
IcfOutcome icf_step_classical(std::span<const Complex> z, const NumerologyPlan& plan,
                              double level);
IcfOutcome icf_run(const SymbolSet& x, const OperatorSet& ops, double cr_db, std::size_t n_exec);

// Noise-shaped ICF: z + sum_i F_i F_i^H (clip(z) - z).
TimeSignal ns_icf_step(std::span<const Complex> z, const OperatorSet& ops, double level);
TimeSignal ns_icf_step(std::span<const Complex> z, const NumerologyPlan& plan, double level);

// Runs n_exec NS-ICF executions from compose(x); the level is recomputed from
// the current signal each time. symbols holds x_i + sum F_i^H d accumulated
// over executions, the data a receiver would see on each subband.
IcfOutcome ns_icf_run(const SymbolSet& x, const OperatorSet& ops, double cr_db,
                      std::size_t n_exec);
TimeSignal ns_icf_run(const SymbolSet& x, const NumerologyPlan& plan, double cr_db,
                      std::size_t n_exec);

struct FilterSpec {
  CVec taps;
  std::size_t subband = 0;
  bool unit_energy = true;

  std::size_t length() const { return taps.size(); }
  // Index of the centre tap, floor(L_f / 2).
  std::size_t delay() const { return taps.size() / 2; }
};

// Windowed sinc matched to the occupied width of subband i, shifted to its
// centre frequency. The window is the square root of a raised-cosine taper
// whose flat part covers (1 - rolloff) of the half length.
FilterSpec design_subband_filter(const NumerologyPlan& plan, std::size_t i, std::size_t taps,
                                 double rolloff = 0.25);

// Single-tap identity filter.
FilterSpec identity_filter(std::size_t subband);

// Frequency response sum_l a(l) exp(-j 2 pi f (l - delay) / fs) at f in units
// of f1; the delay term removes the linear phase of the centred design.
Complex filter_response(const FilterSpec& filter, const NumerologyPlan& plan, double freq_f1);

void write_filter_csv(std::ostream& os, const FilterSpec& filter);
FilterSpec read_filter_csv(std::istream& is, std::size_t subband);

// FFT-based linear convolution with fixed taps for a fixed input length.
class LinearConvolver {
 public:
  LinearConvolver(CVec taps, std::size_t input_len);

  std::size_t input_len() const { return input_len_; }
  std::size_t full_len() const { return input_len_ + taps_ - 1; }

  // Full linear convolution, length input_len + L_f - 1.
  void full(std::span<const Complex> x, std::span<Complex> out) const;
  CVec full(std::span<const Complex> x) const;
  // Delay-compensated convolution of the same length as the input:
  // out[n] = full[n + floor(L_f / 2)].
  void aligned_add(std::span<const Complex> x, std::span<Complex> acc) const;

 private:
  void transform(std::span<const Complex> x, CVec& buf) const;

  std::size_t input_len_;
  std::size_t taps_;
  std::size_t delay_;
  Fft fft_;
  CVec response_;
};

// Filtered OFDM: every subband signal F_i x_i is convolved with its own
// filter before summation. Noise shaping filters the clipping noise with the
// same filters and adds it back; no frequency-domain projection is used.
class FilteredOfdm {
 public:
  FilteredOfdm(const NumerologyPlan& plan, std::vector<FilterSpec> filters);

  const OperatorSet& operators() const { return ops_; }
  const std::vector<FilterSpec>& filters() const { return filters_; }
  std::size_t signal_len() const { return signal_len_; }

  TimeSignal compose(const SymbolSet& xs) const;
  TimeSignal ns_icf_step(std::span<const Complex> zf, double level) const;
  TimeSignal ns_icf_run(const SymbolSet& xs, double cr_db, std::size_t n_exec) const;

 private:
  OperatorSet ops_;
  std::vector<FilterSpec> filters_;
  std::vector<LinearConvolver> signal_conv_;
  std::vector<LinearConvolver> noise_conv_;
  std::size_t signal_len_ = 0;
};

TimeSignal ns_icf_filtered_step(std::span<const Complex> zf, const NumerologyPlan& plan,
                                const std::vector<FilterSpec>& filters, double level);

}  // namespace mnpapr
