#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mnpapr/fft.hpp"
#include "mnpapr/types.hpp"

namespace mnpapr {

// Inputs of build_plan. Frequencies are in units of the smallest subcarrier
// spacing f1; guards hold M-1 entries.
struct PlanRequest {
  std::vector<int> scale_exponents;      // v_i, non-decreasing, v_1 = 0
  std::vector<std::size_t> subcarriers;  // K_i
  std::vector<long> guards;              // G_i between subband i and i+1
  std::size_t oversampling = 4;          // J
  std::vector<double> eta;               // empty means all ones
  double cp_fraction = 0.0;
};

struct Subband {
  int scale_exponent = 0;       // v_i
  std::size_t spacing = 1;      // f_i / f1 = 2^v_i
  std::size_t subcarriers = 0;  // K_i
  long guard = 0;               // G_i towards the next subband, 0 for the last
  double eta = 1.0;
  std::size_t offset = 0;       // delta k_i, in units of f_i
  std::size_t fft_bins = 0;     // N_i
  std::size_t grid = 0;         // J * N_i
  std::size_t cp_len = 0;       // L_cp,i
  std::size_t blocks = 1;       // 2^v_i sub-symbols per LCM symbol

  std::size_t symbol_len() const { return grid + cp_len; }
  std::size_t symbol_count() const { return blocks * subcarriers; }

  // Occupied spectrum in units of f1 (subcarrier k is centred on k * f_i).
  double lower_edge_f1() const;
  double upper_edge_f1() const;
  double center_f1() const;
};

struct NumerologyPlan {
  std::size_t oversampling = 1;  // J
  std::size_t bandwidth = 0;     // B / f1
  std::size_t lcm_len = 0;       // L_sys
  std::vector<Subband> subbands;

  std::size_t count() const { return subbands.size(); }
  const Subband& operator[](std::size_t i) const { return subbands.at(i); }
  // Sampling rate in units of f1; equals J * N_i * f_i for every subband.
  double sample_rate_f1() const;
};

NumerologyPlan build_plan(const PlanRequest& request);

// Throws std::logic_error naming the first violated plan invariant.
void check_plan_invariants(const NumerologyPlan& plan);

// Frequency-domain data of one subband for one LCM symbol, block-major:
// values[b * width + k] is subcarrier k of sub-symbol b.
struct SubbandSymbols {
  std::size_t subband = 0;
  std::size_t blocks = 0;
  std::size_t width = 0;
  CVec values;

  static SubbandSymbols zeros(const NumerologyPlan& plan, std::size_t i);

  std::span<Complex> block(std::size_t b) { return {values.data() + b * width, width}; }
  std::span<const Complex> block(std::size_t b) const {
    return {values.data() + b * width, width};
  }
};

using SymbolSet = std::vector<SubbandSymbols>;

void check_conforms(const SubbandSymbols& x, const NumerologyPlan& plan, std::size_t i);

// Sample layout of one sub-symbol: `prefix` cyclic-prefix samples, the grid
// body, then `postfix` cyclic-postfix samples, each scaled by `weights`
// (empty means unit weights). Sample n reads IDFT index (n - prefix) mod grid.
struct BlockLayout {
  std::size_t prefix = 0;
  std::size_t postfix = 0;
  std::vector<double> weights;
};

BlockLayout standard_layout(const Subband& band);

/// Matrix-free F_i and F_i^H for one subband.
///
/// modulate applies blkdiag(eta_i W_i P_i D_i, 2^v_i): each block of K_i
/// symbols is written to bins offset..offset+K_i-1 of the J*N_i grid, inverse
/// transformed with 1/sqrt(J*N_i) normalization and cyclically extended.
/// analyze is the exact adjoint: weighted samples are folded back onto their
/// IDFT indices, forward transformed and the used bins extracted.
class SubbandOperator {
 public:
  SubbandOperator(const NumerologyPlan& plan, std::size_t i);
  SubbandOperator(const NumerologyPlan& plan, std::size_t i, BlockLayout layout);

  std::size_t subband() const { return index_; }
  const Subband& params() const { return band_; }
  const BlockLayout& layout() const { return layout_; }
  std::size_t block_len() const { return band_.grid + layout_.prefix + layout_.postfix; }
  std::size_t output_len() const { return band_.blocks * block_len(); }

  void modulate(const SubbandSymbols& x, std::span<Complex> out) const;
  TimeSignal modulate(const SubbandSymbols& x) const;

  void analyze(std::span<const Complex> s, SubbandSymbols& out) const;
  SubbandSymbols analyze(std::span<const Complex> s) const;

  // Receiver-style demodulation: drop each block's prefix (C_i), forward
  // transform the body and extract the used bins, divided by eta_i.
  SubbandSymbols demodulate(std::span<const Complex> s) const;

  // Per-block Gram matrix F_i^H F_i restricted to one block (K_i x K_i).
  Eigen::MatrixXcd block_gram() const;

 private:
  std::size_t sample_index(std::size_t n) const;
  double weight(std::size_t n) const;
  void check_signal(std::span<const Complex> s) const;

  std::size_t index_;
  Subband band_;
  BlockLayout layout_;
  Fft fft_;
};

/// The operator family of one waveform: all subbands share an output length.
class OperatorSet {
 public:
  explicit OperatorSet(const NumerologyPlan& plan);
  OperatorSet(const NumerologyPlan& plan, std::vector<BlockLayout> layouts);

  std::size_t count() const { return ops_.size(); }
  const SubbandOperator& operator[](std::size_t i) const { return ops_.at(i); }
  std::size_t signal_len() const { return signal_len_; }
  const NumerologyPlan& plan() const { return plan_; }

  TimeSignal compose(const SymbolSet& xs) const;
  SymbolSet analyze(std::span<const Complex> s) const;

 private:
  NumerologyPlan plan_;
  std::vector<SubbandOperator> ops_;
  std::size_t signal_len_ = 0;
};

TimeSignal modulate_subband(const SubbandSymbols& x, const NumerologyPlan& plan, std::size_t i);
SubbandSymbols analyze_subband(std::span<const Complex> s, const NumerologyPlan& plan,
                               std::size_t i);
TimeSignal compose(const SymbolSet& xs, const NumerologyPlan& plan);

// Unit-power QPSK, (+-1 +-j)/sqrt(2). Each symbol depends only on
// (seed, symbol_index, subband, block, bin), so draws are independent of the
// order in which symbols are generated.
SymbolSet gen_qpsk(std::uint64_t seed, std::uint64_t symbol_index, const NumerologyPlan& plan);

}  // namespace mnpapr
