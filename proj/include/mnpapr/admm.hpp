#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "mnpapr/types.hpp"
#include "mnpapr/waveform.hpp"

namespace mnpapr {

enum class AdmmVariant { original, constraint_update };

struct AdmmConfig {
  double rho = 0.25;
  double gamma = 1.7782794100389228;  // 10^(5/20)
  std::size_t max_iters = 10;
  // Stop once ||sum F_i xhat_i - zhat||_2 <= primal_tol. A negative value
  // selects 1e-6 * sqrt(L_sys).
  double primal_tol = -1.0;
  AdmmVariant variant = AdmmVariant::original;
  bool record_evm = true;

  static double gamma_from_cr(double cr_db);
  void validate() const;
  double tolerance(std::size_t signal_len) const;
};

struct AdmmPrecomp {
  double rho = 0.0;
  std::vector<double> sigma_sq;             // ||x_i||^2 over all blocks
  std::vector<Eigen::MatrixXcd> gram;       // per-block F_i^H F_i
  std::vector<Eigen::MatrixXcd> inverse;    // (sigma_i^-2 I + rho G_i)^-1
  double level = 0.0;                       // gamma ||z||_2 / sqrt(L)
};

struct AdmmState {
  std::size_t iter = 0;
  SymbolSet xhat;
  TimeSignal zhat;
  TimeSignal y;
  double level = 0.0;
  // Cached F_i xhat_i and their sum, kept in step with xhat.
  std::vector<TimeSignal> parts;
  TimeSignal sum;
};

struct IterRecord {
  std::size_t iter = 0;
  double objective = 0.0;
  double primal_residual = 0.0;
  double level = 0.0;
  double evm_db = 0.0;
};

struct AdmmResult {
  SymbolSet xhat;
  TimeSignal zhat;
  TimeSignal y;
  double initial_level = 0.0;
  double final_level = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
  std::vector<IterRecord> history;
};

double evm_sigma(const SubbandSymbols& x);

AdmmPrecomp precompute(const SymbolSet& x, const OperatorSet& ops, const AdmmConfig& config);

// Starting point (xhat, zhat, y) = (x, compose(x), 0).
AdmmState init_state(const SymbolSet& x, const OperatorSet& ops, double level);

void x_step(std::size_t i, AdmmState& state, const SymbolSet& x, const AdmmPrecomp& pre,
            const OperatorSet& ops);
void z_step(AdmmState& state, double level, double rho);
void dual_step(AdmmState& state, double rho);

double primal_residual(const AdmmState& state);
// sum_i ||x_i - xhat_i||^2 / (2 sigma_i^2)
double admm_objective(const SymbolSet& x, const SymbolSet& xhat, const AdmmPrecomp& pre);
double augmented_lagrangian(const SymbolSet& x, const SymbolSet& xhat,
                            std::span<const Complex> zhat, std::span<const Complex> y,
                            const OperatorSet& ops, const AdmmPrecomp& pre);

AdmmResult run_admm(const SymbolSet& x, const OperatorSet& ops, const AdmmConfig& config);
AdmmResult o_admm(const SymbolSet& x, const OperatorSet& ops, AdmmConfig config);
AdmmResult cu_admm(const SymbolSet& x, const OperatorSet& ops, AdmmConfig config);

void write_history_csv(std::ostream& os, const std::vector<IterRecord>& history);

struct WindowSpec {
  std::size_t subband = 0;
  double beta = 0.0;
  std::size_t roll_len = 0;  // L_roff
  std::size_t prefix = 0;
  std::size_t postfix = 0;
  std::vector<double> weights;  // one sub-symbol, prefix + grid + postfix

  BlockLayout layout() const;
};

// Raised-cosine ramps over the first L_roff samples of the CP and over an
// L_roff-sample cyclic postfix, L_roff = round(beta * (J N_i + L_cp,i)).
WindowSpec build_window(const NumerologyPlan& plan, std::size_t i, double beta);
OperatorSet windowed_operators(const NumerologyPlan& plan, const std::vector<WindowSpec>& windows);

struct ProbeReport {
  bool feasible = false;
  bool consensus = false;
  bool optimal = false;
  double objective = 0.0;
  double best_candidate = 0.0;
  double peak = 0.0;
  double level = 0.0;
  double residual = 0.0;
  std::size_t candidates = 0;

  bool passed() const { return feasible && consensus && optimal; }
};

// Sampling-based optimality check: n_samples random feasible points plus
// n_local feasible perturbations of the solution must not beat it.
ProbeReport optimality_probe(const AdmmResult& result, const SymbolSet& x,
                             const OperatorSet& ops, const AdmmPrecomp& pre, double tol,
                             std::size_t n_samples, std::size_t n_local, std::uint64_t seed);

}  // namespace mnpapr
