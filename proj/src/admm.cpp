#include "mnpapr/admm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>

#include "mnpapr/clipfilter.hpp"

namespace mnpapr {

namespace {

double norm_sq(std::span<const Complex> s) {
  double e = 0.0;
  for (const Complex& v : s) e += std::norm(v);
  return e;
}

double peak(std::span<const Complex> s) {
  double m = 0.0;
  for (const Complex& v : s) m = std::max(m, std::norm(v));
  return std::sqrt(m);
}

double evm_db(double objective) {
  const double ratio = 2.0 * objective;
  return ratio > 0.0 ? std::max(-200.0, 10.0 * std::log10(ratio)) : -200.0;
}

void apply_inverse(const Eigen::MatrixXcd& m, std::span<const Complex> rhs,
                   std::span<Complex> out) {
  const auto k = static_cast<Eigen::Index>(rhs.size());
  Eigen::Map<const Eigen::VectorXcd> r(rhs.data(), k);
  Eigen::Map<Eigen::VectorXcd> o(out.data(), k);
  o.noalias() = m * r;
}

}  // namespace

double AdmmConfig::gamma_from_cr(double cr_db) { return std::pow(10.0, cr_db / 20.0); }

void AdmmConfig::validate() const {
  if (!(rho > 0.0)) throw std::invalid_argument("admm: rho must be > 0");
  if (!(gamma > 0.0)) throw std::invalid_argument("admm: gamma must be > 0");
  if (max_iters < 1) throw std::invalid_argument("admm: max_iters must be >= 1");
}

double AdmmConfig::tolerance(std::size_t signal_len) const {
  return primal_tol >= 0.0 ? primal_tol : 1e-6 * std::sqrt(static_cast<double>(signal_len));
}

double evm_sigma(const SubbandSymbols& x) {
  const double s = norm_sq(x.values);
  if (!(s > 0.0)) {
    throw std::invalid_argument("evm_sigma: subband " + std::to_string(x.subband + 1) +
                                " has a zero symbol vector");
  }
  return s;
}

AdmmPrecomp precompute(const SymbolSet& x, const OperatorSet& ops, const AdmmConfig& config) {
  if (!(config.rho > 0.0)) throw std::invalid_argument("precompute: rho must be > 0");
  if (x.size() != ops.count()) throw std::invalid_argument("precompute: subband count mismatch");
  AdmmPrecomp pre;
  pre.rho = config.rho;
  for (std::size_t i = 0; i < ops.count(); ++i) {
    check_conforms(x[i], ops.plan(), i);
    const double s = evm_sigma(x[i]);
    pre.sigma_sq.push_back(s);
    Eigen::MatrixXcd g = ops[i].block_gram();
    const auto k = g.rows();
    Eigen::MatrixXcd a = config.rho * g;
    a.diagonal().array() += 1.0 / s;
    Eigen::LLT<Eigen::MatrixXcd> llt(a);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("precompute: sigma^-2 I + rho G is not positive definite for "
                               "subband " + std::to_string(i + 1));
    }
    pre.inverse.push_back(llt.solve(Eigen::MatrixXcd::Identity(k, k)));
    pre.gram.push_back(std::move(g));
  }
  const TimeSignal z = ops.compose(x);
  pre.level = config.gamma * std::sqrt(norm_sq(z) / static_cast<double>(z.size()));
  return pre;
}

AdmmState init_state(const SymbolSet& x, const OperatorSet& ops, double level) {
  AdmmState st;
  st.xhat = x;
  st.level = level;
  st.sum.assign(ops.signal_len(), Complex{});
  for (std::size_t i = 0; i < ops.count(); ++i) {
    st.parts.push_back(ops[i].modulate(x[i]));
    for (std::size_t n = 0; n < st.sum.size(); ++n) st.sum[n] += st.parts[i][n];
  }
  st.zhat = st.sum;
  st.y.assign(ops.signal_len(), Complex{});
  return st;
}

void x_step(std::size_t i, AdmmState& state, const SymbolSet& x, const AdmmPrecomp& pre,
            const OperatorSet& ops) {
  const double rho = pre.rho;
  const std::size_t len = state.sum.size();
  TimeSignal r(len);
  TimeSignal& part = state.parts[i];
  for (std::size_t n = 0; n < len; ++n) {
    r[n] = rho * (state.sum[n] - part[n] - state.zhat[n]) + state.y[n];
  }
  const SubbandSymbols v = ops[i].analyze(r);
  const double inv_sigma = 1.0 / pre.sigma_sq[i];
  SubbandSymbols& xh = state.xhat[i];
  CVec rhs(xh.width);
  for (std::size_t b = 0; b < xh.blocks; ++b) {
    const auto xb = x[i].block(b);
    const auto vb = v.block(b);
    for (std::size_t k = 0; k < xh.width; ++k) rhs[k] = inv_sigma * xb[k] - vb[k];
    apply_inverse(pre.inverse[i], rhs, xh.block(b));
  }
  for (std::size_t n = 0; n < len; ++n) state.sum[n] -= part[n];
  ops[i].modulate(xh, part);
  for (std::size_t n = 0; n < len; ++n) state.sum[n] += part[n];
}

void z_step(AdmmState& state, double level, double rho) {
  const double inv = 1.0 / rho;
  for (std::size_t n = 0; n < state.zhat.size(); ++n) state.zhat[n] = state.sum[n] + inv * state.y[n];
  clip_in_place(state.zhat, level);
}

void dual_step(AdmmState& state, double rho) {
  for (std::size_t n = 0; n < state.y.size(); ++n) {
    state.y[n] += rho * (state.sum[n] - state.zhat[n]);
  }
}

double primal_residual(const AdmmState& state) {
  double e = 0.0;
  for (std::size_t n = 0; n < state.sum.size(); ++n) e += std::norm(state.sum[n] - state.zhat[n]);
  return std::sqrt(e);
}

double admm_objective(const SymbolSet& x, const SymbolSet& xhat, const AdmmPrecomp& pre) {
  double f = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double e = 0.0;
    for (std::size_t k = 0; k < x[i].values.size(); ++k) {
      e += std::norm(x[i].values[k] - xhat[i].values[k]);
    }
    f += e / (2.0 * pre.sigma_sq[i]);
  }
  return f;
}

double augmented_lagrangian(const SymbolSet& x, const SymbolSet& xhat,
                            std::span<const Complex> zhat, std::span<const Complex> y,
                            const OperatorSet& ops, const AdmmPrecomp& pre) {
  const TimeSignal s = ops.compose(xhat);
  if (zhat.size() != s.size() || y.size() != s.size()) {
    throw std::invalid_argument("augmented_lagrangian: signal length mismatch");
  }
  double inner = 0.0;
  double pen = 0.0;
  for (std::size_t n = 0; n < s.size(); ++n) {
    const Complex r = s[n] - zhat[n];
    inner += (std::conj(y[n]) * r).real();
    pen += std::norm(r);
  }
  return admm_objective(x, xhat, pre) + inner + 0.5 * pre.rho * pen;
}

AdmmResult run_admm(const SymbolSet& x, const OperatorSet& ops, const AdmmConfig& config) {
  config.validate();
  const AdmmPrecomp pre = precompute(x, ops, config);
  AdmmState st = init_state(x, ops, pre.level);
  const double tol = config.tolerance(ops.signal_len());
  const double root_len = std::sqrt(static_cast<double>(ops.signal_len()));

  AdmmResult res;
  res.initial_level = pre.level;
  for (std::size_t l = 0; l < config.max_iters; ++l) {
    if (config.variant == AdmmVariant::constraint_update) {
      st.level = config.gamma * std::sqrt(norm_sq(st.zhat)) / root_len;
    }
    for (std::size_t i = 0; i < ops.count(); ++i) x_step(i, st, x, pre, ops);
    z_step(st, st.level, config.rho);
    dual_step(st, config.rho);
    st.iter = l + 1;

    IterRecord rec;
    rec.iter = st.iter;
    rec.primal_residual = primal_residual(st);
    rec.level = st.level;
    if (config.record_evm) {
      rec.objective = admm_objective(x, st.xhat, pre);
      rec.evm_db = evm_db(rec.objective);
    }
    res.history.push_back(rec);
    if (rec.primal_residual <= tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = st.iter;
  res.final_level = st.level;
  res.xhat = std::move(st.xhat);
  res.zhat = std::move(st.zhat);
  res.y = std::move(st.y);
  return res;
}

AdmmResult o_admm(const SymbolSet& x, const OperatorSet& ops, AdmmConfig config) {
  config.variant = AdmmVariant::original;
  return run_admm(x, ops, config);
}

AdmmResult cu_admm(const SymbolSet& x, const OperatorSet& ops, AdmmConfig config) {
  config.variant = AdmmVariant::constraint_update;
  return run_admm(x, ops, config);
}

void write_history_csv(std::ostream& os, const std::vector<IterRecord>& history) {
  os << "iter,objective,primal_residual,A_current,evm_db\n";
  os.precision(12);
  for (const IterRecord& r : history) {
    os << r.iter << ',' << r.objective << ',' << r.primal_residual << ',' << r.level << ','
       << r.evm_db << '\n';
  }
}

BlockLayout WindowSpec::layout() const { return BlockLayout{prefix, postfix, weights}; }

WindowSpec build_window(const NumerologyPlan& plan, std::size_t i, double beta) {
  if (!(beta >= 0.0 && beta < 1.0)) throw std::invalid_argument("build_window: beta must lie in [0, 1)");
  const Subband& sb = plan[i];
  WindowSpec w;
  w.subband = i;
  w.beta = beta;
  w.roll_len = static_cast<std::size_t>(std::llround(beta * static_cast<double>(sb.symbol_len())));
  if (w.roll_len > 0 && w.roll_len >= sb.cp_len) {
    throw std::invalid_argument("build_window: ramp of " + std::to_string(w.roll_len) +
                                " samples is not shorter than the CP of subband " +
                                std::to_string(i + 1) + " (" + std::to_string(sb.cp_len) + ")");
  }
  w.prefix = sb.cp_len;
  w.postfix = w.roll_len;
  w.weights.assign(w.prefix + sb.grid + w.postfix, 1.0);
  const std::size_t tail = w.prefix + sb.grid;
  for (std::size_t k = 0; k < w.roll_len; ++k) {
    const double rise =
        0.5 * (1.0 - std::cos(std::numbers::pi * (static_cast<double>(k) + 0.5) /
                              static_cast<double>(w.roll_len)));
    w.weights[k] = rise;
    w.weights[tail + k] = 1.0 - rise;
  }
  return w;
}

OperatorSet windowed_operators(const NumerologyPlan& plan, const std::vector<WindowSpec>& windows) {
  if (windows.size() != plan.count()) {
    throw std::invalid_argument("windowed_operators: expected " + std::to_string(plan.count()) +
                                " windows, got " + std::to_string(windows.size()));
  }
  std::vector<BlockLayout> layouts;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const WindowSpec& w = windows[i];
    if (w.subband != i || w.prefix != plan[i].cp_len ||
        w.weights.size() != w.prefix + plan[i].grid + w.postfix) {
      throw std::invalid_argument("windowed_operators: window " + std::to_string(i + 1) +
                                  " does not match the plan");
    }
    layouts.push_back(w.layout());
  }
  return OperatorSet(plan, std::move(layouts));
}

ProbeReport optimality_probe(const AdmmResult& result, const SymbolSet& x,
                             const OperatorSet& ops, const AdmmPrecomp& pre, double tol,
                             std::size_t n_samples, std::size_t n_local, std::uint64_t seed) {
  ProbeReport rep;
  rep.level = pre.level;
  rep.peak = peak(result.zhat);
  rep.feasible = rep.peak <= pre.level * (1.0 + 1e-6);
  {
    const TimeSignal s = ops.compose(result.xhat);
    double e = 0.0;
    for (std::size_t n = 0; n < s.size(); ++n) e += std::norm(s[n] - result.zhat[n]);
    rep.residual = std::sqrt(e);
  }
  rep.consensus = rep.residual <= tol;
  rep.objective = admm_objective(x, result.xhat, pre);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, std::numbers::sqrt2 / 2.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  // Scales a candidate towards the origin until its composite meets the level.
  auto feasible_objective = [&](SymbolSet& cand) {
    const TimeSignal s = ops.compose(cand);
    const double pk = peak(s);
    if (pk > pre.level) {
      const double lambda = pre.level / pk;
      for (auto& band : cand) {
        for (Complex& v : band.values) v *= lambda;
      }
    }
    return admm_objective(x, cand, pre);
  };

  double best = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < n_samples; ++c) {
    SymbolSet cand = x;
    const double spread = unit(rng);
    for (auto& band : cand) {
      for (Complex& v : band.values) v += spread * Complex{normal(rng), normal(rng)};
    }
    best = std::min(best, feasible_objective(cand));
  }
  for (std::size_t c = 0; c < n_local; ++c) {
    SymbolSet cand = result.xhat;
    const double delta = std::pow(10.0, -6.0 + 5.0 * unit(rng));
    for (auto& band : cand) {
      for (Complex& v : band.values) v += delta * Complex{normal(rng), normal(rng)};
    }
    best = std::min(best, feasible_objective(cand));
  }
  rep.candidates = n_samples + n_local;
  rep.best_candidate = best;
  rep.optimal = rep.candidates == 0 || rep.objective <= best * (1.0 + 1e-8) + 1e-300;
  return rep;
}

}  // namespace mnpapr
