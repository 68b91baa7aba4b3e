#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <doctest.h>

#include "dense_oracle.hpp"
#include "fixtures.hpp"
#include "frozen.hpp"
#include "mnpapr/admm.hpp"
#include "mnpapr/clipfilter.hpp"
#include "mnpapr/metrics.hpp"

using namespace mnpapr;
using namespace fixtures;

namespace {

double peak(std::span<const Complex> s) {
  double m = 0.0;
  for (const auto& v : s) m = std::max(m, std::abs(v));
  return m;
}

double norm2(std::span<const Complex> s) {
  double e = 0.0;
  for (const auto& v : s) e += std::norm(v);
  return std::sqrt(e);
}

AdmmConfig fixed_iters(std::size_t n, AdmmVariant v = AdmmVariant::original) {
  AdmmConfig c;
  c.max_iters = n;
  c.primal_tol = 0.0;
  c.variant = v;
  return c;
}

}  // namespace

TEST_CASE("evm sigma") {
  const NumerologyPlan p = reference_plan();
  const SymbolSet x = gen_qpsk(1, 0, p);
  CHECK(evm_sigma(x[0]) == doctest::Approx(56.0).epsilon(1e-14));
  CHECK(evm_sigma(x[1]) == doctest::Approx(56.0).epsilon(1e-14));
  std::mt19937_64 rng(1);
  const SymbolSet r = random_symbols(p, rng);
  double e = 0.0;
  for (const auto& v : r[1].values) e += std::norm(v);
  CHECK(evm_sigma(r[1]) == doctest::Approx(e).epsilon(1e-14));
  CHECK_THROWS_AS(evm_sigma(SubbandSymbols::zeros(p, 0)), std::invalid_argument);
}

TEST_CASE("config validation") {
  AdmmConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(AdmmConfig::gamma_from_cr(5.0) == doctest::Approx(c.gamma).epsilon(1e-15));
  CHECK(c.tolerance(548) == doctest::Approx(1e-6 * std::sqrt(548.0)));
  c.primal_tol = 0.5;
  CHECK(c.tolerance(548) == 0.5);
  c = {};
  c.rho = 0.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.gamma = -1.0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.max_iters = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("precompute") {
  const NumerologyPlan nocp = build_plan(PlanRequest{{0, 1}, {56, 28}, {8}, 4, {1.0, 1.0}, 0.0});
  const OperatorSet ops0(nocp);
  const SymbolSet x0 = gen_qpsk(2, 0, nocp);
  AdmmConfig cfg;
  const AdmmPrecomp pre0 = precompute(x0, ops0, cfg);
  for (std::size_t i = 0; i < 2; ++i) {
    const double m = 1.0 / (1.0 / 56.0 + cfg.rho);
    const long k = long(nocp[i].subcarriers);
    CHECK((pre0.inverse[i] - m * Eigen::MatrixXcd::Identity(k, k)).norm() < 1e-12);
  }

  const NumerologyPlan p = reference_plan();
  const OperatorSet ops(p);
  const SymbolSet x = gen_qpsk(2, 1, p);
  const AdmmPrecomp pre = precompute(x, ops, cfg);
  const Eigen::MatrixXcd f1 = oracle::modulator(p, 0);
  const Eigen::MatrixXcd g1 = f1.adjoint() * f1;
  Eigen::MatrixXcd e1 = Eigen::MatrixXcd::Zero(f1.rows(), f1.rows());
  for (long n = 512; n < 548; ++n) e1(n, n) = 1.0;
  CHECK((g1 - (Eigen::MatrixXcd::Identity(56, 56) + f1.adjoint() * e1 * f1)).norm() < 1e-12);
  CHECK((pre.gram[0] - g1).norm() < 1e-12);
  const Eigen::MatrixXcd direct = (Eigen::MatrixXcd::Identity(56, 56) / 56.0 + cfg.rho * g1).inverse();
  CHECK((pre.inverse[0] - direct).norm() < 1e-10);

  const TimeSignal z = ops.compose(x);
  CHECK(pre.level == doctest::Approx(cfg.gamma * norm2(z) / std::sqrt(548.0)).epsilon(1e-14));
  CHECK(pre.sigma_sq[0] == doctest::Approx(56.0));
}

TEST_CASE("frozen O-ADMM and CU-ADMM iterates") {
  const NumerologyPlan p = reference_plan();
  const OperatorSet ops(p);
  const SymbolSet x = oracle_symbols(p);
  const AdmmResult o = o_admm(x, ops, fixed_iters(10));
  REQUIRE(o.history.size() == 10);
  CHECK(o.history.back().objective == doctest::Approx(frozen::oadmm_objective).epsilon(1e-10));
  CHECK(o.history.back().primal_residual == doctest::Approx(frozen::oadmm_residual).epsilon(1e-9));
  CHECK(std::abs(o.xhat[0].values[0] - frozen::oadmm_x1_0) < 1e-10);
  CHECK(std::abs(o.xhat[1].values[33] - frozen::oadmm_x2_33) < 1e-10);
  CHECK(o.history.back().evm_db == doctest::Approx(10.0 * std::log10(2.0 * frozen::oadmm_objective)));

  const AdmmResult c = cu_admm(x, ops, fixed_iters(10));
  CHECK(c.history.back().objective == doctest::Approx(frozen::cuadmm_objective).epsilon(1e-10));
  CHECK(c.final_level == doctest::Approx(frozen::cuadmm_level).epsilon(1e-10));
  CHECK(std::abs(c.xhat[0].values[10] - frozen::cuadmm_x1_10) < 1e-10);
}

TEST_CASE("x-step limits and fixed point") {
  const NumerologyPlan p = reference_plan();
  const OperatorSet ops(p);
  const SymbolSet x = gen_qpsk(3, 0, p);
  AdmmConfig cfg;
  cfg.rho = 1e-12;
  const AdmmPrecomp tiny_rho = precompute(x, ops, cfg);
  std::mt19937_64 rng(3);
  AdmmState st = init_state(x, ops, tiny_rho.level);
  st.zhat = random_signal(ops.signal_len(), rng);
  for (auto& v : st.y) v = {1e-13, 0.0};
  x_step(0, st, x, tiny_rho, ops);
  CHECK(oracle::max_abs_diff(st.xhat[0].values, x[0].values) < 1e-8);

  const AdmmPrecomp pre = precompute(x, ops, AdmmConfig{});
  AdmmState fixed = init_state(x, ops, pre.level);
  for (std::size_t i = 0; i < 2; ++i) x_step(i, fixed, x, pre, ops);
  for (std::size_t i = 0; i < 2; ++i) CHECK(oracle::max_abs_diff(fixed.xhat[i].values, x[i].values) < 1e-10);
}

TEST_CASE("x-step reaches a stationary point of the augmented Lagrangian") {
  const NumerologyPlan p = small_plan();
  const OperatorSet ops(p);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 10; ++t) {
    const SymbolSet x = random_symbols(p, rng);
    const AdmmPrecomp pre = precompute(x, ops, AdmmConfig{});
    AdmmState st = init_state(x, ops, pre.level);
    st.zhat = random_signal(ops.signal_len(), rng);
    st.y = random_signal(ops.signal_len(), rng);
    const std::size_t i = t % 2;
    x_step(i, st, x, pre, ops);
    double g2 = 0.0;
    const double h = 1e-5;
    SymbolSet pt = st.xhat;
    for (std::size_t k = 0; k < pt[i].values.size(); ++k) {
      for (const Complex d : {Complex{h, 0.0}, Complex{0.0, h}}) {
        pt[i].values[k] = st.xhat[i].values[k] + d;
        const double up = augmented_lagrangian(x, pt, st.zhat, st.y, ops, pre);
        pt[i].values[k] = st.xhat[i].values[k] - d;
        const double dn = augmented_lagrangian(x, pt, st.zhat, st.y, ops, pre);
        pt[i].values[k] = st.xhat[i].values[k];
        g2 += std::pow((up - dn) / (2.0 * h), 2);
      }
    }
    CHECK(std::sqrt(g2) < 1e-6);
    CHECK(oracle::max_abs_diff(st.sum, ops.compose(st.xhat)) < 1e-13);
  }
}

TEST_CASE("z-step is the projection onto the amplitude ball") {
  AdmmState st;
  st.sum = {Complex{0.3, 0.1}, std::polar(2.0, 0.7)};
  st.y = {Complex{}, Complex{}};
  st.zhat = {Complex{}, Complex{}};
  z_step(st, 1.0, 0.25);
  CHECK(st.zhat[0] == Complex{0.3, 0.1});
  CHECK(std::abs(st.zhat[1] - std::polar(1.0, 0.7)) < 1e-15);

  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int t = 0; t < 50; ++t) {
    const Complex u{g(rng), g(rng)};
    st.sum = {u};
    st.y = {Complex{}};
    st.zhat = {Complex{}};
    z_step(st, 0.8, 0.25);
    double best = INFINITY;
    const double step = 0.8 / 500.0;
    for (int a = -500; a <= 500; ++a) {
      for (int b = -500; b <= 500; ++b) {
        const Complex v{a * step, b * step};
        if (std::abs(v) <= 0.8) best = std::min(best, std::norm(u - v));
      }
    }
    CHECK(std::norm(u - st.zhat[0]) <= best + 1e-12);
    CHECK(std::abs(st.zhat[0]) <= 0.8 * (1.0 + 1e-14));
  }
}

TEST_CASE("dual step") {
  std::mt19937_64 rng(6);
  AdmmState st;
  st.sum = random_signal(16, rng);
  st.zhat = st.sum;
  st.y = random_signal(16, rng);
  const TimeSignal y0 = st.y;
  dual_step(st, 0.25);
  CHECK(st.y == y0);
  st.zhat = random_signal(16, rng);
  dual_step(st, 0.0);
  CHECK(st.y == y0);
  dual_step(st, 0.3);
  for (std::size_t n = 0; n < 16; ++n) CHECK(st.y[n] == y0[n] + 0.3 * (st.sum[n] - st.zhat[n]));
}

TEST_CASE("feasible start leaves the iterates in place") {
  const NumerologyPlan p = reference_plan();
  const OperatorSet ops(p);
  const SymbolSet x = gen_qpsk(7, 0, p);
  AdmmConfig cfg = fixed_iters(10);
  cfg.gamma = 10.0 * std::sqrt(548.0);
  for (AdmmVariant v : {AdmmVariant::original, AdmmVariant::constraint_update}) {
    cfg.variant = v;
    const AdmmResult r = run_admm(x, ops, cfg);
    for (std::size_t i = 0; i < 2; ++i) CHECK(oracle::max_abs_diff(r.xhat[i].values, x[i].values) < 1e-12);
    CHECK(r.history.back().objective < 1e-24);
    CHECK(r.history.back().evm_db < -200.0 + 1e-9);
    const AdmmPrecomp pre = precompute(x, ops, cfg);
    const ProbeReport rep = optimality_probe(r, x, ops, pre, 1e-9, 100, 10, 1);
    CHECK(rep.passed());
    CHECK(rep.objective < 1e-24);
  }
}

TEST_CASE("O-ADMM converges to the sampled optimum on a tiny instance") {
  const NumerologyPlan p = tiny_plan();
  const OperatorSet ops(p);
  AdmmConfig cfg;
  cfg.gamma = AdmmConfig::gamma_from_cr(2.0);
  cfg.max_iters = 20000;
  cfg.primal_tol = 1e-12;
  for (std::uint64_t t = 0; t < 5; ++t) {
    const SymbolSet x = gen_qpsk(8, t, p);
    const AdmmResult r = run_admm(x, ops, cfg);
    CHECK(r.converged);
    const AdmmPrecomp pre = precompute(x, ops, cfg);
    const ProbeReport rep = optimality_probe(r, x, ops, pre, 1e-9, 2000, 200, t);
    CHECK(rep.feasible);
    CHECK(rep.consensus);
    CHECK(rep.optimal);
    for (const IterRecord& h : r.history) CHECK(std::isfinite(h.objective));

    AdmmResult broken = r;
    for (auto& v : broken.zhat) v *= 2.0;
    CHECK_FALSE(optimality_probe(broken, x, ops, pre, 1e-9, 10, 10, t).feasible);
  }
}

TEST_CASE("primal residual decreases over the first iterations") {
  const NumerologyPlan p = reference_plan();
  const OperatorSet ops(p);
  for (AdmmVariant v : {AdmmVariant::original, AdmmVariant::constraint_update}) {
    std::size_t dec = 0;
    for (std::uint64_t t = 0; t < 100; ++t) {
      const AdmmResult r = run_admm(gen_qpsk(9, t, p), ops, fixed_iters(10, v));
      dec += r.history[9].primal_residual < r.history[0].primal_residual;
    }
    CHECK(dec >= 99);
  }
}

TEST_CASE("scaling equivariance with the penalty scaled by 1/c^2") {
  const NumerologyPlan p = small_plan();
  const OperatorSet ops(p);
  const SymbolSet x = gen_qpsk(10, 0, p);
  const double c = 3.5;
  SymbolSet xc = x;
  for (auto& s : xc) {
    for (auto& v : s.values) v *= c;
  }
  AdmmConfig a = fixed_iters(15);
  AdmmConfig b = a;
  b.rho = a.rho / (c * c);
  const AdmmResult r = run_admm(x, ops, a);
  const AdmmResult rc = run_admm(xc, ops, b);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < x[i].values.size(); ++k) {
      CHECK(std::abs(rc.xhat[i].values[k] - c * r.xhat[i].values[k]) < 1e-10 * c);
    }
  }
  for (std::size_t n = 0; n < r.zhat.size(); ++n) {
    CHECK(std::abs(rc.zhat[n] - c * r.zhat[n]) < 1e-10 * c);
    CHECK(std::abs(rc.y[n] / b.rho - c * r.y[n] / a.rho) < 1e-9 * c);
  }
  CHECK(rc.final_level == doctest::Approx(c * r.final_level).epsilon(1e-12));
}

TEST_CASE("CU-ADMM level tightening and feasibility") {
  const NumerologyPlan p = reference_plan();
  const OperatorSet ops(p);
  const AdmmConfig cfg = fixed_iters(10, AdmmVariant::constraint_update);
  std::size_t within = 0;
  for (std::uint64_t t = 0; t < 50; ++t) {
    const SymbolSet x = gen_qpsk(11, t, p);
    const AdmmPrecomp pre = precompute(x, ops, cfg);
    AdmmState st = init_state(x, ops, pre.level);
    const double z_norm = norm2(st.zhat);
    const double a1 = cfg.gamma * z_norm / std::sqrt(548.0);
    for (std::size_t l = 0; l < cfg.max_iters; ++l) {
      const double level = cfg.gamma * norm2(st.zhat) / std::sqrt(548.0);
      if (norm2(st.zhat) <= z_norm) CHECK(level <= a1 * (1.0 + 1e-15));
      for (std::size_t i = 0; i < 2; ++i) x_step(i, st, x, pre, ops);
      z_step(st, level, cfg.rho);
      dual_step(st, cfg.rho);
    }
    const AdmmResult r = run_admm(x, ops, cfg);
    CHECK(oracle::max_abs_diff(r.zhat, st.zhat) < 1e-13);
    CHECK(peak(r.zhat) <= r.final_level * (1.0 + 1e-12));
    within += peak(r.zhat) <= cfg.gamma * norm2(r.zhat) / std::sqrt(548.0) * (1.0 + 1e-3);
    CHECK(papr_db(r.zhat) <= 5.0 + 0.05);
  }
  CHECK(within == 50);
}

TEST_CASE("history csv") {
  const NumerologyPlan p = reference_plan();
  const AdmmResult r = o_admm(gen_qpsk(12, 0, p), OperatorSet(p), fixed_iters(3));
  std::ostringstream os;
  write_history_csv(os, r.history);
  const std::string s = os.str();
  CHECK(s.rfind("iter,objective,primal_residual,A_current,evm_db\n", 0) == 0);
  CHECK(std::count(s.begin(), s.end(), '\n') == 4);
}

TEST_CASE("raised-cosine windows") {
  const NumerologyPlan p = reference_plan();
  const WindowSpec none = build_window(p, 0, 0.0);
  CHECK(none.roll_len == 0);
  CHECK(none.postfix == 0);
  for (double w : none.weights) CHECK(w == 1.0);
  const SymbolSet x = gen_qpsk(13, 0, p);
  const OperatorSet plain(p);
  const OperatorSet w0 = windowed_operators(p, {build_window(p, 0, 0.0), build_window(p, 1, 0.0)});
  CHECK(w0.compose(x) == plain.compose(x));

  const WindowSpec w = build_window(p, 0, 0.04);
  CHECK(w.roll_len == 22);
  CHECK(w.prefix == 36);
  CHECK(w.postfix == 22);
  REQUIRE(w.weights.size() == 36 + 512 + 22);
  const std::size_t r = w.roll_len, n = w.weights.size();
  CHECK(w.weights[0] < 0.01);
  for (std::size_t k = 0; k < r; ++k) {
    CHECK(w.weights[k] + w.weights[r - 1 - k] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(w.weights[n - 1 - k] == doctest::Approx(w.weights[k]).epsilon(1e-14));
    if (k > 0) CHECK(w.weights[k] > w.weights[k - 1]);
  }
  for (std::size_t k = r; k < n - r; ++k) CHECK(w.weights[k] == 1.0);
  CHECK_THROWS_AS(build_window(p, 0, 0.07), std::invalid_argument);
  CHECK_THROWS_AS(build_window(p, 0, 1.0), std::invalid_argument);
}

TEST_CASE("CU-ADMM on windowed operators cuts the PAPR") {
  const NumerologyPlan p = reference_plan();
  const OperatorSet ops = windowed_operators(p, {build_window(p, 0, 0.04), build_window(p, 1, 0.04)});
  const AdmmConfig cfg = fixed_iters(10, AdmmVariant::constraint_update);
  for (std::uint64_t t = 0; t < 20; ++t) {
    const AdmmResult r = run_admm(gen_qpsk(14, t, p), ops, cfg);
    CHECK(r.zhat.size() == 570);
    CHECK(papr_db(r.zhat) <= 5.0 + 0.05);
  }
}
