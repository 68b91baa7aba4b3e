#pragma once

#include <cmath>
#include <random>

#include "mnpapr/waveform.hpp"

namespace fixtures {

using namespace mnpapr;

inline NumerologyPlan reference_plan() {
  return build_plan(PlanRequest{{0, 1}, {56, 28}, {8}, 4, {1.0, 1.0}, 0.07});
}

// J N_1 = 32 with a 4-sample CP on subband 1.
inline NumerologyPlan small_plan(double cp = 0.1) {
  return build_plan(PlanRequest{{0, 1}, {6, 3}, {2}, 2, {1.0, 1.0}, cp});
}

// K = [4, 2], J = 1, no CP: N = [8, 4], L_sys = 8.
inline NumerologyPlan tiny_plan() {
  return build_plan(PlanRequest{{0, 1}, {4, 2}, {0}, 1, {1.0, 1.0}, 0.0});
}

// Deterministic symbols shared with the numpy oracle.
inline SymbolSet oracle_symbols(const NumerologyPlan& plan) {
  SymbolSet xs{SubbandSymbols::zeros(plan, 0), SubbandSymbols::zeros(plan, 1)};
  for (std::size_t k = 0; k < xs[0].width; ++k) {
    xs[0].values[k] = {std::cos(0.3 * double(k) + 0.1), std::sin(0.7 * double(k))};
  }
  for (std::size_t b = 0; b < xs[1].blocks; ++b) {
    for (std::size_t k = 0; k < xs[1].width; ++k) {
      xs[1].block(b)[k] = {k % 2 ? -1.0 : 1.0, 0.5 * std::cos(0.2 * double(k + 28 * b))};
    }
  }
  return xs;
}

inline SymbolSet random_symbols(const NumerologyPlan& plan, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  SymbolSet xs;
  for (std::size_t i = 0; i < plan.count(); ++i) {
    SubbandSymbols x = SubbandSymbols::zeros(plan, i);
    for (auto& v : x.values) v = {g(rng), g(rng)};
    xs.push_back(std::move(x));
  }
  return xs;
}

inline TimeSignal random_signal(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, std::sqrt(0.5));
  TimeSignal s(n);
  for (auto& v : s) v = {g(rng), g(rng)};
  return s;
}

inline double inner(std::span<const Complex> a, std::span<const Complex> b) {
  Complex acc{};
  for (std::size_t n = 0; n < a.size(); ++n) acc += std::conj(a[n]) * b[n];
  return acc.real();
}

}  // namespace fixtures
