#include "mnpapr/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace mnpapr {

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_power_of_two(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

Fft::Fft(std::size_t n) : n_(n) {
  if (!is_power_of_two(n)) {
    throw std::invalid_argument("Fft: size " + std::to_string(n) + " is not a power of two");
  }
  std::size_t bits = 0;
  while ((std::size_t{1} << bits) < n) ++bits;

  bitrev_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t r = 0;
    for (std::size_t b = 0; b < bits; ++b) {
      if (i & (std::size_t{1} << b)) r |= std::size_t{1} << (bits - 1 - b);
    }
    bitrev_[i] = r;
  }

  twiddle_.resize(n / 2);
  for (std::size_t k = 0; k < n / 2; ++k) {
    const double phase = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    twiddle_[k] = {std::cos(phase), std::sin(phase)};
  }
}

void Fft::transform(std::span<Complex> data, bool inverse) const {
  if (data.size() != n_) {
    throw std::invalid_argument("Fft: buffer length " + std::to_string(data.size()) +
                                " != plan size " + std::to_string(n_));
  }
  if (n_ == 1) return;

  for (std::size_t i = 0; i < n_; ++i) {
    const std::size_t j = bitrev_[i];
    if (i < j) std::swap(data[i], data[j]);
  }

  for (std::size_t len = 2; len <= n_; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t stride = n_ / len;
    for (std::size_t start = 0; start < n_; start += len) {
      for (std::size_t k = 0; k < half; ++k) {
        const Complex w = twiddle_[k * stride];
        const double wr = w.real();
        const double wi = inverse ? -w.imag() : w.imag();
        const Complex b = data[start + k + half];
        // plain multiply; std::complex operator* carries inf/nan recovery
        const Complex t{wr * b.real() - wi * b.imag(), wr * b.imag() + wi * b.real()};
        data[start + k + half] = data[start + k] - t;
        data[start + k] += t;
      }
    }
  }
}

}  // namespace mnpapr
