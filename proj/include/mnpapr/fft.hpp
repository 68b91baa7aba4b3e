#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "mnpapr/types.hpp"

namespace mnpapr {

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// Iterative radix-2 decimation-in-time FFT for power-of-two sizes.
///
/// The plan holds only immutable tables, so one instance can be shared by
/// any number of threads. Neither direction is normalized:
///   forward: X[k] = sum_n x[n] exp(-j 2 pi k n / N)
///   inverse: x[n] = sum_k X[k] exp(+j 2 pi k n / N)
class Fft {
 public:
  explicit Fft(std::size_t n);

  std::size_t size() const { return n_; }

  void forward(std::span<Complex> data) const { transform(data, false); }
  void inverse(std::span<Complex> data) const { transform(data, true); }

 private:
  void transform(std::span<Complex> data, bool inverse) const;

  std::size_t n_;
  std::vector<std::size_t> bitrev_;
  CVec twiddle_;  // exp(-j 2 pi k / N), k < N/2
};

}  // namespace mnpapr
