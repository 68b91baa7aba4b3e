#pragma once

#include <complex>
#include <vector>

namespace mnpapr {

using Complex = std::complex<double>;
using CVec = std::vector<Complex>;

// Complex baseband samples at the unified sampling rate (J * N_1 samples per
// 1/f1). Composite signals, per-subband signals and clipping noise all use it.
using TimeSignal = CVec;

}  // namespace mnpapr
