#include "mnpapr/waveform.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <utility>

namespace mnpapr {

namespace {

std::string idx(std::size_t i) { return std::to_string(i + 1); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

double Subband::lower_edge_f1() const {
  return (static_cast<double>(offset) - 0.5) * static_cast<double>(spacing);
}

double Subband::upper_edge_f1() const {
  return (static_cast<double>(offset + subcarriers) - 0.5) * static_cast<double>(spacing);
}

double Subband::center_f1() const { return 0.5 * (lower_edge_f1() + upper_edge_f1()); }

double NumerologyPlan::sample_rate_f1() const {
  return static_cast<double>(subbands.at(0).grid * subbands.at(0).spacing);
}

NumerologyPlan build_plan(const PlanRequest& req) {
  const std::size_t m = req.scale_exponents.size();
  if (m == 0) throw std::invalid_argument("build_plan: at least one numerology is required");
  if (req.subcarriers.size() != m) {
    throw std::invalid_argument("build_plan: subcarrier list has " +
                                std::to_string(req.subcarriers.size()) + " entries, expected " +
                                std::to_string(m));
  }
  if (req.guards.size() != m - 1) {
    throw std::invalid_argument("build_plan: guard list has " + std::to_string(req.guards.size()) +
                                " entries, expected " + std::to_string(m - 1));
  }
  if (!req.eta.empty() && req.eta.size() != m) {
    throw std::invalid_argument("build_plan: eta list has " + std::to_string(req.eta.size()) +
                                " entries, expected " + std::to_string(m));
  }
  if (req.scale_exponents.front() != 0) {
    throw std::invalid_argument("build_plan: v_1 must be 0");
  }
  if (req.oversampling == 0 || !is_power_of_two(req.oversampling)) {
    throw std::invalid_argument("build_plan: oversampling J must be a power of two");
  }
  if (!(req.cp_fraction >= 0.0 && req.cp_fraction < 1.0)) {
    throw std::invalid_argument("build_plan: cp_fraction must lie in [0, 1)");
  }

  NumerologyPlan plan;
  plan.oversampling = req.oversampling;
  plan.subbands.resize(m);

  long start_f1 = 0;
  for (std::size_t i = 0; i < m; ++i) {
    Subband& sb = plan.subbands[i];
    const int v = req.scale_exponents[i];
    if (v < 0 || v > 20) throw std::invalid_argument("build_plan: v_" + idx(i) + " out of range");
    if (i > 0 && v < req.scale_exponents[i - 1]) {
      throw std::invalid_argument("build_plan: scale exponents must be non-decreasing");
    }
    if (req.subcarriers[i] == 0) {
      throw std::invalid_argument("build_plan: K_" + idx(i) + " must be at least 1");
    }
    sb.scale_exponent = v;
    sb.spacing = std::size_t{1} << v;
    sb.blocks = sb.spacing;
    sb.subcarriers = req.subcarriers[i];
    sb.eta = req.eta.empty() ? 1.0 : req.eta[i];
    if (!(sb.eta > 0.0)) throw std::invalid_argument("build_plan: eta_" + idx(i) + " must be > 0");

    const long spacing = static_cast<long>(sb.spacing);
    if (start_f1 % spacing != 0) {
      throw std::invalid_argument("build_plan: offset of subband " + idx(i) + " (" +
                                  std::to_string(start_f1) + " f1) is not a multiple of f_" +
                                  idx(i) + " = " + std::to_string(spacing) +
                                  " f1; delta k_" + idx(i) + " would not be an integer");
    }
    sb.offset = static_cast<std::size_t>(start_f1 / spacing);
    start_f1 += static_cast<long>(sb.subcarriers) * spacing;
    if (i + 1 < m) {
      sb.guard = req.guards[i];
      if (sb.guard < 0) {
        throw std::invalid_argument("build_plan: negative guard G_" + idx(i) +
                                    " makes subbands " + idx(i) + " and " + idx(i + 1) +
                                    " overlap");
      }
      start_f1 += sb.guard;
    }
  }
  plan.bandwidth = static_cast<std::size_t>(start_f1);

  for (Subband& sb : plan.subbands) {
    std::size_t n = 1;
    while (n * sb.spacing < plan.bandwidth) n <<= 1;
    sb.fft_bins = n;
    sb.grid = plan.oversampling * n;
  }

  const Subband& first = plan.subbands.front();
  const std::size_t top_blocks = plan.subbands.back().blocks;
  const std::size_t cp_raw =
      static_cast<std::size_t>(std::llround(req.cp_fraction * static_cast<double>(first.grid)));
  const std::size_t cp1 =
      top_blocks * static_cast<std::size_t>(std::llround(static_cast<double>(cp_raw) /
                                                         static_cast<double>(top_blocks)));
  if (req.cp_fraction > 0.0 && cp1 == 0) {
    throw std::invalid_argument(
        "build_plan: CP rounding to a multiple of 2^v_M leaves a zero-length prefix");
  }
  for (Subband& sb : plan.subbands) sb.cp_len = cp1 / sb.blocks;
  plan.lcm_len = first.grid + cp1;

  check_plan_invariants(plan);
  return plan;
}

void check_plan_invariants(const NumerologyPlan& plan) {
  if (plan.subbands.empty()) throw std::logic_error("plan has no subbands");
  const Subband& first = plan.subbands.front();
  const std::size_t rate = first.grid * first.spacing;
  double prev_upper = 0.0;
  for (std::size_t i = 0; i < plan.count(); ++i) {
    const Subband& sb = plan.subbands[i];
    if (sb.spacing != (std::size_t{1} << sb.scale_exponent) || sb.blocks != sb.spacing) {
      throw std::logic_error("plan: spacing of subband " + idx(i) + " is not 2^v");
    }
    if (sb.cp_len * sb.blocks != first.cp_len) {
      throw std::logic_error("plan: L_cp," + idx(i) + " != L_cp,1 / 2^v");
    }
    if (sb.grid * sb.spacing != rate) {
      throw std::logic_error("plan: J N_i f_i differs for subband " + idx(i));
    }
    if (sb.blocks * sb.symbol_len() != plan.lcm_len) {
      throw std::logic_error("plan: blocks * (J N_i + L_cp,i) != L_sys for subband " + idx(i));
    }
    if (sb.offset + sb.subcarriers > sb.grid) {
      throw std::logic_error("plan: subband " + idx(i) + " exceeds its FFT grid");
    }
    const double lower = static_cast<double>(sb.offset * sb.spacing);
    if (i > 0) {
      const double gap = lower - prev_upper;
      if (gap != static_cast<double>(plan.subbands[i - 1].guard)) {
        throw std::logic_error("plan: subbands " + idx(i - 1) + " and " + idx(i) +
                               " are not separated by G");
      }
    }
    prev_upper = static_cast<double>((sb.offset + sb.subcarriers) * sb.spacing);
  }
}

SubbandSymbols SubbandSymbols::zeros(const NumerologyPlan& plan, std::size_t i) {
  const Subband& sb = plan[i];
  SubbandSymbols x;
  x.subband = i;
  x.blocks = sb.blocks;
  x.width = sb.subcarriers;
  x.values.assign(sb.symbol_count(), Complex{});
  return x;
}

void check_conforms(const SubbandSymbols& x, const NumerologyPlan& plan, std::size_t i) {
  const Subband& sb = plan[i];
  if (x.blocks != sb.blocks || x.width != sb.subcarriers ||
      x.values.size() != sb.symbol_count()) {
    throw std::invalid_argument("symbols for subband " + idx(i) + " have shape " +
                                std::to_string(x.blocks) + "x" + std::to_string(x.width) +
                                ", plan expects " + std::to_string(sb.blocks) + "x" +
                                std::to_string(sb.subcarriers));
  }
}

BlockLayout standard_layout(const Subband& band) { return BlockLayout{band.cp_len, 0, {}}; }

SubbandOperator::SubbandOperator(const NumerologyPlan& plan, std::size_t i)
    : SubbandOperator(plan, i, standard_layout(plan[i])) {}

SubbandOperator::SubbandOperator(const NumerologyPlan& plan, std::size_t i, BlockLayout layout)
    : index_(i), band_(plan[i]), layout_(std::move(layout)), fft_(plan[i].grid) {
  if (layout_.prefix > band_.grid || layout_.postfix > band_.grid) {
    throw std::invalid_argument("block layout extension longer than the FFT grid");
  }
  if (!layout_.weights.empty() && layout_.weights.size() != block_len()) {
    throw std::invalid_argument("block layout weights have length " +
                                std::to_string(layout_.weights.size()) + ", expected " +
                                std::to_string(block_len()));
  }
}

std::size_t SubbandOperator::sample_index(std::size_t n) const {
  return (n + band_.grid - layout_.prefix) % band_.grid;
}

double SubbandOperator::weight(std::size_t n) const {
  return layout_.weights.empty() ? 1.0 : layout_.weights[n];
}

void SubbandOperator::check_signal(std::span<const Complex> s) const {
  if (s.size() != output_len()) {
    throw std::invalid_argument("subband " + idx(index_) + " operator expects " +
                                std::to_string(output_len()) + " samples, got " +
                                std::to_string(s.size()));
  }
}

void SubbandOperator::modulate(const SubbandSymbols& x, std::span<Complex> out) const {
  if (x.blocks != band_.blocks || x.width != band_.subcarriers ||
      x.values.size() != band_.symbol_count()) {
    throw std::invalid_argument("symbols do not match subband " + idx(index_));
  }
  if (out.size() != output_len()) throw std::invalid_argument("modulate: output length mismatch");

  const double scale = band_.eta / std::sqrt(static_cast<double>(band_.grid));
  const std::size_t len = block_len();
  CVec buf(band_.grid);
  for (std::size_t b = 0; b < band_.blocks; ++b) {
    std::fill(buf.begin(), buf.end(), Complex{});
    const auto blk = x.block(b);
    for (std::size_t k = 0; k < band_.subcarriers; ++k) buf[band_.offset + k] = blk[k];
    fft_.inverse(buf);
    Complex* dst = out.data() + b * len;
    for (std::size_t n = 0; n < len; ++n) dst[n] = (scale * weight(n)) * buf[sample_index(n)];
  }
}

TimeSignal SubbandOperator::modulate(const SubbandSymbols& x) const {
  TimeSignal out(output_len());
  modulate(x, out);
  return out;
}

void SubbandOperator::analyze(std::span<const Complex> s, SubbandSymbols& out) const {
  check_signal(s);
  if (out.blocks != band_.blocks || out.width != band_.subcarriers ||
      out.values.size() != band_.symbol_count()) {
    out.subband = index_;
    out.blocks = band_.blocks;
    out.width = band_.subcarriers;
    out.values.assign(band_.symbol_count(), Complex{});
  }
  const double scale = band_.eta / std::sqrt(static_cast<double>(band_.grid));
  const std::size_t len = block_len();
  CVec buf(band_.grid);
  for (std::size_t b = 0; b < band_.blocks; ++b) {
    std::fill(buf.begin(), buf.end(), Complex{});
    const Complex* src = s.data() + b * len;
    for (std::size_t n = 0; n < len; ++n) buf[sample_index(n)] += weight(n) * src[n];
    fft_.forward(buf);
    auto blk = out.block(b);
    for (std::size_t k = 0; k < band_.subcarriers; ++k) blk[k] = scale * buf[band_.offset + k];
  }
}

SubbandSymbols SubbandOperator::analyze(std::span<const Complex> s) const {
  SubbandSymbols out;
  analyze(s, out);
  return out;
}

SubbandSymbols SubbandOperator::demodulate(std::span<const Complex> s) const {
  check_signal(s);
  SubbandSymbols out;
  out.subband = index_;
  out.blocks = band_.blocks;
  out.width = band_.subcarriers;
  out.values.assign(band_.symbol_count(), Complex{});
  const double scale = 1.0 / (band_.eta * std::sqrt(static_cast<double>(band_.grid)));
  const std::size_t len = block_len();
  CVec buf(band_.grid);
  for (std::size_t b = 0; b < band_.blocks; ++b) {
    const Complex* body = s.data() + b * len + layout_.prefix;
    std::copy(body, body + band_.grid, buf.begin());
    fft_.forward(buf);
    auto blk = out.block(b);
    for (std::size_t k = 0; k < band_.subcarriers; ++k) blk[k] = scale * buf[band_.offset + k];
  }
  return out;
}

Eigen::MatrixXcd SubbandOperator::block_gram() const {
  // (F^H F)_{k,k'} = eta^2 / grid * sum_n w(n)^2 exp(j 2 pi m(n) (k' - k) / grid),
  // a Hermitian Toeplitz matrix in the lag k' - k.
  const std::size_t grid = band_.grid;
  std::vector<double> energy(grid, 0.0);
  for (std::size_t n = 0; n < block_len(); ++n) energy[sample_index(n)] += weight(n) * weight(n);

  const std::size_t kk = band_.subcarriers;
  const double scale = band_.eta * band_.eta / static_cast<double>(grid);
  CVec lag(kk);
  for (std::size_t q = 0; q < kk; ++q) {
    Complex acc{};
    for (std::size_t m = 0; m < grid; ++m) {
      if (energy[m] == 0.0) continue;
      const double phase = 2.0 * std::numbers::pi * static_cast<double>((m * q) % grid) /
                           static_cast<double>(grid);
      acc += energy[m] * Complex{std::cos(phase), std::sin(phase)};
    }
    lag[q] = scale * acc;
  }

  Eigen::MatrixXcd g(kk, kk);
  for (std::size_t r = 0; r < kk; ++r) {
    for (std::size_t c = 0; c < kk; ++c) {
      g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          c >= r ? lag[c - r] : std::conj(lag[r - c]);
    }
  }
  return g;
}

OperatorSet::OperatorSet(const NumerologyPlan& plan) : plan_(plan) {
  ops_.reserve(plan.count());
  for (std::size_t i = 0; i < plan.count(); ++i) ops_.emplace_back(plan, i);
  signal_len_ = plan.lcm_len;
}

OperatorSet::OperatorSet(const NumerologyPlan& plan, std::vector<BlockLayout> layouts)
    : plan_(plan) {
  if (layouts.size() != plan.count()) {
    throw std::invalid_argument("OperatorSet: one block layout per subband is required");
  }
  ops_.reserve(plan.count());
  for (std::size_t i = 0; i < plan.count(); ++i) ops_.emplace_back(plan, i, std::move(layouts[i]));
  signal_len_ = ops_.front().output_len();
  for (const auto& op : ops_) {
    if (op.output_len() != signal_len_) {
      throw std::invalid_argument("OperatorSet: subband " + idx(op.subband()) + " produces " +
                                  std::to_string(op.output_len()) + " samples, subband 1 " +
                                  std::to_string(signal_len_));
    }
  }
}

TimeSignal OperatorSet::compose(const SymbolSet& xs) const {
  if (xs.size() != ops_.size()) {
    throw std::invalid_argument("compose: expected " + std::to_string(ops_.size()) +
                                " subbands, got " + std::to_string(xs.size()));
  }
  TimeSignal z(signal_len_);
  TimeSignal part(signal_len_);
  for (std::size_t i = 0; i < ops_.size(); ++i) {
    ops_[i].modulate(xs[i], part);
    for (std::size_t n = 0; n < signal_len_; ++n) z[n] += part[n];
  }
  return z;
}

SymbolSet OperatorSet::analyze(std::span<const Complex> s) const {
  SymbolSet out;
  out.reserve(ops_.size());
  for (const auto& op : ops_) out.push_back(op.analyze(s));
  return out;
}

TimeSignal modulate_subband(const SubbandSymbols& x, const NumerologyPlan& plan, std::size_t i) {
  check_conforms(x, plan, i);
  return SubbandOperator(plan, i).modulate(x);
}

SubbandSymbols analyze_subband(std::span<const Complex> s, const NumerologyPlan& plan,
                               std::size_t i) {
  if (s.size() != plan.lcm_len) {
    throw std::invalid_argument("analyze_subband: expected " + std::to_string(plan.lcm_len) +
                                " samples, got " + std::to_string(s.size()));
  }
  return SubbandOperator(plan, i).analyze(s);
}

TimeSignal compose(const SymbolSet& xs, const NumerologyPlan& plan) {
  for (std::size_t i = 0; i < xs.size() && i < plan.count(); ++i) check_conforms(xs[i], plan, i);
  return OperatorSet(plan).compose(xs);
}

SymbolSet gen_qpsk(std::uint64_t seed, std::uint64_t symbol_index, const NumerologyPlan& plan) {
  const double a = 1.0 / std::numbers::sqrt2;
  const std::uint64_t base = splitmix64(splitmix64(seed) ^ symbol_index);
  SymbolSet xs;
  xs.reserve(plan.count());
  for (std::size_t i = 0; i < plan.count(); ++i) {
    SubbandSymbols x = SubbandSymbols::zeros(plan, i);
    const std::uint64_t band_key = splitmix64(base + 0x632be59bd9b4e019ULL * (i + 1));
    for (std::size_t b = 0; b < x.blocks; ++b) {
      for (std::size_t k = 0; k < x.width; ++k) {
        const std::uint64_t r = splitmix64(band_key ^ ((static_cast<std::uint64_t>(b) << 32) | k));
        const double re = (r & 1) ? a : -a;
        const double im = (r & 2) ? a : -a;
        x.block(b)[k] = {re, im};
      }
    }
    xs.push_back(std::move(x));
  }
  return xs;
}

}  // namespace mnpapr
