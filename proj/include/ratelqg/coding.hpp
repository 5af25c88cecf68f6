// Copyright 2026 The ratelqg Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "ratelqg/errors.hpp"
#include "ratelqg/linalg.hpp"
#include "ratelqg/rng.hpp"

namespace ratelqg {

/// Elementwise uniform quantizer with step `delta` on R^dim.
struct DitherQuantizer {
  double delta = 2.0 * std::numbers::sqrt3;
  Eigen::Index dim = 1;

  /// The step at which the subtractive-dither error has unit variance per element.
  static constexpr double design_delta() { return 2.0 * std::numbers::sqrt3; }
  double noise_variance() const { return delta * delta / 12.0; }
};

/// Lattice point m * delta, stored as the integer indices m.
struct LatticeSymbol {
  std::vector<std::int64_t> index;
  bool operator==(const LatticeSymbol&) const = default;
};

inline constexpr std::int64_t kMaxSymbolIndex = std::int64_t{1} << 62;

/// Index m with z in [m delta - delta/2, m delta + delta/2).
inline std::int64_t quantize_scalar(double z, double delta) {
  if (!std::isfinite(z)) throw InputError("quantizer input is not finite");
  const double r = std::floor(z / delta + 0.5);
  if (!(std::abs(r) < static_cast<double>(kMaxSymbolIndex))) {
    throw NumericalError("symbol index overflow");
  }
  auto m = static_cast<std::int64_t>(r);
  const double half = delta / 2.0;
  if (z < static_cast<double>(m) * delta - half) --m;
  else if (z >= static_cast<double>(m) * delta + half) ++m;
  return m;
}

inline LatticeSymbol quantize(const DitherQuantizer& q, const Vector& z) {
  if (z.size() != q.dim) throw InputError("quantizer dimension mismatch");
  LatticeSymbol s;
  s.index.resize(static_cast<std::size_t>(z.size()));
  for (Eigen::Index i = 0; i < z.size(); ++i) s.index[static_cast<std::size_t>(i)] = quantize_scalar(z(i), q.delta);
  return s;
}

inline Vector lattice_point(const DitherQuantizer& q, const LatticeSymbol& s) {
  Vector v(static_cast<Eigen::Index>(s.index.size()));
  for (std::size_t i = 0; i < s.index.size(); ++i) v(static_cast<Eigen::Index>(i)) = static_cast<double>(s.index[i]) * q.delta;
  return v;
}

struct DitheredSample {
  LatticeSymbol symbol;
  Vector reconstruction;  ///< symbol * delta - d
};

/// q(z + d) - d. Dither entries must lie in [-delta/2, delta/2).
inline DitheredSample subtractive_dither_quantize(const DitherQuantizer& q, const Vector& z,
                                                  const Vector& d) {
  if (d.size() != q.dim) throw InputError("dither dimension mismatch");
  const double half = q.delta / 2.0;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    if (!(d(i) >= -half && d(i) < half)) throw InputError("dither out of range [-delta/2, delta/2)");
  }
  DitheredSample out;
  out.symbol = quantize(q, z + d);
  out.reconstruction = lattice_point(q, out.symbol) - d;
  return out;
}

/// Shared pseudorandom dither: element i at step t is a pure function of (seed, t, i).
struct DitherStream {
  std::uint64_t seed = 0;
};

inline Vector gen_dither(const DitherStream& stream, long long t, const DitherQuantizer& q) {
  const std::uint64_t key = mix64(stream.seed ^ 0xd1b54a32d192ed03ull);
  Vector d(q.dim);
  for (Eigen::Index i = 0; i < q.dim; ++i) {
    const double u = to_unit_interval(philox_u64(key, static_cast<std::uint64_t>(t), static_cast<std::uint64_t>(i)));
    d(i) = q.delta * (u - 0.5);
  }
  return d;
}

/// Bit string, most significant bit first.
class BitString {
 public:
  BitString() = default;

  void push_back(bool b) { bits_.push_back(b); }

  /// Appends the low `len` bits of `value`, most significant first.
  void append(std::uint64_t value, int len) {
    for (int i = len - 1; i >= 0; --i) bits_.push_back(((value >> i) & 1u) != 0);
  }
  void append(const BitString& other) { bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end()); }

  std::size_t size() const noexcept { return bits_.size(); }
  bool empty() const noexcept { return bits_.empty(); }
  bool operator[](std::size_t i) const { return bits_[i]; }
  bool operator==(const BitString&) const = default;

  /// `len` bits starting at `pos` as an integer; requires pos + len <= size() and len <= 64.
  std::uint64_t read(std::size_t pos, int len) const {
    std::uint64_t v = 0;
    for (int i = 0; i < len; ++i) v = (v << 1) | static_cast<std::uint64_t>(bits_[pos + static_cast<std::size_t>(i)]);
    return v;
  }

  std::string to_string() const {
    std::string s;
    s.reserve(bits_.size());
    for (bool b : bits_) s.push_back(b ? '1' : '0');
    return s;
  }

 private:
  std::vector<bool> bits_;
};

using Codeword = BitString;

/// Elias-gamma code of v >= 1.
inline void append_elias_gamma(BitString& out, std::uint64_t v) {
  const int width = std::bit_width(v);
  out.append(0, width - 1);
  out.append(v, width);
}

inline std::uint64_t read_elias_gamma(const BitString& bits, std::size_t& pos) {
  int zeros = 0;
  while (true) {
    if (pos >= bits.size()) throw DecodeError("truncated escape code", pos);
    if (bits[pos]) break;
    ++zeros;
    ++pos;
    if (zeros > 63) throw DecodeError("escape code too long", pos);
  }
  if (pos + static_cast<std::size_t>(zeros) + 1 > bits.size()) throw DecodeError("truncated escape code", pos);
  const std::uint64_t v = bits.read(pos, zeros + 1);
  pos += static_cast<std::size_t>(zeros) + 1;
  return v;
}

inline std::uint64_t zigzag(std::int64_t m) {
  return m >= 0 ? 2 * static_cast<std::uint64_t>(m) : 2 * static_cast<std::uint64_t>(-(m + 1)) + 1;
}
inline std::int64_t unzigzag(std::uint64_t z) {
  return (z & 1u) ? -static_cast<std::int64_t>(z >> 1) - 1 : static_cast<std::int64_t>(z >> 1);
}

/// Shannon-Fano-Elias code over a finite support of lattice indices plus an
/// optional escape for everything else. Probabilities are held as integer
/// counts out of 2^kPrecisionBits, so cumulative sums and codewords are exact.
class SymbolPmf {
 public:
  static constexpr int kPrecisionBits = 48;
  static constexpr std::uint64_t kTotal = std::uint64_t{1} << kPrecisionBits;

  struct Entry {
    std::int64_t index = 0;
    bool escape = false;
    std::uint64_t count = 0;
    std::uint64_t code = 0;
    int length = 0;
  };

  SymbolPmf() = default;

  /// Counts must be positive and, together with escape_count, sum to kTotal.
  SymbolPmf(std::vector<std::pair<std::int64_t, std::uint64_t>> support, std::uint64_t escape_count) {
    std::uint64_t sum = escape_count;
    for (const auto& [idx, c] : support) {
      if (c == 0) throw InputError("zero-probability symbol in model support");
      sum += c;
    }
    if (sum != kTotal) throw InputError("model counts do not sum to one");
    std::sort(support.begin(), support.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    entries_.reserve(support.size() + 1);
    for (const auto& [idx, c] : support) entries_.push_back({idx, false, c, 0, 0});
    if (escape_count > 0) entries_.push_back({0, true, escape_count, 0, 0});
    std::uint64_t cumulative = 0;
    for (auto& e : entries_) {
      // Midpoint 2F + c in units of 2^-(K+1); keep the top `length` bits.
      const std::uint64_t mid = 2 * cumulative + e.count;
      e.length = kPrecisionBits + 2 - std::bit_width(e.count);
      e.code = mid >> (kPrecisionBits + 1 - e.length);
      cumulative += e.count;
    }
  }

  /// Model over declared probabilities. Without escape the probabilities are
  /// normalized and the rounding remainder goes to the most likely symbol; with
  /// escape they are taken as absolute masses and the shortfall becomes the escape mass.
  static SymbolPmf from_probabilities(const std::vector<std::pair<std::int64_t, double>>& probs,
                                      bool with_escape) {
    double total = 0.0;
    for (const auto& pr : probs) total += pr.second;
    const double scale = with_escape ? 1.0 : 1.0 / total;
    std::vector<std::pair<std::int64_t, std::uint64_t>> support;
    std::uint64_t sum = 0;
    for (const auto& [idx, p] : probs) {
      const auto c = static_cast<std::uint64_t>(std::floor(p * scale * static_cast<double>(kTotal)));
      if (c == 0) continue;
      support.emplace_back(idx, c);
      sum += c;
    }
    if (support.empty()) throw InputError("empty model support");
    auto largest = std::max_element(support.begin(), support.end(),
                                    [](const auto& a, const auto& b) { return a.second < b.second; });
    const std::uint64_t target = with_escape ? kTotal - 1 : kTotal;
    if (sum > target) {
      largest->second -= sum - target;
      sum = target;
    }
    if (!with_escape) {
      largest->second += kTotal - sum;
      sum = kTotal;
    }
    return SymbolPmf(std::move(support), kTotal - sum);
  }

  const std::vector<Entry>& entries() const noexcept { return entries_; }
  bool has_escape() const noexcept { return !entries_.empty() && entries_.back().escape; }

  double probability(std::int64_t index) const {
    for (const auto& e : entries_)
      if (!e.escape && e.index == index) return static_cast<double>(e.count) / static_cast<double>(kTotal);
    return 0.0;
  }
  double escape_probability() const {
    return has_escape() ? static_cast<double>(entries_.back().count) / static_cast<double>(kTotal) : 0.0;
  }

  /// Sum of 2^-length over the codebook, escape prefix included. Exact in binary.
  double kraft_sum() const {
    double s = 0.0;
    for (const auto& e : entries_) s += std::ldexp(1.0, -e.length);
    return s;
  }

  /// Entropy in bits of the model, with the escape mass treated as one outcome.
  double entropy_bits() const {
    double h = 0.0;
    for (const auto& e : entries_) {
      const double p = static_cast<double>(e.count) / static_cast<double>(kTotal);
      h -= p * std::log2(p);
    }
    return h;
  }

  void encode(std::int64_t index, BitString& out) const {
    for (const auto& e : entries_) {
      if (!e.escape && e.index == index) {
        out.append(e.code, e.length);
        return;
      }
    }
    if (!has_escape()) throw InputError("symbol outside model support and no escape available");
    const auto& esc = entries_.back();
    out.append(esc.code, esc.length);
    append_elias_gamma(out, zigzag(index) + 1);
  }

  std::int64_t decode(const BitString& bits, std::size_t& pos) const {
    if (pos >= bits.size()) throw DecodeError("empty bitstream", pos);
    for (const auto& e : entries_) {
      if (pos + static_cast<std::size_t>(e.length) > bits.size()) continue;
      if (bits.read(pos, e.length) != e.code) continue;
      pos += static_cast<std::size_t>(e.length);
      if (!e.escape) return e.index;
      const std::uint64_t v = read_elias_gamma(bits, pos);
      return unzigzag(v - 1);
    }
    throw DecodeError("no codeword matches (truncated or invalid stream)", pos);
  }

 private:
  std::vector<Entry> entries_;
};

namespace detail {

/// P(a <= X < b) for X ~ N(0, 1), evaluated on whichever tail keeps precision.
inline double normal_mass(double a, double b) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  if (a >= 0.0) return 0.5 * (std::erfc(a * kInvSqrt2) - std::erfc(b * kInvSqrt2));
  if (b <= 0.0) return 0.5 * (std::erfc(-b * kInvSqrt2) - std::erfc(-a * kInvSqrt2));
  return 1.0 - 0.5 * (std::erfc(-a * kInvSqrt2) + std::erfc(b * kInvSqrt2));
}

inline double normal_upper_tail(double x) { return 0.5 * std::erfc(x * 0.7071067811865475244); }

}  // namespace detail

inline constexpr double kTailMass = 1e-9;

/// Cell probabilities of q(X) for X ~ N(mean, sigma^2) over the cells
/// [m delta - delta/2, m delta + delta/2), truncated where the tail mass on
/// either side falls below kTailMass / 2; the escape covers the rest.
inline SymbolPmf discretized_gaussian_pmf(double mean, double sigma, double delta) {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw NumericalError("degenerate symbol model covariance");
  const double half = delta / 2.0;
  const std::int64_t center = quantize_scalar(mean, delta);
  auto upper_edge = [&](std::int64_t m) { return (static_cast<double>(m) * delta + half - mean) / sigma; };
  auto lower_edge = [&](std::int64_t m) { return (static_cast<double>(m) * delta - half - mean) / sigma; };
  std::int64_t hi = center;
  while (detail::normal_upper_tail(upper_edge(hi)) >= kTailMass / 2) ++hi;
  std::int64_t lo = center;
  while (detail::normal_upper_tail(-lower_edge(lo)) >= kTailMass / 2) --lo;
  std::vector<std::pair<std::int64_t, double>> probs;
  probs.reserve(static_cast<std::size_t>(hi - lo + 1));
  for (std::int64_t m = lo; m <= hi; ++m) {
    const double p = detail::normal_mass(lower_edge(m), upper_edge(m));
    if (p > 0.0) probs.emplace_back(m, p);
  }
  return SymbolPmf::from_probabilities(probs, true);
}

/// Per-step model of the quantized innovation given the dither. Element i is
/// coded with the Gaussian law of z_i + d_i conditioned (LMMSE) on the
/// reconstructions of elements < i; for n = 1 the model is exact.
inline constexpr double kMinModelSigma = 1e-9;

class InnovationModel {
 public:
  InnovationModel(const Matrix& innovation_cov, const DitherQuantizer& q, Vector dither)
      : q_(q), dither_(std::move(dither)) {
    const Eigen::Index n = innovation_cov.rows();
    if (innovation_cov.cols() != n || n != q.dim || dither_.size() != n) {
      throw InputError("symbol model dimension mismatch");
    }
    coeffs_.resize(static_cast<std::size_t>(n));
    sigma_.resize(static_cast<std::size_t>(n));
    const Matrix cov = linalg::symmetrize(innovation_cov);
    for (Eigen::Index i = 0; i < n; ++i) {
      double var = cov(i, i);
      if (i > 0) {
        Matrix obs = cov.topLeftCorner(i, i);
        obs.diagonal().array() += q.noise_variance();
        const Vector cross = cov.block(0, i, i, 1);
        const Vector beta = obs.llt().solve(cross);
        var -= cross.dot(beta);
        coeffs_[static_cast<std::size_t>(i)] = beta;
      }
      // A rank-deficient sensor leaves directions with (numerically) no
      // innovation; the law there collapses onto the dither's cell.
      if (!(var > -1e-12 * (1.0 + cov.cwiseAbs().maxCoeff()))) {
        throw NumericalError("degenerate symbol model covariance");
      }
      sigma_[static_cast<std::size_t>(i)] = std::max(std::sqrt(std::max(var, 0.0)), kMinModelSigma * q.delta);
    }
  }

  Eigen::Index dim() const { return q_.dim; }
  const DitherQuantizer& quantizer() const { return q_; }
  const Vector& dither() const { return dither_; }

  /// Model of element i given the reconstructions (symbol * delta - d) of elements < i.
  SymbolPmf element_pmf(Eigen::Index i, const Vector& previous) const {
    double mean = 0.0;
    if (i > 0) mean = coeffs_[static_cast<std::size_t>(i)].dot(previous.head(i));
    return discretized_gaussian_pmf(mean + dither_(i), sigma_[static_cast<std::size_t>(i)], q_.delta);
  }

 private:
  DitherQuantizer q_;
  Vector dither_;
  std::vector<Vector> coeffs_;
  std::vector<double> sigma_;
};

/// Model for z = C1 (x1 - xtilde1) with covariance C1 Ptilde C1^T, given the step's dither.
inline InnovationModel build_model_pmf(const Matrix& ptilde, const Matrix& c1, const DitherQuantizer& q,
                                       const Vector& dither) {
  return InnovationModel(c1 * ptilde * c1.transpose(), q, dither);
}

// TODO: one arithmetic-coded codeword per vector would cut the per-element
// SFE overhead (up to 2 bits each) to 2 bits total for n > 1.
inline Codeword encode_symbol(const LatticeSymbol& s, const InnovationModel& model) {
  if (static_cast<Eigen::Index>(s.index.size()) != model.dim()) throw InputError("symbol dimension mismatch");
  Codeword out;
  Vector recon(model.dim());
  for (Eigen::Index i = 0; i < model.dim(); ++i) {
    const std::int64_t m = s.index[static_cast<std::size_t>(i)];
    model.element_pmf(i, recon).encode(m, out);
    recon(i) = static_cast<double>(m) * model.quantizer().delta - model.dither()(i);
  }
  return out;
}

/// Sum of the conditional element entropies along the path taken by `s`.
inline double path_entropy_bits(const LatticeSymbol& s, const InnovationModel& model) {
  double h = 0.0;
  Vector recon(model.dim());
  for (Eigen::Index i = 0; i < model.dim(); ++i) {
    h += model.element_pmf(i, recon).entropy_bits();
    recon(i) = static_cast<double>(s.index[static_cast<std::size_t>(i)]) * model.quantizer().delta - model.dither()(i);
  }
  return h;
}

struct DecodedSymbol {
  LatticeSymbol symbol;
  std::size_t consumed = 0;
};

/// Decodes one codeword starting at bit `offset`.
inline DecodedSymbol decode_symbol(const BitString& bits, const InnovationModel& model, std::size_t offset = 0) {
  if (offset >= bits.size()) throw DecodeError("empty bitstream", offset);
  DecodedSymbol out;
  out.symbol.index.resize(static_cast<std::size_t>(model.dim()));
  std::size_t pos = offset;
  Vector recon(model.dim());
  for (Eigen::Index i = 0; i < model.dim(); ++i) {
    const std::int64_t m = model.element_pmf(i, recon).decode(bits, pos);
    out.symbol.index[static_cast<std::size_t>(i)] = m;
    recon(i) = static_cast<double>(m) * model.quantizer().delta - model.dither()(i);
  }
  out.consumed = pos - offset;
  return out;
}

}  // namespace ratelqg
