#pragma once

#include <cmath>
#include <cstdint>

namespace specmap {

/// Counter-based generator (Philox 4x32, 10 rounds, Salmon et al. 2011).
///
/// Streams are addressed by (seed, stream): the 64-bit stream id occupies the
/// upper counter words, the block counter the lower ones, so streams are
/// disjoint by construction and a draw depends only on (seed, stream, position)
/// — never on which thread produced it. Every distribution below consumes a
/// fixed number of uniforms, so consumption is deterministic too.
class Philox4x32 {
 public:
  static constexpr const char* kName = "philox4x32-10";

  explicit Philox4x32(std::uint64_t seed, std::uint64_t stream = 0,
                      std::uint64_t start_block = 0)
      : key0_(static_cast<std::uint32_t>(seed)),
        key1_(static_cast<std::uint32_t>(seed >> 32)),
        stream_lo_(static_cast<std::uint32_t>(stream)),
        stream_hi_(static_cast<std::uint32_t>(stream >> 32)),
        block_(start_block) {}

  std::uint64_t next_u64() {
    if (have_ == 0) {
      refill();
      have_ = 2;
    }
    --have_;
    return out_[1 - have_];
  }

  /// Uniform draw strictly inside (0, 1).
  double uniform() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  /// Standard normal via Box-Muller; consumes exactly two uniforms.
  double normal() {
    const double u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  /// Laplace draw with given mean and variance (density
  /// (2*variance)^(-1/2) exp(-sqrt(2)|x-mean|/sqrt(variance))) by inverse CDF;
  /// consumes exactly one uniform.
  double laplace(double mean, double variance) {
    const double s = std::sqrt(0.5 * variance);  // scale: variance = 2 s^2
    const double w = uniform() - 0.5;
    const double mag = -s * std::log1p(-2.0 * std::abs(w));
    return w < 0 ? mean - mag : mean + mag;
  }

 private:
  static void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                      std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
  }

  void refill() {
    std::uint32_t c0 = static_cast<std::uint32_t>(block_);
    std::uint32_t c1 = static_cast<std::uint32_t>(block_ >> 32);
    std::uint32_t c2 = stream_lo_;
    std::uint32_t c3 = stream_hi_;
    std::uint32_t k0 = key0_;
    std::uint32_t k1 = key1_;
    for (int round = 0; round < 10; ++round) {
      if (round > 0) {
        k0 += 0x9E3779B9u;
        k1 += 0xBB67AE85u;
      }
      std::uint32_t hi0, lo0, hi1, lo1;
      mulhilo(0xD2511F53u, c0, hi0, lo0);
      mulhilo(0xCD9E8D57u, c2, hi1, lo1);
      const std::uint32_t n0 = hi1 ^ c1 ^ k0;
      const std::uint32_t n1 = lo1;
      const std::uint32_t n2 = hi0 ^ c3 ^ k1;
      const std::uint32_t n3 = lo0;
      c0 = n0;
      c1 = n1;
      c2 = n2;
      c3 = n3;
    }
    out_[0] = (static_cast<std::uint64_t>(c1) << 32) | c0;
    out_[1] = (static_cast<std::uint64_t>(c3) << 32) | c2;
    ++block_;
  }

  std::uint32_t key0_, key1_;
  std::uint32_t stream_lo_, stream_hi_;
  std::uint64_t block_;
  std::uint64_t out_[2] = {0, 0};
  int have_ = 0;
};

}  // namespace specmap
