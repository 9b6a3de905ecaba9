#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace specmap {

/// Coefficient vector of an element of X in the fixed eigenbasis.
/// Componentwise (Array) semantics; binary operations require equal length.
template <typename Scalar>
using Coeffs = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

using CoeffsXd = Coeffs<double>;

using Index = Eigen::Index;

/// Exponent s of the Hilbert scale X^s induced by the operator A.
struct HilbertScaleIndex {
  double s = 0.0;
};

namespace detail {

inline void require(bool cond, const std::string& constraint) {
  if (!cond) throw std::domain_error(constraint);
}

template <typename Scalar>
void require_same_size(const Coeffs<Scalar>& a, const Coeffs<Scalar>& b,
                       const char* where) {
  if (a.size() != b.size())
    throw std::invalid_argument(std::string(where) +
                                ": coefficient lengths must match (no implicit padding)");
}

}  // namespace detail

/// Eigenvalue law of the diagonal operator A: a positive, non-decreasing
/// sequence alpha_k with growth envelope c_minus*k^(2/d) <= alpha_k <= c_plus*k^(2/d).
///
/// Two laws are supported: the exact power law alpha_k = p*k^(2/d) and an
/// explicit finite list. Truncation is always an explicit caller-supplied
/// parameter; the basis itself carries no default length.
template <typename Scalar>
class SpectralBasis {
 public:
  enum class Law { PowerLaw, Explicit };

  /// alpha_k = p * k^(2/d); the growth envelope is tight (c_minus = c_plus = p).
  static SpectralBasis power_law(int d, Scalar p) {
    detail::require(d >= 1, "basis.d must be a positive integer");
    detail::require(p > Scalar(0) && std::isfinite(static_cast<double>(p)),
                    "basis.p must be positive and finite");
    SpectralBasis b;
    b.law_ = Law::PowerLaw;
    b.d_ = d;
    b.p_ = p;
    b.c_minus_ = p;
    b.c_plus_ = p;
    return b;
  }

  /// Explicit eigenvalue list; validated against positivity, monotonicity and
  /// the growth envelope for every represented k.
  static SpectralBasis explicit_list(int d, Coeffs<Scalar> alphas, Scalar c_minus,
                                     Scalar c_plus) {
    detail::require(d >= 1, "basis.d must be a positive integer");
    detail::require(c_minus > Scalar(0), "basis.c_minus must be positive");
    detail::require(c_plus >= c_minus, "basis.c_plus must be >= basis.c_minus");
    detail::require(alphas.size() > 0, "basis.alphas must be non-empty");
    const double ex = 2.0 / static_cast<double>(d);
    for (Index i = 0; i < alphas.size(); ++i) {
      const Scalar a = alphas[i];
      detail::require(a > Scalar(0) && std::isfinite(static_cast<double>(a)),
                      "basis.alphas must be positive and finite");
      if (i > 0)
        detail::require(a >= alphas[i - 1], "basis.alphas must be non-decreasing");
      const Scalar kp = Scalar(std::pow(static_cast<double>(i + 1), ex));
      detail::require(c_minus * kp <= a && a <= c_plus * kp,
                      "basis.alphas must satisfy c_minus*k^(2/d) <= alpha_k <= c_plus*k^(2/d)");
    }
    SpectralBasis b;
    b.law_ = Law::Explicit;
    b.d_ = d;
    b.alphas_ = std::move(alphas);
    b.c_minus_ = c_minus;
    b.c_plus_ = c_plus;
    return b;
  }

  Law law() const { return law_; }
  int dimension() const { return d_; }
  Scalar power_constant() const { return p_; }
  Scalar c_minus() const { return c_minus_; }
  Scalar c_plus() const { return c_plus_; }

  /// alpha_k, 1-based.
  Scalar eigenvalue(Index k) const {
    detail::require(k >= 1, "eigenvalue index k must be >= 1");
    if (law_ == Law::PowerLaw) {
      const Scalar a =
          p_ * Scalar(std::pow(static_cast<double>(k), 2.0 / static_cast<double>(d_)));
      detail::require(std::isfinite(static_cast<double>(a)),
                      "eigenvalue alpha_k overflowed to a non-finite value");
      return a;
    }
    detail::require(k <= alphas_.size(),
                    "eigenvalue index k exceeds the explicit eigenvalue list");
    return alphas_[k - 1];
  }

  /// log(alpha_k); used where powers and exponentials are combined in log space.
  Scalar log_eigenvalue(Index k) const { return Scalar(std::log(double(eigenvalue(k)))); }

  /// First n eigenvalues as a dense array.
  Coeffs<Scalar> eigenvalues(Index n) const {
    detail::require(n >= 1, "truncation n must be >= 1");
    Coeffs<Scalar> a(n);
    for (Index k = 1; k <= n; ++k) a[k - 1] = eigenvalue(k);
    return a;
  }

  /// Defaults to the power law with d = 1, p = 1.
  SpectralBasis() = default;

 private:
  Law law_ = Law::PowerLaw;
  int d_ = 1;
  Scalar p_ = Scalar(1);
  Coeffs<Scalar> alphas_;
  Scalar c_minus_ = Scalar(1);
  Scalar c_plus_ = Scalar(1);
};

using SpectralBasisXd = SpectralBasis<double>;

/// A^s x: component k is alpha_k^s * x_k. All real powers are well defined
/// since alpha_k > 0.
template <typename Scalar>
Coeffs<Scalar> apply_power(const SpectralBasis<Scalar>& basis, HilbertScaleIndex s,
                           const Coeffs<Scalar>& x) {
  Coeffs<Scalar> out(x.size());
  for (Index i = 0; i < x.size(); ++i)
    out[i] = Scalar(std::pow(double(basis.eigenvalue(i + 1)), s.s)) * x[i];
  return out;
}

/// Hilbert scale norm ||x||_{X^s} = (sum_k alpha_k^s x_k^2)^(1/2).
template <typename Scalar>
Scalar scale_norm(const SpectralBasis<Scalar>& basis, HilbertScaleIndex s,
                  const Coeffs<Scalar>& x) {
  double acc = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    const double xi = double(x[i]);
    acc += std::pow(double(basis.eigenvalue(i + 1)), s.s) * xi * xi;
  }
  return Scalar(std::sqrt(acc));
}

/// Forward operator K = e^{-A}: component k is e^{-alpha_k} * u_k.
/// Underflow of e^{-alpha_k} to exactly 0 is accepted behavior.
template <typename Scalar>
Coeffs<Scalar> forward_heat(const SpectralBasis<Scalar>& basis, const Coeffs<Scalar>& u) {
  Coeffs<Scalar> out(u.size());
  for (Index i = 0; i < u.size(); ++i)
    out[i] = Scalar(std::exp(-double(basis.eigenvalue(i + 1)))) * u[i];
  return out;
}

/// Two-sided bracket for Tr A^{-alpha}: the true trace lies in
/// [partial, partial + tail_bound].
template <typename Scalar>
struct TraceBracket {
  Scalar partial = Scalar(0);     ///< sum_{k<=n} alpha_k^{-alpha}
  Scalar tail_bound = Scalar(0);  ///< integral-test bound on sum_{k>n}
  Scalar upper() const { return partial + tail_bound; }
};

/// Partial trace of A^{-alpha} at truncation n plus a rigorous tail bound.
/// Requires alpha > d/2 (trace class); the tail uses the integral comparison
/// sum_{k>n} k^{-2 alpha/d} <= n^{1 - 2 alpha/d} / (2 alpha/d - 1) scaled by
/// c_minus^{-alpha}.
template <typename Scalar>
TraceBracket<Scalar> trace_power(const SpectralBasis<Scalar>& basis, Scalar alpha,
                                 Index n) {
  detail::require(n >= 1, "trace_power truncation n must be >= 1");
  const double d = static_cast<double>(basis.dimension());
  const double a = static_cast<double>(alpha);
  detail::require(a > d / 2.0, "trace_power requires alpha > d/2 (series diverges otherwise)");
  double partial = 0.0;
  for (Index k = n; k >= 1; --k)  // ascending magnitude
    partial += std::pow(double(basis.eigenvalue(k)), -a);
  const double s = 2.0 * a / d;  // > 1
  const double tail =
      std::pow(double(basis.c_minus()), -a) * std::pow(double(n), 1.0 - s) / (s - 1.0);
  return TraceBracket<Scalar>{Scalar(partial), Scalar(tail)};
}

}  // namespace specmap
