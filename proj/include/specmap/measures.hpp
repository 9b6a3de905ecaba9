#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "specmap/rng.hpp"
#include "specmap/spectral.hpp"

namespace specmap {

namespace detail {

/// Neumaier-compensated accumulator; terms spanning many magnitudes are
/// summed ascending in k throughout this library.
struct CompensatedSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double t) {
    const double v = sum + t;
    if (std::abs(sum) >= std::abs(t))
      comp += (sum - v) + t;
    else
      comp += (t - v) + sum;
    sum = v;
  }
  double value() const { return sum + comp; }
};

}  // namespace detail

/// Gaussian prior parameters: covariance r^2 A^{-tau}. tau > d/2 is required
/// wherever the prior is bound to a basis (trace-class covariance).
template <typename Scalar>
struct PriorSpec {
  Scalar r;
  Scalar tau;
};

using PriorSpecXd = PriorSpec<double>;

/// Centered Gaussian product measure with independent coordinate variances q_k.
template <typename Scalar>
class GaussianProductMeasure {
 public:
  explicit GaussianProductMeasure(Coeffs<Scalar> variances)
      : variances_(std::move(variances)) {
    detail::require(variances_.size() > 0, "gaussian measure needs at least one coordinate");
    for (Index i = 0; i < variances_.size(); ++i)
      detail::require(variances_[i] > Scalar(0) &&
                          std::isfinite(static_cast<double>(variances_[i])),
                      "gaussian measure variances must be positive and finite");
  }

  /// Prior N(0, r^2 A^{-tau}) truncated to n coordinates: q_k = r^2 alpha_k^{-tau}.
  static GaussianProductMeasure from_prior(const PriorSpec<Scalar>& prior,
                                           const SpectralBasis<Scalar>& basis, Index n) {
    detail::require(prior.r > Scalar(0), "prior.r must be positive");
    detail::require(static_cast<double>(prior.tau) > basis.dimension() / 2.0,
                    "prior.tau must exceed d/2");
    Coeffs<Scalar> q(n);
    for (Index k = 1; k <= n; ++k)
      q[k - 1] = prior.r * prior.r *
                 Scalar(std::pow(double(basis.eigenvalue(k)), -double(prior.tau)));
    return GaussianProductMeasure(std::move(q));
  }

  const Coeffs<Scalar>& variances() const { return variances_; }
  Index size() const { return variances_.size(); }

 private:
  Coeffs<Scalar> variances_;
};

using GaussianProductMeasureXd = GaussianProductMeasure<double>;

/// Product of scalar Laplace laws with means a_k and variances lambda_k.
template <typename Scalar>
class LaplacianProductMeasure {
 public:
  LaplacianProductMeasure(Coeffs<Scalar> mean, Coeffs<Scalar> variances)
      : mean_(std::move(mean)), variances_(std::move(variances)) {
    detail::require_same_size(mean_, variances_, "laplacian measure");
    for (Index i = 0; i < variances_.size(); ++i)
      detail::require(variances_[i] > Scalar(0) &&
                          std::isfinite(static_cast<double>(variances_[i])),
                      "laplacian measure variances must be positive and finite");
  }

  static LaplacianProductMeasure centered(Coeffs<Scalar> variances) {
    const Index n = variances.size();
    return LaplacianProductMeasure(Coeffs<Scalar>::Zero(n), std::move(variances));
  }

  const Coeffs<Scalar>& mean() const { return mean_; }
  const Coeffs<Scalar>& variances() const { return variances_; }
  Index size() const { return variances_.size(); }
  bool is_centered() const { return (mean_ == Scalar(0)).all(); }

 private:
  Coeffs<Scalar> mean_;
  Coeffs<Scalar> variances_;
};

using LaplacianProductMeasureXd = LaplacianProductMeasure<double>;

/// One independent coordinate-wise draw; deterministic for a fixed generator state.
template <typename Scalar>
Coeffs<Scalar> sample(const GaussianProductMeasure<Scalar>& m, Philox4x32& rng) {
  Coeffs<Scalar> x(m.size());
  for (Index i = 0; i < m.size(); ++i)
    x[i] = Scalar(rng.normal() * std::sqrt(double(m.variances()[i])));
  return x;
}

template <typename Scalar>
Coeffs<Scalar> sample(const LaplacianProductMeasure<Scalar>& m, Philox4x32& rng) {
  Coeffs<Scalar> x(m.size());
  for (Index i = 0; i < m.size(); ++i)
    x[i] = Scalar(rng.laplace(double(m.mean()[i]), double(m.variances()[i])));
  return x;
}

template <typename Scalar>
Coeffs<Scalar> sample_gaussian(const GaussianProductMeasure<Scalar>& m, std::uint64_t seed,
                               std::uint64_t stream = 0) {
  Philox4x32 rng(seed, stream);
  return sample(m, rng);
}

template <typename Scalar>
Coeffs<Scalar> sample_laplacian(const LaplacianProductMeasure<Scalar>& m, std::uint64_t seed,
                                std::uint64_t stream = 0) {
  Philox4x32 rng(seed, stream);
  return sample(m, rng);
}

namespace detail {

/// log density at x between two shifts of the same Laplacian product measure:
/// log dL_{target}/dL_{base}(x) = -sqrt(2) sum_k (|x_k - t_k| - |x_k - b_k|)/sqrt(lambda_k).
template <typename Scalar>
double laplace_relative_log_density_kernel(const Coeffs<Scalar>& variances,
                                           const Coeffs<Scalar>& base_mean,
                                           const Coeffs<Scalar>& target_mean,
                                           const Coeffs<Scalar>& x) {
  CompensatedSum acc;
  for (Index i = 0; i < x.size(); ++i) {
    const double xi = double(x[i]);
    acc.add((std::abs(xi - double(target_mean[i])) - std::abs(xi - double(base_mean[i]))) /
            std::sqrt(double(variances[i])));
  }
  return -std::sqrt(2.0) * acc.value();
}

template <typename Scalar>
double laplace_shift_log_density_kernel(const Coeffs<Scalar>& variances,
                                        const Coeffs<Scalar>& a, const Coeffs<Scalar>& x) {
  return laplace_relative_log_density_kernel(variances, Coeffs<Scalar>(Coeffs<Scalar>::Zero(x.size())), a, x);
}

/// log dN_{h,Q}/dN_Q (x) = sum_k (h_k x_k / q_k - h_k^2 / (2 q_k)).
template <typename Scalar>
double gaussian_shift_log_density_kernel(const Coeffs<Scalar>& variances,
                                         const Coeffs<Scalar>& h, const Coeffs<Scalar>& x) {
  CompensatedSum acc;
  for (Index i = 0; i < x.size(); ++i) {
    const double hi = double(h[i]);
    const double qi = double(variances[i]);
    acc.add(hi * double(x[i]) / qi - hi * hi / (2.0 * qi));
  }
  return acc.value();
}

}  // namespace detail

/// log density at x of the a-shifted measure w.r.t. the centered measure m.
template <typename Scalar>
double laplace_shift_log_density(const LaplacianProductMeasure<Scalar>& m,
                                 const Coeffs<Scalar>& a, const Coeffs<Scalar>& x) {
  detail::require(m.is_centered(), "laplace_shift_log_density expects a centered measure");
  detail::require_same_size(a, m.variances(), "laplace_shift_log_density");
  detail::require_same_size(x, m.variances(), "laplace_shift_log_density");
  return detail::laplace_shift_log_density_kernel(m.variances(), a, x);
}

/// log density at x of the measure shifted to target_mean w.r.t. m itself
/// (whose own mean may be nonzero). Exchanging m.mean() and target_mean
/// negates the result exactly.
template <typename Scalar>
double laplace_relative_log_density(const LaplacianProductMeasure<Scalar>& m,
                                    const Coeffs<Scalar>& target_mean,
                                    const Coeffs<Scalar>& x) {
  detail::require_same_size(target_mean, m.variances(), "laplace_relative_log_density");
  detail::require_same_size(x, m.variances(), "laplace_relative_log_density");
  return detail::laplace_relative_log_density_kernel(m.variances(), m.mean(), target_mean, x);
}

/// Cameron-Martin log density at x of the h-shifted Gaussian measure w.r.t. m.
template <typename Scalar>
double gaussian_shift_log_density(const GaussianProductMeasure<Scalar>& m,
                                  const Coeffs<Scalar>& h, const Coeffs<Scalar>& x) {
  detail::require_same_size(h, m.variances(), "gaussian_shift_log_density");
  detail::require_same_size(x, m.variances(), "gaussian_shift_log_density");
  return detail::gaussian_shift_log_density_kernel(m.variances(), h, x);
}

/// ||h||_E = (sum_k h_k^2 / q_k)^(1/2). At finite truncation every h lies in
/// the Cameron-Martin space, so no divergence flag is needed here.
template <typename Scalar>
double cameron_martin_norm(const GaussianProductMeasure<Scalar>& m, const Coeffs<Scalar>& h) {
  detail::require_same_size(h, m.variances(), "cameron_martin_norm");
  detail::CompensatedSum acc;
  for (Index i = 0; i < h.size(); ++i) {
    const double hi = double(h[i]);
    acc.add(hi * hi / double(m.variances()[i]));
  }
  return std::sqrt(acc.value());
}

/// Hellinger affinity of two scalar Laplace laws with common variance lambda
/// and means 0 and a: (1 + t) e^{-t} with t = |a| / sqrt(2 lambda). Always in
/// (0, 1], equal to 1 iff a == 0.
inline double hellinger_component(double a, double lambda) {
  detail::require(lambda > 0.0 && std::isfinite(lambda),
                  "hellinger_component requires lambda > 0");
  const double t = std::abs(a) / std::sqrt(2.0 * lambda);
  return (1.0 + t) * std::exp(-t);
}

enum class KakutaniVerdict { Equivalent, Singular, Inconclusive };

inline const char* to_string(KakutaniVerdict v) {
  switch (v) {
    case KakutaniVerdict::Equivalent: return "equivalent";
    case KakutaniVerdict::Singular: return "singular";
    default: return "inconclusive";
  }
}

struct KakutaniReport {
  std::vector<Index> grid;                 ///< truncation levels n
  std::vector<double> neg_log_affinity;    ///< -ln H_n on the grid
  std::vector<double> affinity;            ///< H_n = prod_{k<=n} of components
  KakutaniVerdict verdict = KakutaniVerdict::Inconclusive;
};

/// Product-measure equivalence diagnostic for the shift a of a centered
/// Laplacian product measure. H_n is accumulated in log space; a truncation
/// can never prove a limit, so the verdict thresholds are explicit:
/// "equivalent" when the last up-to-10 grid increments of -ln H_n sum to
/// < 1e-6, "singular" when -ln H_n exceeds 30 with a non-decreasing per-level
/// increment trend, otherwise "inconclusive".
template <typename Scalar>
KakutaniReport kakutani_diagnostic(const Coeffs<Scalar>& a, const Coeffs<Scalar>& variances,
                                   const std::vector<Index>& n_grid) {
  detail::require(!n_grid.empty(), "kakutani_diagnostic requires a non-empty truncation grid");
  detail::require_same_size(a, variances, "kakutani_diagnostic");
  for (std::size_t i = 0; i < n_grid.size(); ++i) {
    detail::require(n_grid[i] >= 1 && n_grid[i] <= a.size(),
                    "kakutani_diagnostic grid entries must lie in [1, len(a)]");
    if (i > 0)
      detail::require(n_grid[i] > n_grid[i - 1],
                      "kakutani_diagnostic grid must be strictly increasing");
  }

  KakutaniReport rep;
  rep.grid = n_grid;
  detail::CompensatedSum neg_log;
  Index next = 0;
  for (std::size_t gi = 0; gi < n_grid.size(); ++gi) {
    for (; next < n_grid[gi]; ++next) {
      const double t =
          std::abs(double(a[next])) / std::sqrt(2.0 * double(variances[next]));
      // t - log1p(t) >= 0, the per-coordinate contribution to -ln H
      neg_log.add(t - std::log1p(t));
    }
    rep.neg_log_affinity.push_back(neg_log.value());
    rep.affinity.push_back(std::exp(-neg_log.value()));
  }

  const std::size_t g = rep.grid.size();
  std::vector<double> inc;  // per-level increment rate between grid points
  for (std::size_t i = 1; i < g; ++i)
    inc.push_back((rep.neg_log_affinity[i] - rep.neg_log_affinity[i - 1]) /
                  double(rep.grid[i] - rep.grid[i - 1]));

  const std::size_t tail = std::min<std::size_t>(10, inc.size());
  double tail_sum = 0.0;
  for (std::size_t i = inc.size() - tail; i < inc.size(); ++i)
    tail_sum += inc[i] * double(rep.grid[i + 1] - rep.grid[i]);

  bool trend_nondecreasing = true;
  for (std::size_t i = 1; i < inc.size(); ++i)
    if (inc[i] < inc[i - 1] - 1e-15) trend_nondecreasing = false;

  const double last = rep.neg_log_affinity.back();
  if (g >= 2 && tail_sum < 1e-6)
    rep.verdict = KakutaniVerdict::Equivalent;
  else if (last > 30.0 && trend_nondecreasing)
    rep.verdict = KakutaniVerdict::Singular;
  else if (g == 1 && last == 0.0)
    rep.verdict = KakutaniVerdict::Equivalent;  // identically zero shift
  else
    rep.verdict = KakutaniVerdict::Inconclusive;
  return rep;
}

}  // namespace specmap
