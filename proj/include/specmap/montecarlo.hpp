#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "specmap/inference.hpp"
#include "specmap/measures.hpp"
#include "specmap/rng.hpp"
#include "specmap/spectral.hpp"

namespace specmap {

/// Open ball in the s=0 scale norm (plain l2 on coefficients).
struct BallQuery {
  CoeffsXd center;
  double radius = 0.0;
};

/// Source element u+ = A^{beta/2 - tau} e^{-A} w with sup_k |w_k| <= rho.
struct SourceCondition {
  CoeffsXd w;
  double rho = 0.0;

  void validate() const {
    detail::require(rho > 0.0, "source.rho must be positive");
    for (Index i = 0; i < w.size(); ++i)
      detail::require(std::abs(double(w[i])) <= rho,
                      "source.w must satisfy sup_k |w_k| <= rho");
  }
};

/// Reproducible experiment inputs. The rate sweep couples the prior scale to
/// the noise level via r^2 = C b, constrained below by r^2 >= (rho/sqrt(2)) b.
struct ExperimentConfig {
  SpectralBasisXd basis;
  PriorSpecXd prior;
  NoiseModelXd noise;
  Index truncation = 0;
  std::uint64_t seed = 0;
  long long replicates = 0;
  int threads = 1;
  std::vector<double> b_grid;       ///< strictly decreasing, for rate sweeps
  double rate_constant = 1.0;       ///< C with r^2 = C b

  void validate() const {
    detail::require(truncation >= 1, "config.truncation must be >= 1");
    detail::require(replicates >= 1, "config.replicates must be >= 1");
    detail::require(threads >= 1, "config.threads must be >= 1");
    noise.validate(basis);
    detail::require(prior.r > 0.0, "prior.r must be positive");
    detail::require(prior.tau > basis.dimension() / 2.0, "prior.tau must exceed d/2");
    for (std::size_t i = 0; i < b_grid.size(); ++i) {
      detail::require(b_grid[i] > 0.0, "rate.b_grid entries must be positive");
      if (i > 0)
        detail::require(b_grid[i] < b_grid[i - 1], "rate.b_grid must be strictly decreasing");
    }
    detail::require(rate_constant > 0.0, "rate.C must be positive");
  }
};

namespace detail {

/// Fixed work unit so that chunk partials, and hence every reduced result,
/// do not depend on the number of worker threads.
constexpr long long kChunkSize = 8192;

template <typename Partial, typename Fn>
std::vector<Partial> run_chunked(long long total, int threads, Fn&& fn) {
  const long long nch = total <= 0 ? 0 : (total + kChunkSize - 1) / kChunkSize;
  std::vector<Partial> parts(static_cast<std::size_t>(nch));
  auto work = [&](long long c) {
    const long long begin = c * kChunkSize;
    const long long end = std::min(total, begin + kChunkSize);
    parts[static_cast<std::size_t>(c)] = fn(begin, end);
  };
  if (threads <= 1 || nch <= 1) {
    for (long long c = 0; c < nch; ++c) work(c);
  } else {
    std::atomic<long long> next{0};
    std::vector<std::thread> pool;
    const int nt = static_cast<int>(std::min<long long>(threads, nch));
    pool.reserve(static_cast<std::size_t>(nt));
    for (int t = 0; t < nt; ++t)
      pool.emplace_back([&] {
        for (;;) {
          const long long c = next.fetch_add(1);
          if (c >= nch) break;
          work(c);
        }
      });
    for (auto& th : pool) th.join();
  }
  return parts;
}

/// f(t) = 1 - e^{-t} - t e^{-t} divided by t^2, computed without the
/// catastrophic cancellation of the direct form at small t.
inline double mse_shape_g(double t) {
  if (t < 1e-4) return 0.5 - t / 3.0 + t * t / 8.0 - t * t * t / 30.0;
  return (-std::expm1(-t) - t * std::exp(-t)) / (t * t);
}

}  // namespace detail

/// f(t) = 1 - e^{-t} - t e^{-t}, the shape of the componentwise MAP error.
inline double mse_shape_f(double t) {
  detail::require(t >= 0.0, "mse_shape_f is defined for t >= 0");
  return t * t * detail::mse_shape_g(t);
}

struct BallProbEstimate {
  double estimate = 0.0;
  double std_err = 0.0;
  long long hits = 0;
  long long samples = 0;
  bool zero_hits = false;
  double upper_bound = 0.0;  ///< one-sided 95% bound when zero hits were seen
};

/// Plain Monte-Carlo estimate of the prior mass of a ball. Sample i depends
/// only on (seed, i), so estimates are bit-reproducible for any thread count.
inline BallProbEstimate prior_ball_prob(const GaussianProductMeasureXd& m,
                                        const BallQuery& q, long long n_samples,
                                        std::uint64_t seed, int threads = 1) {
  detail::require(q.radius > 0.0, "ball radius must be positive");
  detail::require(n_samples >= 1000, "prior_ball_prob requires n_samples >= 1000");
  detail::require_same_size(q.center, m.variances(), "prior_ball_prob");
  const Index n = m.size();
  const double r2 = q.radius * q.radius;
  CoeffsXd sd = m.variances().sqrt();

  auto parts = detail::run_chunked<long long>(n_samples, threads, [&](long long b, long long e) {
    long long hits = 0;
    for (long long i = b; i < e; ++i) {
      Philox4x32 rng(seed, static_cast<std::uint64_t>(i));
      double dist2 = 0.0;
      for (Index k = 0; k < n; ++k) {
        const double d = rng.normal() * sd[k] - q.center[k];
        dist2 += d * d;
      }
      if (dist2 < r2) ++hits;
    }
    return hits;
  });

  BallProbEstimate out;
  out.samples = n_samples;
  for (long long h : parts) out.hits += h;
  const double p = double(out.hits) / double(n_samples);
  out.estimate = p;
  out.std_err = std::sqrt(p * (1.0 - p) / double(n_samples));
  if (out.hits == 0) {
    out.zero_hits = true;
    out.upper_bound = 1.0 - std::pow(0.05, 1.0 / double(n_samples));
  }
  return out;
}

struct RatioEstimate {
  double ratio = 0.0;
  double std_err = 0.0;
  long long hits1 = 0;
  long long hits2 = 0;
  long long samples = 0;
};

/// Thrown when the denominator ball receives no weighted hits.
class DegenerateRatioError : public std::runtime_error {
 public:
  DegenerateRatioError(long long h1, long long h2, const std::string& msg)
      : std::runtime_error(msg), hits1(h1), hits2(h2) {}
  long long hits1;
  long long hits2;
};

namespace detail {

struct RatioPartial {
  double sa = 0, sb = 0, saa = 0, sbb = 0, sab = 0;
  long long ha = 0, hb = 0;
};

/// Ratio of reweighted ball masses under a common prior sample stream.
/// log_weight is evaluated once per draw; the normalization Z cancels.
template <typename LogW>
RatioEstimate ball_ratio_core(const GaussianProductMeasureXd& m, const BallQuery& q1,
                              const BallQuery& q2, long long n_samples, std::uint64_t seed,
                              int threads, LogW&& log_weight) {
  detail::require(q1.radius > 0.0 && q2.radius > 0.0, "ball radius must be positive");
  detail::require_same_size(q1.center, q2.center, "posterior_ball_ratio");
  detail::require_same_size(q1.center, m.variances(), "posterior_ball_ratio");
  detail::require(n_samples >= 1000, "posterior_ball_ratio requires n_samples >= 1000");
  const Index n = m.size();
  CoeffsXd sd = m.variances().sqrt();
  const double r1sq = q1.radius * q1.radius;
  const double r2sq = q2.radius * q2.radius;

  auto parts = detail::run_chunked<RatioPartial>(
      n_samples, threads, [&](long long b, long long e) {
        RatioPartial p;
        CoeffsXd x(n);
        for (long long i = b; i < e; ++i) {
          Philox4x32 rng(seed, static_cast<std::uint64_t>(i));
          for (Index k = 0; k < n; ++k) x[k] = rng.normal() * sd[k];
          double d1 = 0.0, d2 = 0.0;
          for (Index k = 0; k < n; ++k) {
            const double e1 = x[k] - q1.center[k];
            const double e2 = x[k] - q2.center[k];
            d1 += e1 * e1;
            d2 += e2 * e2;
          }
          const bool in1 = d1 < r1sq;
          const bool in2 = d2 < r2sq;
          if (!in1 && !in2) continue;
          const double w = std::exp(log_weight(x));
          if (in1) {
            p.sa += w;
            p.saa += w * w;
            ++p.ha;
          }
          if (in2) {
            p.sb += w;
            p.sbb += w * w;
            ++p.hb;
          }
          if (in1 && in2) p.sab += w * w;
        }
        return p;
      });

  RatioPartial tot;
  for (const auto& p : parts) {
    tot.sa += p.sa;
    tot.sb += p.sb;
    tot.saa += p.saa;
    tot.sbb += p.sbb;
    tot.sab += p.sab;
    tot.ha += p.ha;
    tot.hb += p.hb;
  }
  if (tot.hb == 0 || tot.sb == 0.0)
    throw DegenerateRatioError(tot.ha, tot.hb,
                               "posterior_ball_ratio: zero weighted hits in the denominator ball "
                               "(hits1=" + std::to_string(tot.ha) +
                               ", hits2=" + std::to_string(tot.hb) + ")");

  const double N = double(n_samples);
  const double ma = tot.sa / N;
  const double mb = tot.sb / N;
  const double vaa = tot.saa / N - ma * ma;
  const double vbb = tot.sbb / N - mb * mb;
  const double vab = tot.sab / N - ma * mb;

  RatioEstimate out;
  out.samples = n_samples;
  out.hits1 = tot.ha;
  out.hits2 = tot.hb;
  out.ratio = tot.sa / tot.sb;
  // delta method for U/V with common samples
  const double rel = (vaa / (ma * ma) + vbb / (mb * mb) - 2.0 * vab / (ma * mb)) / N;
  out.std_err = out.ratio * std::sqrt(std::max(0.0, rel));
  return out;
}

}  // namespace detail

/// -misfit(x, y) for the configured noise kind under the heat forward; the
/// reweighting used by all posterior small-ball estimators.
inline std::function<double(const CoeffsXd&)> posterior_log_weight(
    const SpectralBasisXd& basis, const NoiseModelXd& noise, const CoeffsXd& y) {
  if (noise.kind == NoiseKind::Laplacian) {
    return [basis, noise, y](const CoeffsXd& x) {
      return -heat_nll(basis, noise.b, noise.beta, x, y);
    };
  }
  CoeffsXd lam = noise.variances(basis, y.size());
  return [basis, lam, y](const CoeffsXd& x) {
    return -gaussian_nll(lam, forward_heat(basis, x), y);
  };
}

/// mu^y(B(q1)) / mu^y(B(q2)) estimated with a single common prior stream;
/// the normalization constant is never formed.
inline RatioEstimate posterior_ball_ratio(const PriorSpecXd& prior,
                                          const SpectralBasisXd& basis,
                                          const NoiseModelXd& noise, const CoeffsXd& y,
                                          const BallQuery& q1, const BallQuery& q2,
                                          long long n_samples, std::uint64_t seed,
                                          int threads = 1) {
  detail::require_same_size(q1.center, y, "posterior_ball_ratio");
  const auto m = GaussianProductMeasureXd::from_prior(prior, basis, q1.center.size());
  const auto logw = posterior_log_weight(basis, noise, y);
  return detail::ball_ratio_core(m, q1, q2, n_samples, seed, threads, logw);
}

/// Same estimator with an explicit log-weight (e.g. identically zero to fall
/// back to prior ball ratios).
template <typename LogW>
RatioEstimate weighted_ball_ratio(const GaussianProductMeasureXd& m, const BallQuery& q1,
                                  const BallQuery& q2, long long n_samples, std::uint64_t seed,
                                  LogW&& log_weight, int threads = 1) {
  return detail::ball_ratio_core(m, q1, q2, n_samples, seed, threads,
                                 std::forward<LogW>(log_weight));
}

class AmfZeroHitsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AmfOptions {
  int grid_points = 11;          ///< per grid axis, spacing eps/4, centered at the MAP
  int prior_draw_candidates = 100;
  long long max_truncation = 5;  ///< desk-scale guard on n
};

struct AmfResult {
  std::vector<CoeffsXd> centers;
  std::vector<double> masses;    ///< reweighted hit averages, common stream
  std::vector<double> std_errs;
  std::size_t best_index = 0;
  std::size_t map_index = 0;     ///< index of the closed-form MAP candidate
  double achieved_ratio = 1.0;   ///< mass(returned) / max mass over candidates
  long long samples = 0;

  const CoeffsXd& best_center() const { return centers[best_index]; }
  double best_mass() const { return masses[best_index]; }
  double map_mass() const { return masses[map_index]; }
  double map_to_best_ratio() const { return masses[map_index] / masses[best_index]; }
};

/// Search for a small-ball maximizing center: candidates are a grid around the
/// closed-form MAP (first two coordinates, spacing eps/4) plus prior draws;
/// every candidate's reweighted ball mass is estimated on one common sample
/// stream and the argmax is returned. Truncations beyond n = 5 are refused:
/// ball hit rates vanish and the estimates would be meaningless.
/// A log-weight override replaces the posterior reweighting (identically zero
/// gives the prior-only search).
inline AmfResult amf_search(const PriorSpecXd& prior, const SpectralBasisXd& basis,
                            const NoiseModelXd& noise, const CoeffsXd& y, double eps,
                            long long n_samples, std::uint64_t seed, int threads = 1,
                            const AmfOptions& opts = {},
                            const std::function<double(const CoeffsXd&)>* log_weight_override =
                                nullptr) {
  const Index n = y.size();
  detail::require(n <= opts.max_truncation,
                  "amf_search is limited to truncation n <= 5 (desk-scale small-ball regime)");
  detail::require(eps > 0.0, "amf_search radius must be positive");
  detail::require(n_samples >= 1000, "amf_search requires n_samples >= 1000");

  const CoeffsXd map_center = noise.kind == NoiseKind::Laplacian
                                  ? map_closed_form(prior, basis, noise, y)
                                  : map_gaussian_closed_form(prior, basis, noise, y);

  AmfResult res;
  const int half = opts.grid_points / 2;
  const double spacing = eps / 4.0;
  const Index gdims = std::min<Index>(n, 2);
  if (gdims == 1) {
    for (int i = -half; i <= half; ++i) {
      CoeffsXd c = map_center;
      c[0] += i * spacing;
      res.centers.push_back(c);
      if (i == 0) res.map_index = res.centers.size() - 1;
    }
  } else {
    for (int i = -half; i <= half; ++i)
      for (int j = -half; j <= half; ++j) {
        CoeffsXd c = map_center;
        c[0] += i * spacing;
        c[1] += j * spacing;
        res.centers.push_back(c);
        if (i == 0 && j == 0) res.map_index = res.centers.size() - 1;
      }
  }
  const auto m = GaussianProductMeasureXd::from_prior(prior, basis, n);
  for (int j = 0; j < opts.prior_draw_candidates; ++j) {
    Philox4x32 rng(seed, (std::uint64_t(1) << 62) + std::uint64_t(j));
    res.centers.push_back(sample(m, rng));
  }

  const std::size_t nc = res.centers.size();
  const double rsq = eps * eps;
  CoeffsXd sd = m.variances().sqrt();
  const auto logw = log_weight_override ? *log_weight_override
                                        : posterior_log_weight(basis, noise, y);

  struct Partial {
    std::vector<double> sw, sww;
    std::vector<long long> hits;
  };
  auto parts = detail::run_chunked<Partial>(n_samples, threads, [&](long long b, long long e) {
    Partial p;
    p.sw.assign(nc, 0.0);
    p.sww.assign(nc, 0.0);
    p.hits.assign(nc, 0);
    CoeffsXd x(n);
    for (long long i = b; i < e; ++i) {
      Philox4x32 rng(seed, static_cast<std::uint64_t>(i));
      for (Index k = 0; k < n; ++k) x[k] = rng.normal() * sd[k];
      double w = -1.0;  // computed lazily on the first hit
      for (std::size_t c = 0; c < nc; ++c) {
        double d = 0.0;
        const CoeffsXd& cc = res.centers[c];
        for (Index k = 0; k < n; ++k) {
          const double dk = x[k] - cc[k];
          d += dk * dk;
          if (d >= rsq) break;
        }
        if (d < rsq) {
          if (w < 0.0) w = std::exp(logw(x));
          p.sw[c] += w;
          p.sww[c] += w * w;
          ++p.hits[c];
        }
      }
    }
    return p;
  });

  std::vector<double> sw(nc, 0.0), sww(nc, 0.0);
  std::vector<long long> hits(nc, 0);
  for (const auto& p : parts)
    for (std::size_t c = 0; c < nc; ++c) {
      sw[c] += p.sw[c];
      sww[c] += p.sww[c];
      hits[c] += p.hits[c];
    }

  res.samples = n_samples;
  res.masses.resize(nc);
  res.std_errs.resize(nc);
  const double N = double(n_samples);
  bool any_hits = false;
  for (std::size_t c = 0; c < nc; ++c) {
    res.masses[c] = sw[c] / N;
    const double var = sww[c] / N - res.masses[c] * res.masses[c];
    res.std_errs[c] = std::sqrt(std::max(0.0, var) / N);
    if (hits[c] > 0) any_hits = true;
  }
  if (!any_hits)
    throw AmfZeroHitsError("amf_search: all " + std::to_string(nc) +
                           " candidates received zero hits at eps=" + std::to_string(eps) +
                           " with " + std::to_string(n_samples) + " samples");

  res.best_index = 0;
  for (std::size_t c = 1; c < nc; ++c)
    if (res.masses[c] > res.masses[res.best_index]) res.best_index = c;
  res.achieved_ratio = 1.0;  // the argmax over the candidate set is returned
  return res;
}

/// Exact componentwise mean squared error of the closed-form MAP under
/// Laplacian noise in the no-clipping regime (clip radius >= |u+_k|);
/// std::nullopt when clipping is active at the truth, where no closed
/// expression is available here and Monte-Carlo takes over.
inline std::optional<double> mse_component_analytic(const SpectralBasisXd& basis,
                                                    const PriorSpecXd& prior,
                                                    const NoiseModelXd& noise,
                                                    double u_dagger_k, Index k) {
  detail::require(noise.kind == NoiseKind::Laplacian,
                  "mse_component_analytic requires Laplacian noise");
  noise.validate(basis);
  const double la = basis.log_eigenvalue(k);
  const double a = basis.eigenvalue(k);
  const double c = std::exp(0.5 * std::log(2.0) + 0.5 * noise.beta * la - a);
  const double S = prior.r * prior.r / noise.b *
                   std::exp(0.5 * std::log(2.0) + (0.5 * noise.beta - prior.tau) * la - a);
  const double t = std::abs(u_dagger_k);
  if (S < t) return std::nullopt;  // clipping active at the truth
  const double A = c / noise.b * (S + t);
  const double B = c / noise.b * (S - t);
  // (b^2/c^2) [f(A) + f(B)] with f(x) = x^2 g(x); the x^2 factors cancel the
  // overflow-prone b^2/c^2 prefactor exactly.
  return (S + t) * (S + t) * detail::mse_shape_g(A) + (S - t) * (S - t) * detail::mse_shape_g(B);
}

struct MseEstimate {
  double mse = 0.0;       ///< sum of the per-component means (exact bookkeeping)
  double std_err = 0.0;   ///< from the per-replicate totals
  CoeffsXd per_component;
  CoeffsXd per_component_std_err;
  long long replicates = 0;
};

/// Monte-Carlo mean squared error of the closed-form MAP: for each replicate,
/// draw y ~ Laplace(e^{-A} u+, b^2 A^{-beta}) and apply the estimator.
/// Replicate r is keyed by (seed, r); reduction is in fixed chunk order, so
/// results are bit-identical for any thread count.
inline MseEstimate mse_monte_carlo(const SpectralBasisXd& basis, const PriorSpecXd& prior,
                                   const NoiseModelXd& noise, const CoeffsXd& u_dagger,
                                   long long n_replicates, std::uint64_t seed,
                                   int threads = 1) {
  detail::require(noise.kind == NoiseKind::Laplacian,
                  "mse_monte_carlo requires Laplacian noise");
  detail::require(n_replicates >= 2, "mse_monte_carlo requires at least 2 replicates");
  const Index n = u_dagger.size();
  const CoeffsXd lam = noise.variances(basis, n);
  const CoeffsXd mean = forward_heat(basis, u_dagger);

  struct Partial {
    std::vector<double> s, ss;
    double tot = 0.0, tot2 = 0.0;
  };
  auto parts = detail::run_chunked<Partial>(n_replicates, threads, [&](long long b, long long e) {
    Partial p;
    p.s.assign(static_cast<std::size_t>(n), 0.0);
    p.ss.assign(static_cast<std::size_t>(n), 0.0);
    CoeffsXd y(n);
    for (long long r = b; r < e; ++r) {
      Philox4x32 rng(seed, static_cast<std::uint64_t>(r));
      for (Index k = 0; k < n; ++k) y[k] = rng.laplace(mean[k], lam[k]);
      const CoeffsXd uhat = map_closed_form(prior, basis, noise, y);
      double tot = 0.0;
      for (Index k = 0; k < n; ++k) {
        const double err = uhat[k] - u_dagger[k];
        const double e2 = err * err;
        p.s[static_cast<std::size_t>(k)] += e2;
        p.ss[static_cast<std::size_t>(k)] += e2 * e2;
        tot += e2;
      }
      p.tot += tot;
      p.tot2 += tot * tot;
    }
    return p;
  });

  std::vector<double> s(static_cast<std::size_t>(n), 0.0), ss(static_cast<std::size_t>(n), 0.0);
  double tot = 0.0, tot2 = 0.0;
  for (const auto& p : parts) {
    for (Index k = 0; k < n; ++k) {
      s[static_cast<std::size_t>(k)] += p.s[static_cast<std::size_t>(k)];
      ss[static_cast<std::size_t>(k)] += p.ss[static_cast<std::size_t>(k)];
    }
    tot += p.tot;
    tot2 += p.tot2;
  }

  MseEstimate out;
  out.replicates = n_replicates;
  out.per_component.resize(n);
  out.per_component_std_err.resize(n);
  const double N = double(n_replicates);
  double total = 0.0;
  for (Index k = 0; k < n; ++k) {
    const double mk = s[static_cast<std::size_t>(k)] / N;
    out.per_component[k] = mk;
    const double vk = ss[static_cast<std::size_t>(k)] / N - mk * mk;
    out.per_component_std_err[k] = std::sqrt(std::max(0.0, vk) / N);
    total += mk;
  }
  out.mse = total;  // by construction equals the sum of per-component means
  const double mt = tot / N;
  out.std_err = std::sqrt(std::max(0.0, tot2 / N - mt * mt) / N);
  return out;
}

/// u+_k = alpha_k^{beta/2 - tau} e^{-alpha_k} w_k, with the sup-norm of w
/// validated against rho.
inline CoeffsXd build_source(const SpectralBasisXd& basis, double beta, double tau,
                             const CoeffsXd& w, double rho) {
  SourceCondition sc{w, rho};
  sc.validate();
  CoeffsXd u(w.size());
  for (Index i = 0; i < w.size(); ++i) {
    const double la = basis.log_eigenvalue(i + 1);
    u[i] = std::exp((0.5 * beta - tau) * la - basis.eigenvalue(i + 1)) * w[i];
  }
  return u;
}

struct RatePoint {
  double b = 0.0;
  double r2 = 0.0;
  double mse = 0.0;
  double std_err = 0.0;
  double bound = 0.0;  ///< 2 C Tr(A^{-tau}) b, upper-bracket trace
  bool pass = false;   ///< mse <= bound within 3 standard errors
};

struct RateResult {
  std::vector<RatePoint> points;
  std::optional<double> slope;  ///< log-log least squares; absent with < 2 usable points
  bool all_bounds_pass = true;
  int points_in_fit = 0;
};

/// Convergence-rate sweep: for each b in the strictly decreasing grid, couple
/// r^2 = C b, draw data from the source truth, and compare the Monte-Carlo MSE
/// against the bound 2 C Tr(A^{-tau}) b. Bound violations beyond 3 standard
/// errors are flagged per point, never silently dropped. The slope regression
/// uses only points whose standard error is below 10% of the MSE.
inline RateResult rate_experiment(const SpectralBasisXd& basis, double beta, double tau,
                                  const SourceCondition& source,
                                  const std::vector<double>& b_grid, double C, Index n,
                                  long long n_replicates, std::uint64_t seed,
                                  int threads = 1) {
  detail::require(!b_grid.empty(), "rate.b_grid must be non-empty");
  for (std::size_t i = 0; i < b_grid.size(); ++i) {
    detail::require(b_grid[i] > 0.0, "rate.b_grid entries must be positive");
    if (i > 0)
      detail::require(b_grid[i] < b_grid[i - 1], "rate.b_grid must be strictly decreasing");
  }
  source.validate();
  detail::require(source.w.size() >= n, "source.w must cover the truncation");
  detail::require(C >= source.rho / std::sqrt(2.0),
                  "rate.C must satisfy C >= rho/sqrt(2) (so that r^2 >= (rho/sqrt(2)) b)");

  const CoeffsXd w = source.w.head(n);
  const CoeffsXd u_dagger = build_source(basis, beta, tau, w, source.rho);
  const double trace_upper = double(trace_power(basis, tau, n).upper());

  RateResult res;
  for (double b : b_grid) {
    const PriorSpecXd prior{std::sqrt(C * b), tau};
    const NoiseModelXd noise{NoiseKind::Laplacian, b, beta};
    const MseEstimate est = mse_monte_carlo(basis, prior, noise, u_dagger, n_replicates,
                                            seed, threads);
    RatePoint pt;
    pt.b = b;
    pt.r2 = C * b;
    pt.mse = est.mse;
    pt.std_err = est.std_err;
    pt.bound = 2.0 * C * trace_upper * b;
    pt.pass = est.mse <= pt.bound + 3.0 * est.std_err;
    if (!pt.pass) res.all_bounds_pass = false;
    res.points.push_back(pt);
  }

  // least squares of log(mse) against log(b) over well-resolved points
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int m = 0;
  for (const auto& pt : res.points) {
    if (pt.mse <= 0.0 || pt.std_err >= 0.1 * pt.mse) continue;
    const double x = std::log(pt.b);
    const double y = std::log(pt.mse);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++m;
  }
  res.points_in_fit = m;
  if (m >= 2) {
    const double denom = m * sxx - sx * sx;
    if (denom > 0.0) res.slope = (m * sxy - sx * sy) / denom;
  }
  return res;
}

}  // namespace specmap
