#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "specmap/measures.hpp"
#include "specmap/rng.hpp"
#include "specmap/spectral.hpp"

using namespace specmap;

namespace {

CoeffsXd make(std::initializer_list<double> v) {
  CoeffsXd x(static_cast<Index>(v.size()));
  Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

}  // namespace

TEST_CASE("gaussian measure construction and prior derivation") {
  CHECK_THROWS_AS(GaussianProductMeasureXd(make({1.0, -0.5})), std::domain_error);
  const auto b = SpectralBasisXd::power_law(2, 1.0);
  const auto m = GaussianProductMeasureXd::from_prior({2.0, 2.0}, b, 3);
  CHECK(m.variances()[0] == doctest::Approx(4.0));
  CHECK(m.variances()[1] == doctest::Approx(1.0));
  CHECK(m.variances()[2] == doctest::Approx(4.0 / 9.0));
  // tau <= d/2 violates the trace-class constraint
  CHECK_THROWS_AS(GaussianProductMeasureXd::from_prior({1.0, 1.0}, b, 3), std::domain_error);
}

TEST_CASE("sample_gaussian moments and determinism") {
  const auto m = GaussianProductMeasureXd(make({0.7, 2.5, 0.04}));
  const long n = 100000;
  CoeffsXd s = CoeffsXd::Zero(3), ss = CoeffsXd::Zero(3);
  for (long i = 0; i < n; ++i) {
    Philox4x32 rng(555, std::uint64_t(i));
    const CoeffsXd x = sample(m, rng);
    s += x;
    ss += x * x;
  }
  for (Index k = 0; k < 3; ++k) {
    const double mean = s[k] / n;
    const double var = ss[k] / n - mean * mean;
    CHECK(std::abs(mean) <= 4.0 * std::sqrt(m.variances()[k] / n));
    CHECK(var == doctest::Approx(m.variances()[k]).epsilon(0.05));
  }
  CHECK((sample_gaussian(m, 99) == sample_gaussian(m, 99)).all());
  CHECK(!(sample_gaussian(m, 99) == sample_gaussian(m, 100)).all());
}

TEST_CASE("sample_laplacian moments, kurtosis and determinism") {
  const CoeffsXd a = make({0.3, -1.0});
  const auto m = LaplacianProductMeasureXd(a, make({1.3, 0.2}));
  const long n = 100000;
  CoeffsXd s = CoeffsXd::Zero(2), s2 = CoeffsXd::Zero(2), s4 = CoeffsXd::Zero(2);
  for (long i = 0; i < n; ++i) {
    Philox4x32 rng(556, std::uint64_t(i));
    const CoeffsXd x = sample(m, rng);
    s += x;
    const CoeffsXd c = x - a;
    s2 += c * c;
    s4 += c * c * c * c;
  }
  for (Index k = 0; k < 2; ++k) {
    CHECK(std::abs(s[k] / n - a[k]) <= 4.0 * std::sqrt(m.variances()[k] / n));
    const double var = s2[k] / n;
    CHECK(var == doctest::Approx(m.variances()[k]).epsilon(0.05));
    const double kurt = (s4[k] / n) / (var * var);
    CHECK(kurt == doctest::Approx(6.0).epsilon(0.15));  // Laplace, not Gaussian
  }
  CHECK((sample_laplacian(m, 7) == sample_laplacian(m, 7)).all());
}

TEST_CASE("laplace shift log density point values") {
  const auto m = LaplacianProductMeasureXd::centered(make({2.0}));
  CHECK(laplace_shift_log_density(m, make({0.0}), make({0.37})) == 0.0);
  CHECK(laplace_shift_log_density(m, make({1.0}), make({0.0})) == doctest::Approx(-1.0));
  const auto m3 = LaplacianProductMeasureXd::centered(make({1.0, 4.0, 0.25}));
  CHECK(laplace_shift_log_density(m3, make({0.0, 0.0, 0.0}), make({1.0, -2.0, 3.0})) == 0.0);
}

TEST_CASE("laplace shift density is exactly antisymmetric under the reverse shift") {
  Philox4x32 rng(777);
  for (int trial = 0; trial < 100; ++trial) {
    CoeffsXd lam(4), a(4), x(4);
    for (Index i = 0; i < 4; ++i) {
      lam[i] = 0.1 + rng.uniform();
      a[i] = rng.normal();
      x[i] = rng.normal();
    }
    const auto m = LaplacianProductMeasureXd::centered(lam);
    const auto m_a = LaplacianProductMeasureXd(a, lam);
    // log dL_a/dL(x) = -log dL/dL_a(x), with both densities at the same x
    const double fwd = laplace_shift_log_density(m, a, x);
    const double rev = laplace_relative_log_density(m_a, CoeffsXd(CoeffsXd::Zero(4)), x);
    CHECK(fwd == -rev);
  }
}

TEST_CASE("gaussian shift log density point values") {
  const auto m = GaussianProductMeasureXd(make({1.0}));
  CHECK(gaussian_shift_log_density(m, make({0.0}), make({2.2})) == 0.0);
  CHECK(gaussian_shift_log_density(m, make({1.0}), make({1.0})) == doctest::Approx(0.5));
}

TEST_CASE("shift densities integrate to one under the base measure") {
  // E_mu[exp(log density)] = 1 within 3 standard errors at 1e5 samples,
  // for 5 random configurations of each kind.
  Philox4x32 cfg_rng(31415);
  const long n = 100000;
  for (int cfg = 0; cfg < 5; ++cfg) {
    const Index dim = 2 + Index(cfg_rng.next_u64() % 3);
    CoeffsXd q(dim), shift(dim);
    for (Index i = 0; i < dim; ++i) {
      q[i] = 0.2 + cfg_rng.uniform();
      shift[i] = 0.6 * cfg_rng.normal() * std::sqrt(q[i]);
    }

    const auto gm = GaussianProductMeasureXd(q);
    double s = 0, ss = 0;
    for (long i = 0; i < n; ++i) {
      Philox4x32 rng(1000 + cfg, std::uint64_t(i));
      const CoeffsXd x = sample(gm, rng);
      const double w = std::exp(gaussian_shift_log_density(gm, shift, x));
      s += w;
      ss += w * w;
    }
    double mean = s / n;
    double se = std::sqrt((ss / n - mean * mean) / n);
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);

    const auto lm = LaplacianProductMeasureXd::centered(q);
    s = ss = 0;
    for (long i = 0; i < n; ++i) {
      Philox4x32 rng(2000 + cfg, std::uint64_t(i));
      const CoeffsXd x = sample(lm, rng);
      const double w = std::exp(laplace_shift_log_density(lm, shift, x));
      s += w;
      ss += w * w;
    }
    mean = s / n;
    se = std::sqrt((ss / n - mean * mean) / n);
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);
  }
}

TEST_CASE("cameron_martin_norm examples") {
  const auto m = GaussianProductMeasureXd(make({1.0, 4.0}));
  CHECK(cameron_martin_norm(m, make({0.0, 0.0})) == 0.0);
  CHECK(cameron_martin_norm(m, make({1.0, 2.0})) == doctest::Approx(std::sqrt(2.0)));
  CHECK_THROWS_AS(cameron_martin_norm(m, make({1.0})), std::invalid_argument);
}

TEST_CASE("hellinger_component examples and quadrature oracle") {
  CHECK(hellinger_component(0.0, 1.7) == 1.0);
  // |a| = sqrt(2 lambda) gives 2/e
  CHECK(hellinger_component(std::sqrt(2.0 * 0.8), 0.8) ==
        doctest::Approx(2.0 * std::exp(-1.0)).epsilon(1e-12));
  CHECK(hellinger_component(std::sqrt(2.0 * 0.8), 0.8) ==
        doctest::Approx(oracles::hellinger_quadrature(std::sqrt(2.0 * 0.8), 0.8))
            .epsilon(1e-10));
  // monotone decreasing in |a| on a grid
  double prev = 1.0;
  for (int i = 1; i <= 40; ++i) {
    const double v = hellinger_component(0.1 * i, 0.5);
    CHECK(v < prev);
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
    prev = v;
  }
  CHECK_THROWS_AS(hellinger_component(1.0, 0.0), std::domain_error);
}

TEST_CASE("hellinger product matches the quadrature oracle for n <= 5") {
  Philox4x32 rng(888);
  for (int trial = 0; trial < 5; ++trial) {
    const Index n = 1 + Index(rng.next_u64() % 5);
    double product = 1.0, oracle = 1.0;
    for (Index i = 0; i < n; ++i) {
      const double lam = 0.2 + rng.uniform();
      const double a = 1.5 * rng.normal();
      product *= hellinger_component(a, lam);
      oracle *= oracles::hellinger_quadrature(a, lam);
    }
    CHECK(product == doctest::Approx(oracle).epsilon(1e-8));
  }
}

TEST_CASE("kakutani: zero shift is equivalent with affinity one") {
  const Index n = 50;
  const CoeffsXd a = CoeffsXd::Zero(n);
  CoeffsXd lam(n);
  for (Index i = 0; i < n; ++i) lam[i] = 1.0 / double((i + 1) * (i + 1));
  const auto rep = kakutani_diagnostic(a, lam, {10, 20, 30, 40, 50});
  for (double h : rep.affinity) CHECK(h == 1.0);
  CHECK(rep.verdict == KakutaniVerdict::Equivalent);
}

TEST_CASE("kakutani: a_k = sqrt(lambda_k) diverges at rate >= n/12") {
  const Index n = 400;
  CoeffsXd lam(n), a(n);
  for (Index i = 0; i < n; ++i) {
    lam[i] = 1.0 / double((i + 1) * (i + 1));
    a[i] = std::sqrt(lam[i]);
  }
  std::vector<Index> grid;
  for (Index g = 40; g <= n; g += 40) grid.push_back(g);
  const auto rep = kakutani_diagnostic(a, lam, grid);
  CHECK(rep.verdict == KakutaniVerdict::Singular);
  for (std::size_t i = 0; i < grid.size(); ++i)
    CHECK(rep.neg_log_affinity[i] >= double(grid[i]) / 12.0 - 1e-9);
}

TEST_CASE("kakutani: square-summable relative shift is equivalent") {
  const Index n = 2000;
  CoeffsXd lam(n), a(n);
  for (Index i = 0; i < n; ++i) {
    lam[i] = 1.0 / double((i + 1) * (i + 1));
    a[i] = lam[i];  // sum a_k^2/lambda_k = sum lambda_k < infinity
  }
  std::vector<Index> grid{10, 50, 100, 500, 1000};
  for (Index g = 1990; g <= 2000; ++g) grid.push_back(g);
  const auto rep = kakutani_diagnostic(a, lam, grid);
  CHECK(rep.verdict == KakutaniVerdict::Equivalent);
  // -ln H_n bracketed by (1/12, 1/4) of the partial sums of lambda
  double plam = 0.0;
  for (Index i = 0; i < 1000; ++i) plam += lam[i];
  const double at1000 = rep.neg_log_affinity[4];
  CHECK(at1000 >= plam / 12.0 - 1e-12);
  CHECK(at1000 <= plam / 4.0 + 1e-12);
}

TEST_CASE("kakutani increment bracketing holds coordinatewise") {
  Philox4x32 rng(999);
  for (int trial = 0; trial < 200; ++trial) {
    const double lam = 0.1 + 2.0 * rng.uniform();
    double a = rng.normal() * std::sqrt(lam);
    if (std::abs(a) / std::sqrt(2.0 * lam) >= 1.0) a *= 0.3;
    const double t = std::abs(a) / std::sqrt(2.0 * lam);
    if (t >= 1.0) continue;
    const double inc = t - std::log1p(t);
    CHECK(inc >= a * a / (12.0 * lam) - 1e-15);
    CHECK(inc <= a * a / (4.0 * lam) + 1e-15);
  }
}

TEST_CASE("kakutani rejects an empty grid") {
  const CoeffsXd a = CoeffsXd::Zero(3);
  const CoeffsXd lam = CoeffsXd::Ones(3);
  CHECK_THROWS_AS(kakutani_diagnostic(a, lam, {}), std::domain_error);
}
