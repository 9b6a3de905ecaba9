#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "specmap/montecarlo.hpp"

using namespace specmap;

namespace {

CoeffsXd make(std::initializer_list<double> v) {
  CoeffsXd x(static_cast<Index>(v.size()));
  Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

// n=2 toy shared by the small-ball tests
struct Toy {
  SpectralBasisXd basis = SpectralBasisXd::power_law(2, 1.0);
  PriorSpecXd prior{1.0, 2.0};
  NoiseModelXd lap{NoiseKind::Laplacian, 0.5, 2.0};
  NoiseModelXd gau{NoiseKind::Gaussian, 0.5, 2.0};
  CoeffsXd y = make({1.0, -0.5});
};

}  // namespace

TEST_CASE("mse_shape_f values and small-argument stability") {
  CHECK(mse_shape_f(0.0) == 0.0);
  CHECK(mse_shape_f(1.0) == doctest::Approx(1.0 - 2.0 * std::exp(-1.0)).epsilon(1e-14));
  CHECK(mse_shape_f(1e-9) == doctest::Approx(0.5e-18).epsilon(1e-6));
  CHECK(mse_shape_f(50.0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(mse_shape_f(-0.1), std::domain_error);
}

TEST_CASE("prior_ball_prob: full mass, scalar CDF oracle, validation") {
  const auto m1 = GaussianProductMeasureXd(make({1.0}));
  const BallQuery big{make({0.0}), 60.0};
  CHECK(prior_ball_prob(m1, big, 20000, 1).estimate == doctest::Approx(1.0).epsilon(1e-4));

  const BallQuery unit{make({0.0}), 1.0};
  const auto est = prior_ball_prob(m1, unit, 200000, 2);
  const double target = 2.0 * oracles::normal_cdf(1.0) - 1.0;  // 0.682689...
  CHECK(std::abs(est.estimate - target) <= 3.0 * est.std_err);

  CHECK_THROWS_AS(prior_ball_prob(m1, unit, 999, 3), std::domain_error);
  CHECK_THROWS_AS(prior_ball_prob(m1, BallQuery{make({0.0}), -1.0}, 2000, 3),
                  std::domain_error);
}

TEST_CASE("prior_ball_prob: centered ball dominates a shifted ball (common draws)") {
  const auto m = GaussianProductMeasureXd(make({1.0, 0.25}));
  // center with Cameron-Martin norm 2: h = (2, 0)
  const BallQuery at0{make({0.0, 0.0}), 0.5};
  const BallQuery at_h{make({2.0, 0.0}), 0.5};
  const auto p0 = prior_ball_prob(m, at0, 400000, 77);
  const auto ph = prior_ball_prob(m, at_h, 400000, 77);  // same seed: paired draws
  CHECK(cameron_martin_norm(m, at_h.center) == doctest::Approx(2.0));
  CHECK(p0.estimate > ph.estimate + 3.0 * (p0.std_err + ph.std_err));
}

TEST_CASE("prior_ball_prob: zero hits raises the one-sided bound flag") {
  const auto m = GaussianProductMeasureXd(make({0.01}));
  const BallQuery far{make({50.0}), 1e-3};
  const auto est = prior_ball_prob(m, far, 2000, 5);
  CHECK(est.zero_hits);
  CHECK(est.estimate == 0.0);
  CHECK(est.upper_bound > 0.0);
  CHECK(est.upper_bound < 0.01);
}

TEST_CASE("posterior_ball_ratio: identical queries give exactly one") {
  Toy t;
  const BallQuery q{make({0.2, -0.1}), 0.4};
  const auto r = posterior_ball_ratio(t.prior, t.basis, t.lap, t.y, q, q, 20000, 9);
  CHECK(r.ratio == 1.0);
  CHECK(r.hits1 == r.hits2);
}

TEST_CASE("posterior_ball_ratio: swapping the queries inverts the ratio") {
  Toy t;
  const BallQuery q1{make({0.3, 0.0}), 0.4};
  const BallQuery q2{make({0.0, 0.1}), 0.5};
  const auto r12 = posterior_ball_ratio(t.prior, t.basis, t.lap, t.y, q1, q2, 50000, 10);
  const auto r21 = posterior_ball_ratio(t.prior, t.basis, t.lap, t.y, q2, q1, 50000, 10);
  CHECK(r12.hits1 == r21.hits2);
  CHECK(r12.hits2 == r21.hits1);
  CHECK(r12.ratio * r21.ratio == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("weighted_ball_ratio with zero log-weight reduces to the prior ratio") {
  const auto m = GaussianProductMeasureXd(make({1.0, 0.25}));
  const BallQuery q1{make({0.1, 0.0}), 0.5};
  const BallQuery q2{make({0.0, 0.0}), 0.5};
  auto zero = [](const CoeffsXd&) { return 0.0; };
  const auto r = weighted_ball_ratio(m, q1, q2, 100000, 11, zero);
  // with unit weights the ratio is exactly the hit-count ratio
  CHECK(r.ratio == doctest::Approx(double(r.hits1) / double(r.hits2)).epsilon(1e-15));
}

TEST_CASE("prior ball ratios follow the Cameron-Martin small-ball prediction") {
  const auto m = GaussianProductMeasureXd(make({1.0, 0.25}));
  const CoeffsXd h = make({0.3, -0.1});
  auto zero = [](const CoeffsXd&) { return 0.0; };
  const double cm = cameron_martin_norm(m, h);
  const double pred = std::exp(-0.5 * cm * cm);  // ratio mu0(B(h))/mu0(B(0)) limit
  const auto r = weighted_ball_ratio(m, {h, 0.2}, {make({0.0, 0.0}), 0.2}, 2000000, 18, zero);
  const double se_log = r.std_err / r.ratio;
  CHECK(std::abs(std::log(r.ratio) - std::log(pred)) <= 3.0 * se_log + 5e-3);
}

TEST_CASE("posterior_ball_ratio: zero hits in the denominator throw with counts") {
  Toy t;
  const BallQuery q1{make({0.0, 0.0}), 0.5};
  const BallQuery q2{make({100.0, 0.0}), 1e-4};
  try {
    posterior_ball_ratio(t.prior, t.basis, t.lap, t.y, q1, q2, 5000, 12);
    CHECK(false);
  } catch (const DegenerateRatioError& e) {
    CHECK(e.hits2 == 0);
    CHECK(e.hits1 > 0);
  }
}

TEST_CASE("posterior log ball-ratios approach the OM prediction as eps shrinks") {
  Toy t;
  const long long N = 4000000;
  for (const auto& noise : {t.lap, t.gau}) {
    const CoeffsXd h1 = noise.kind == NoiseKind::Laplacian
                            ? map_closed_form(t.prior, t.basis, noise, t.y)
                            : map_gaussian_closed_form(t.prior, t.basis, noise, t.y);
    const CoeffsXd h2 = make({0.0, 0.0});
    const double pred = om_functional(t.prior, t.basis, noise, t.y, h2) -
                        om_functional(t.prior, t.basis, noise, t.y, h1);
    double prev_dev = 0.0, prev_se = 0.0;
    bool first = true;
    for (double eps : {0.5, 0.25, 0.125}) {
      const auto r = posterior_ball_ratio(t.prior, t.basis, noise, t.y, {h1, eps}, {h2, eps},
                                          N, 314);
      const double dev = std::log(r.ratio) - pred;
      const double se_log = r.std_err / r.ratio;
      if (!first)
        CHECK(std::abs(dev) <= std::abs(prev_dev) + 3.0 * (se_log + prev_se));
      if (eps == 0.125) CHECK(std::abs(dev) <= 3.0 * se_log);
      prev_dev = dev;
      prev_se = se_log;
      first = false;
    }
  }
}

TEST_CASE("amf_search: huge radius accepts any center") {
  Toy t;
  const auto res = amf_search(t.prior, t.basis, t.lap, t.y, 15.0, 20000, 13);
  CHECK(res.achieved_ratio >= 1.0 - 15.0);
  CHECK(res.best_mass() > 0.0);
  // every candidate ball swallows essentially all mass
  CHECK(res.map_to_best_ratio() > 0.999);
}

TEST_CASE("amf_search: prior-only search concentrates at the origin") {
  Toy t;
  std::function<double(const CoeffsXd&)> zero = [](const CoeffsXd&) { return 0.0; };
  const CoeffsXd y0 = make({0.0, 0.0});
  const double eps = 0.5;
  const auto res = amf_search(t.prior, t.basis, t.lap, y0, eps, 1000000, 14, 1, {}, &zero);
  const double norm_best = std::sqrt((res.best_center() * res.best_center()).sum());
  CHECK(norm_best <= 2.0 * eps / 4.0);
  // the origin candidate itself is within MC error of the best
  CHECK(res.map_mass() >=
        res.best_mass() - 3.0 * (res.std_errs[res.best_index] + res.std_errs[res.map_index]));
}

TEST_CASE("amf_search: statistical distance to the MAP is non-increasing in eps") {
  Toy t;
  std::vector<double> dists;
  for (double eps : {0.5, 0.25, 0.125}) {
    const auto res = amf_search(t.prior, t.basis, t.lap, t.y, eps, 1000000, 15);
    const CoeffsXd& map_c = res.centers[res.map_index];
    double d = 1e300;
    for (std::size_t c = 0; c < res.centers.size(); ++c) {
      const double se_diff = std::hypot(res.std_errs[c], res.std_errs[res.best_index]);
      if (res.masses[c] >= res.best_mass() - 3.0 * se_diff) {
        const CoeffsXd diff = res.centers[c] - map_c;
        d = std::min(d, std::sqrt((diff * diff).sum()));
      }
    }
    dists.push_back(d);
    // the MAP ball mass stays within slack of the candidate maximum
    CHECK(res.map_to_best_ratio() >= 0.95);
  }
  CHECK(dists[1] <= dists[0] + 1e-12);
  CHECK(dists[2] <= dists[1] + 1e-12);
}

TEST_CASE("amf_search guards") {
  Toy t;
  CoeffsXd y6 = CoeffsXd::Zero(6);
  CHECK_THROWS_AS(amf_search(t.prior, t.basis, t.lap, y6, 0.5, 2000, 16), std::domain_error);
  CHECK_THROWS_AS(amf_search(t.prior, t.basis, t.lap, t.y, 1e-6, 1000, 17), AmfZeroHitsError);
}

TEST_CASE("mse_component_analytic matches its explicit special case and abstains on clipping") {
  const auto basis = SpectralBasisXd::power_law(2, 1.0);
  const PriorSpecXd prior{1.0, 2.0};
  const NoiseModelXd noise{NoiseKind::Laplacian, 0.5, 2.0};
  // u+ = 0: value = 2 (b/c)^2 f(r^2 c^2 alpha^{-tau} / b^2)
  for (Index k : {1, 2, 3, 5}) {
    const double a = basis.eigenvalue(k);
    const double c = std::sqrt(2.0) * std::pow(a, noise.beta / 2) * std::exp(-a);
    const double expected = 2.0 * (noise.b / c) * (noise.b / c) *
                            mse_shape_f(prior.r * prior.r * c * c * std::pow(a, -prior.tau) /
                                        (noise.b * noise.b));
    const auto got = mse_component_analytic(basis, prior, noise, 0.0, k);
    REQUIRE(got.has_value());
    CHECK(*got == doctest::Approx(expected).epsilon(1e-12));
  }
  // clipping active at the truth: |u+_k| above the clip radius
  const double S1 = prior.r * prior.r / noise.b * std::sqrt(2.0) * std::exp(-1.0);
  CHECK(!mse_component_analytic(basis, prior, noise, 2.0 * S1, 1).has_value());
  CHECK(mse_component_analytic(basis, prior, noise, 0.5 * S1, 1).has_value());
}

TEST_CASE("mse_monte_carlo agrees with the analytic per-component values") {
  const auto basis = SpectralBasisXd::power_law(2, 1.0);
  const PriorSpecXd prior{1.0, 2.0};
  const NoiseModelXd noise{NoiseKind::Laplacian, 0.5, 2.0};
  const Index n = 4;
  const CoeffsXd w = make({0.8, -0.6, 0.9, 0.2});
  const CoeffsXd ud = build_source(basis, noise.beta, prior.tau, w, 1.0);
  const auto est = mse_monte_carlo(basis, prior, noise, ud, 100000, 21);
  for (Index k = 0; k < n; ++k) {
    const auto analytic = mse_component_analytic(basis, prior, noise, ud[k], k + 1);
    REQUIRE(analytic.has_value());
    CHECK(std::abs(est.per_component[k] - *analytic) <=
          3.0 * est.per_component_std_err[k]);
  }
}

TEST_CASE("mse_monte_carlo bookkeeping identity and thread reproducibility") {
  const auto basis = SpectralBasisXd::power_law(2, 1.0);
  const PriorSpecXd prior{0.7, 2.0};
  const NoiseModelXd noise{NoiseKind::Laplacian, 0.3, 2.0};
  const CoeffsXd ud = build_source(basis, noise.beta, prior.tau, make({1.0, 1.0, 1.0, 1.0, 1.0, 1.0}), 1.0);
  const auto e1 = mse_monte_carlo(basis, prior, noise, ud, 30000, 22, 1);
  double manual = 0.0;
  for (Index k = 0; k < ud.size(); ++k) manual += e1.per_component[k];
  CHECK(e1.mse == manual);  // exact bookkeeping
  const auto e3 = mse_monte_carlo(basis, prior, noise, ud, 30000, 22, 3);
  CHECK(e1.mse == e3.mse);  // bit-identical under threading
  for (Index k = 0; k < ud.size(); ++k) CHECK(e1.per_component[k] == e3.per_component[k]);
  CHECK(e1.std_err == e3.std_err);
}

TEST_CASE("mse_monte_carlo: pure clipping regime stays below the prior bound") {
  const auto basis = SpectralBasisXd::power_law(2, 1.0);
  const PriorSpecXd prior{1.0, 2.0};
  const NoiseModelXd noise{NoiseKind::Laplacian, 1000.0, 2.0};  // huge noise level
  const CoeffsXd ud = CoeffsXd::Zero(8);
  const auto est = mse_monte_carlo(basis, prior, noise, ud, 5000, 23);
  const double bound = 2.0 * prior.r * prior.r * double(trace_power(basis, prior.tau, 8).upper());
  CHECK(est.mse <= bound);
}

TEST_CASE("build_source examples and constraint") {
  const auto basis = SpectralBasisXd::power_law(2, 1.0);
  CHECK((build_source(basis, 2.0, 2.0, CoeffsXd(CoeffsXd::Zero(5)), 1.0) == 0.0).all());
  const CoeffsXd u = build_source(basis, 2.0, 2.0, make({1.0, 0.0, 0.0}), 1.0);
  CHECK(u[0] == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
  CHECK(u[1] == 0.0);
  CHECK_THROWS_AS(build_source(basis, 2.0, 2.0, make({1.5}), 1.0), std::domain_error);

  // no-clipping inequality at the lower admissible prior scale r^2 = rho b / sqrt(2)
  Philox4x32 rng(24);
  const double rho = 1.0, b = 0.25;
  const double r2 = rho * b / std::sqrt(2.0);
  CoeffsXd w(12);
  for (Index i = 0; i < 12; ++i) w[i] = 2.0 * rng.uniform() - 1.0;
  const CoeffsXd ud = build_source(basis, 2.0, 2.0, w, rho);
  for (Index k = 0; k < 12; ++k) {
    const double a = basis.eigenvalue(k + 1);
    const double radius = r2 / b * std::sqrt(2.0) * std::pow(a, -1.0) * std::exp(-a);
    CHECK(std::abs(ud[k]) <= radius * (1.0 + 1e-12));
  }
}

TEST_CASE("rate_experiment: bounds hold, slope reported, validation enforced") {
  const auto basis = SpectralBasisXd::power_law(2, 1.0);
  const Index n = 16;
  const SourceCondition src{CoeffsXd(CoeffsXd::Ones(n)), 1.0};
  const auto res = rate_experiment(basis, 2.0, 2.0, src, {0.1, 0.03, 0.01}, 1.0, n, 2000, 30);
  CHECK(res.all_bounds_pass);
  for (const auto& pt : res.points) {
    CHECK(pt.pass);
    CHECK(pt.mse <= pt.bound + 3.0 * pt.std_err);
    CHECK(pt.r2 == doctest::Approx(pt.b));
  }
  REQUIRE(res.slope.has_value());
  CHECK(*res.slope >= 0.9);
  // mse decreases monotonically along the decreasing b grid
  for (std::size_t i = 1; i < res.points.size(); ++i)
    CHECK(res.points[i].mse <=
          res.points[i - 1].mse + 3.0 * (res.points[i].std_err + res.points[i - 1].std_err));

  const auto single = rate_experiment(basis, 2.0, 2.0, src, {0.05}, 1.0, n, 2000, 31);
  CHECK(!single.slope.has_value());
  CHECK(single.points.size() == 1);
  CHECK(single.points[0].pass);

  // w = 0 keeps the bound trivially
  const SourceCondition zero{CoeffsXd(CoeffsXd::Zero(n)), 1.0};
  const auto rz = rate_experiment(basis, 2.0, 2.0, zero, {0.1, 0.01}, 1.0, n, 2000, 32);
  CHECK(rz.all_bounds_pass);

  CHECK_THROWS_AS(rate_experiment(basis, 2.0, 2.0, src, {0.1, 0.2}, 1.0, n, 100, 33),
                  std::domain_error);
  CHECK_THROWS_AS(rate_experiment(basis, 2.0, 2.0, src, {0.1, 0.01}, 0.5, n, 100, 34),
                  std::domain_error);  // C < rho/sqrt(2)
}

TEST_CASE("experiment config validation") {
  ExperimentConfig cfg{SpectralBasisXd::power_law(2, 1.0),
                       PriorSpecXd{1.0, 2.0},
                       NoiseModelXd{NoiseKind::Laplacian, 0.5, 2.0},
                       64,
                       123,
                       1000,
                       1,
                       {0.1, 0.03, 0.01},
                       1.0};
  CHECK_NOTHROW(cfg.validate());
  cfg.b_grid = {0.1, 0.1};
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
  cfg.b_grid = {0.1, 0.03};
  cfg.prior.tau = 0.9;
  CHECK_THROWS_AS(cfg.validate(), std::domain_error);
}
