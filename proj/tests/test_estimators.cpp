#include <cmath>

#include "doctest.h"
#include "hpl/estimators.hpp"
#include "test_support.hpp"

using namespace hpl;
using test_support::make_panel;

namespace {

// Shared frozen example: N = 3, T = 2.
PanelData frozen_panel() {
  return make_panel({{0.0, 1.0}, {1.0, 3.0}, {2.0, 5.0}},
                    {{1.0, 2.0}, {2.5, 6.1}, {3.0, 8.2}});
}

// Least-squares-with-dummy-variables slope: regress y on (unit dummies, x).
// Independent check that the demeaned fit equals the dummy-variable fit.
double lsdv_slope(const PanelData& d) {
  int N = d.n_units, T = d.n_periods, p = N + 1;
  std::vector<std::vector<double>> xtx(p, std::vector<double>(p, 0.0));
  std::vector<double> xty(p, 0.0);
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      std::vector<double> row(p, 0.0);
      row[i] = 1.0;
      row[N] = d.x_at(i, t);
      for (int a = 0; a < p; ++a) {
        for (int b = 0; b < p; ++b) xtx[a][b] += row[a] * row[b];
        xty[a] += row[a] * d.y_at(i, t);
      }
    }
  }
  return test_support::solve_linear(xtx, xty)[N];
}

}  // namespace

TEST_CASE("q_of") {
  CHECK(q_of(1.0, 2) == doctest::Approx(1.5));
  CHECK(q_of(0.0, 4) == doctest::Approx(0.25));
}

TEST_CASE("frozen example: within, between, variance components, GLS") {
  auto d = frozen_panel();
  auto s = summarize(d);
  CHECK(s.ssb == doctest::Approx(4.5));
  CHECK(s.ssw == doctest::Approx(7.0));

  auto f = fit_all(d, s);
  CHECK(f.within.b_within == doctest::Approx(1.7).epsilon(1e-12));
  CHECK(f.within.sigma_eps2_hat == doctest::Approx(0.09).epsilon(1e-10));
  CHECK(f.between.b_between == doctest::Approx(1.3666666666666667).epsilon(1e-12));
  CHECK(f.between.a_between == doctest::Approx(1.0666666666666667).epsilon(1e-12));
  CHECK(f.vc.sigma_eps2 == doctest::Approx(0.09).epsilon(1e-10));
  CHECK(f.vc.sigma_eta2 == doctest::Approx(0.08).epsilon(1e-10));
  CHECK(f.vc.nu_hat == doctest::Approx(8.0 / 9.0).epsilon(1e-10));
  CHECK(f.gls.w_hat == doctest::Approx(0.68359375).epsilon(1e-10));
  CHECK(f.gls.b_hat == doctest::Approx(1.59453125).epsilon(1e-10));
  CHECK(f.gls.var_bw_given_x == doctest::Approx(0.09 / 7.0).epsilon(1e-10));
  CHECK(f.gls.var_bb_given_x == doctest::Approx(0.027777777777777776).epsilon(1e-9));
  CHECK(f.gls.var_bhat_given_x == doctest::Approx(0.0087890625).epsilon(1e-9));
  CHECK(f.gls.gamma_hat == doctest::Approx(-1.9245008972987525).epsilon(1e-10));
}

TEST_CASE("within fit equals the dummy-variable regression slope") {
  std::mt19937 rng(42);
  for (int rep = 0; rep < 10; ++rep) {
    auto d = test_support::random_covariate(6, 4, rng);
    test_support::add_response(d, 1.0, 0.8, -0.5, 1.0, 1.5, rng);
    auto s = summarize(d);
    auto w = fit_within(d, s);
    CHECK(w.b_within == doctest::Approx(lsdv_slope(d)).epsilon(1e-9));
    // Within residuals sum to zero unit by unit.
    for (int i = 0; i < d.n_units; ++i) {
      double sum = 0.0;
      for (int t = 0; t < d.n_periods; ++t) sum += w.residuals[i * d.n_periods + t];
      CHECK(std::fabs(sum) < 1e-9);
    }
  }
}

TEST_CASE("between fit solves the unit-mean normal equations") {
  std::mt19937 rng(43);
  auto d = test_support::random_covariate(9, 3, rng);
  test_support::add_response(d, -2.0, 1.2, 0.7, 0.8, 1.0, rng);
  auto s = summarize(d);
  auto b = fit_between(d, s);

  int N = d.n_units, T = d.n_periods;
  double sx = 0.0, sxx = 0.0, sy = 0.0, sxy = 0.0;
  for (int i = 0; i < N; ++i) {
    double ym = 0.0;
    for (int t = 0; t < T; ++t) ym += d.y_at(i, t);
    ym /= T;
    sx += s.unit_means[i];
    sxx += s.unit_means[i] * s.unit_means[i];
    sy += ym;
    sxy += s.unit_means[i] * ym;
  }
  auto beta = test_support::solve_linear({{double(N), sx}, {sx, sxx}}, {sy, sxy});
  CHECK(b.a_between == doctest::Approx(beta[0]).epsilon(1e-9));
  CHECK(b.b_between == doctest::Approx(beta[1]).epsilon(1e-9));
}

TEST_CASE("noise-free response is recovered exactly") {
  // With eps = 0 and eta = 0: b_within = b and b_between = b + xi.
  auto d = make_panel({{0.0, 1.0, 2.0}, {1.0, 3.0, 2.0}, {4.0, 5.0, 6.0}});
  const double a = 0.5, b = 2.0, xi = -0.75;
  auto s0 = summarize(d);
  d.y.clear();
  for (int i = 0; i < d.n_units; ++i)
    for (int t = 0; t < d.n_periods; ++t)
      d.y.push_back(a + b * d.x_at(i, t) + xi * s0.unit_means[i]);
  auto w = fit_within(d, s0);
  auto bt = fit_between(d, s0);
  CHECK(w.b_within == doctest::Approx(b).epsilon(1e-12));
  CHECK(w.sigma_eps2_hat == doctest::Approx(0.0).epsilon(1e-18));
  CHECK(bt.b_between == doctest::Approx(b + xi).epsilon(1e-12));
  // A perfect within fit leaves the variance ratio undefined.
  CHECK_THROWS_AS(estimate_variance_components(w, bt, d.n_periods), EstimationError);
}

TEST_CASE("variance components concentrate near the truth on a large panel") {
  std::mt19937 rng(1234);
  auto d = test_support::random_covariate(400, 4, rng);
  const double sigma_eps = 1.5, sigma_eta = 2.0;
  test_support::add_response(d, 1.0, 0.5, 0.3, sigma_eps, sigma_eta, rng);
  auto s = summarize(d);
  auto f = fit_all(d, s);
  CHECK(f.vc.sigma_eps2 == doctest::Approx(sigma_eps * sigma_eps).epsilon(0.15));
  CHECK(f.vc.sigma_eta2 == doctest::Approx(sigma_eta * sigma_eta).epsilon(0.25));
  CHECK(f.vc.nu_hat == doctest::Approx(sigma_eta * sigma_eta / (sigma_eps * sigma_eps))
                           .epsilon(0.3));
}

TEST_CASE("GLS combination properties") {
  std::mt19937 rng(99);
  for (int rep = 0; rep < 10; ++rep) {
    auto d = test_support::random_covariate(10, 3, rng);
    test_support::add_response(d, 0.0, 1.0, 0.4, 1.0, 1.2, rng);
    auto s = summarize(d);
    auto f = fit_all(d, s);
    double q = q_of(f.vc.nu_hat, s.n_periods);
    CHECK(f.gls.w_hat == doctest::Approx(q / (q + s.ratio_r)).epsilon(1e-12));
    CHECK(f.gls.b_hat ==
          doctest::Approx(f.gls.w_hat * f.within.b_within +
                          (1.0 - f.gls.w_hat) * f.between.b_between)
              .epsilon(1e-12));
    // Var(b_hat | x) / Var(b_within | x) = w_hat.
    CHECK(f.gls.var_bhat_given_x / f.gls.var_bw_given_x ==
          doctest::Approx(f.gls.w_hat).epsilon(1e-12));
    if (f.gls.w_hat > 0.0 && f.gls.w_hat < 1.0) {
      double lo = std::min(f.within.b_within, f.between.b_between);
      double hi = std::max(f.within.b_within, f.between.b_between);
      CHECK(f.gls.b_hat >= lo);
      CHECK(f.gls.b_hat <= hi);
    }
  }
}

TEST_CASE("nu_hat is kept untruncated but a nonnegative view exists") {
  VarianceComponents vc;
  vc.nu_hat = -0.1;
  CHECK(vc.nu_hat_nonneg() == 0.0);
  vc.nu_hat = 0.3;
  CHECK(vc.nu_hat_nonneg() == doctest::Approx(0.3));
}

TEST_CASE("combine_gls rejects q <= 0") {
  auto d = frozen_panel();
  auto s = summarize(d);
  auto w = fit_within(d, s);
  auto b = fit_between(d, s);
  VarianceComponents vc;
  vc.sigma_eps2 = 1.0;
  vc.nu_hat = -0.5 - 1e-9;  // q(nu_hat, 2) < 0
  CHECK_THROWS_AS(combine_gls(w, b, vc, s), EstimationError);
}

TEST_CASE("fits require a response column") {
  auto d = make_panel({{0.0, 1.0}, {1.0, 3.0}});
  auto s = summarize(d);
  CHECK_THROWS_AS(fit_within(d, s), EstimationError);
  CHECK_THROWS_AS(fit_between(d, s), EstimationError);
}
