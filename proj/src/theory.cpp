#include "hpl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hpl/estimators.hpp"
#include "hpl/normal.hpp"

namespace hpl {

TheoryMoments theory_moments(const CovariateSummary& summary, double gamma, double nu) {
  if (!(nu > 0.0)) throw std::invalid_argument("theory_moments: nu must be > 0");
  TheoryMoments m;
  const double r = summary.ratio_r;
  m.q = q_of(nu, summary.n_periods);
  m.w = m.q / (m.q + r);
  m.ssb_over_n = summary.ssb / summary.n_units;
  double scale = gamma * std::sqrt(m.ssb_over_n);
  m.mean_gI = scale * std::sqrt(r / (m.q * (m.q + r)));
  m.mean_gJ = 0.0;
  m.mean_h = -scale * std::sqrt(1.0 / (r + m.q));
  m.corr_gJ_h = std::sqrt(r / (r + m.q));
  m.corr_gI_h = 0.0;
  return m;
}

namespace {

constexpr double kTail = 8.5;       // integration truncation, in sd units
constexpr double kAbsTol = 1e-11;

// 15-point Gauss-Legendre nodes/weights on [-1, 1].
constexpr double kGlNode[15] = {
    0.0,
    -0.2011940939974345, 0.2011940939974345,
    -0.3941513470775634, 0.3941513470775634,
    -0.5709721726085388, 0.5709721726085388,
    -0.7244177313601700, 0.7244177313601700,
    -0.8482065834104272, 0.8482065834104272,
    -0.9372733924007060, 0.9372733924007060,
    -0.9879925180204854, 0.9879925180204854};
constexpr double kGlWeight[15] = {
    0.2025782419255613,
    0.1984314853271116, 0.1984314853271116,
    0.1861610000155622, 0.1861610000155622,
    0.1662692058169939, 0.1662692058169939,
    0.1395706779261543, 0.1395706779261543,
    0.1071592204671719, 0.1071592204671719,
    0.0703660474881081, 0.0703660474881081,
    0.0307532419961173, 0.0307532419961173};

template <typename F>
double gl15(const F& f, double a, double b) {
  double c = 0.5 * (a + b);
  double h = 0.5 * (b - a);
  double s = 0.0;
  for (int i = 0; i < 15; ++i) s += kGlWeight[i] * f(c + h * kGlNode[i]);
  return s * h;
}

template <typename F>
double adapt(const F& f, double a, double b, double whole, double tol, int depth) {
  double m = 0.5 * (a + b);
  double left = gl15(f, a, m);
  double right = gl15(f, m, b);
  if (depth > 40 || std::fabs(left + right - whole) <= tol) return left + right;
  return adapt(f, a, m, left, 0.5 * tol, depth + 1) + adapt(f, m, b, right, 0.5 * tol, depth + 1);
}

double degenerate_rect(double mu1, double mu2, double rho, double a1, double b1, double a2,
                       double b2) {
  // Y - mu2 = sign(rho) * (X - mu1)
  double lo = a1, hi = b1;
  if (rho > 0.0) {
    lo = std::max(lo, mu1 + (a2 - mu2));
    hi = std::min(hi, mu1 + (b2 - mu2));
  } else {
    lo = std::max(lo, mu1 - (b2 - mu2));
    hi = std::min(hi, mu1 - (a2 - mu2));
  }
  if (lo >= hi) return 0.0;
  return norm_cdf(hi - mu1) - norm_cdf(lo - mu1);
}

}  // namespace

double bvn_rect(double mu1, double mu2, double rho, double a1, double b1, double a2, double b2) {
  if (std::fabs(rho) > 1.0) throw std::invalid_argument("bvn_rect: |rho| must be <= 1");
  if (a1 > b1 || a2 > b2) throw std::invalid_argument("bvn_rect: invalid rectangle");
  if (std::fabs(rho) >= 1.0 - 1e-12) return degenerate_rect(mu1, mu2, rho, a1, b1, a2, b2);

  double lo = std::max(a1, mu1 - kTail);
  double hi = std::min(b1, mu1 + kTail);
  if (lo >= hi) return 0.0;
  double s = std::sqrt(1.0 - rho * rho);
  auto f = [&](double u) {
    double cond_mean = mu2 + rho * (u - mu1);
    return norm_pdf(u - mu1) * (norm_cdf((b2 - cond_mean) / s) - norm_cdf((a2 - cond_mean) / s));
  };
  double whole = gl15(f, lo, hi);
  double p = adapt(f, lo, hi, whole, kAbsTol, 0);
  return std::clamp(p, 0.0, 1.0);
}

double cpk_exact(const CovariateSummary& summary, double gamma, double nu, double alpha,
                 double alpha_h) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(alpha_h > 0.0 && alpha_h < 1.0))
    throw std::invalid_argument("cpk_exact: alpha and alpha_h must be in (0, 1)");
  TheoryMoments m = theory_moments(summary, gamma, nu);
  double z = norm_quantile(1.0 - alpha / 2.0);
  double zh = norm_quantile(1.0 - alpha_h / 2.0);
  // (g_I, h) are uncorrelated, so that joint probability factorizes.
  double p_gI = norm_cdf(z - m.mean_gI) - norm_cdf(-z - m.mean_gI);
  double p_h = norm_cdf(zh - m.mean_h) - norm_cdf(-zh - m.mean_h);
  double term_I = p_gI * p_h;
  double term_J = bvn_rect(m.mean_gJ, m.mean_h, m.corr_gJ_h, -z, z, -zh, zh);
  return (1.0 - alpha) + term_I - term_J;
}

SelKnownTerms sel_known_terms(const CovariateSummary& summary, double gamma, double nu,
                              double alpha_h) {
  if (!(alpha_h > 0.0 && alpha_h < 1.0))
    throw std::invalid_argument("sel_known_terms: alpha_h must be in (0, 1)");
  TheoryMoments m = theory_moments(summary, gamma, nu);
  double zh = norm_quantile(1.0 - alpha_h / 2.0);
  SelKnownTerms t;
  t.prob_b = norm_cdf(zh - m.mean_h) - norm_cdf(-zh - m.mean_h);
  t.numk = 1.0 + (std::sqrt(m.w) - 1.0) * t.prob_b;
  return t;
}

}  // namespace hpl
