#pragma once

#include "hpl/panel.hpp"

namespace hpl {

// Joint-normal moments of (g_I, h) and (g_J, h) conditional on x, for the
// procedure with known sigma_eps and nu. All variances are 1.
struct TheoryMoments {
  double mean_gI = 0.0;
  double mean_gJ = 0.0;
  double mean_h = 0.0;
  double corr_gJ_h = 0.0;
  double corr_gI_h = 0.0;
  double w = 0.0;
  double q = 0.0;
  double ssb_over_n = 0.0;
};

TheoryMoments theory_moments(const CovariateSummary& summary, double gamma, double nu);

// P(a1 <= X <= b1, a2 <= Y <= b2) for jointly normal (X, Y) with unit
// variances, means (mu1, mu2) and correlation rho. Absolute error <= 1e-10.
double bvn_rect(double mu1, double mu2, double rho, double a1, double b1, double a2, double b2);

// Exact conditional coverage probability of the two-stage interval when
// sigma_eps and nu are known.
double cpk_exact(const CovariateSummary& summary, double gamma, double nu, double alpha,
                 double alpha_h);

struct SelKnownTerms {
  double prob_b = 0.0;  // P(|h| <= z_{1-alpha_h/2} | x)
  double numk = 0.0;    // 1 + (w^{1/2} - 1) P(B | x)
};

SelKnownTerms sel_known_terms(const CovariateSummary& summary, double gamma, double nu,
                              double alpha_h);

}  // namespace hpl
