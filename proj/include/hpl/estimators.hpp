#pragma once

#include <stdexcept>
#include <vector>

#include "hpl/panel.hpp"

namespace hpl {

struct EstimationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double q_of(double nu, int T) { return nu + 1.0 / T; }

// OLS fit of the demeaned ("within") model y_it - ybar_i on x_it - xbar_i.
struct WithinFit {
  double b_within = 0.0;
  std::vector<double> residuals;  // N x T, row-major
  double sigma_eps2_hat = 0.0;
};

// OLS fit of the unit-mean ("between") model ybar_i on (1, xbar_i).
struct BetweenFit {
  double a_between = 0.0;
  double b_between = 0.0;
  std::vector<double> residuals;  // length N
};

// sigma_eta2 is deliberately not truncated at zero; the pivot used for the
// nu confidence interval relies on the untruncated statistic.
struct VarianceComponents {
  double sigma_eps2 = 0.0;
  double sigma_eta2 = 0.0;
  double nu_hat = 0.0;
  double nu_hat_nonneg() const { return nu_hat > 0.0 ? nu_hat : 0.0; }
};

struct GlsFit {
  double b_hat = 0.0;
  double w_hat = 0.0;
  double gamma_hat = 0.0;
  double var_bw_given_x = 0.0;
  double var_bb_given_x = 0.0;
  double var_bhat_given_x = 0.0;
};

WithinFit fit_within(const PanelData& data, const CovariateSummary& summary);
BetweenFit fit_between(const PanelData& data, const CovariateSummary& summary);
VarianceComponents estimate_variance_components(const WithinFit& within, const BetweenFit& between,
                                                int n_periods);
GlsFit combine_gls(const WithinFit& within, const BetweenFit& between,
                   const VarianceComponents& vc, const CovariateSummary& summary);

struct FitBundle {
  WithinFit within;
  BetweenFit between;
  VarianceComponents vc;
  GlsFit gls;
};

FitBundle fit_all(const PanelData& data, const CovariateSummary& summary);

}  // namespace hpl
