#include "hpl/estimators.hpp"

#include <cmath>

#include "hpl/rng.hpp"

namespace hpl {

WithinFit fit_within(const PanelData& data, const CovariateSummary& summary) {
  if (!data.has_y()) throw EstimationError("fit_within: panel has no response column");
  const int N = data.n_units;
  const int T = data.n_periods;
  std::vector<double> y_means(N);
  for (int i = 0; i < N; ++i) {
    KahanSum m;
    for (int t = 0; t < T; ++t) m.add(data.y_at(i, t));
    y_means[i] = m.value() / T;
  }
  KahanSum sxy;
  for (int i = 0; i < N; ++i)
    for (int t = 0; t < T; ++t)
      sxy.add((data.x_at(i, t) - summary.unit_means[i]) * (data.y_at(i, t) - y_means[i]));

  WithinFit fit;
  fit.b_within = sxy.value() / summary.ssw;
  fit.residuals.resize(static_cast<std::size_t>(N) * T);
  KahanSum ss;
  for (int i = 0; i < N; ++i) {
    for (int t = 0; t < T; ++t) {
      double r = (data.y_at(i, t) - y_means[i]) -
                 fit.b_within * (data.x_at(i, t) - summary.unit_means[i]);
      fit.residuals[static_cast<std::size_t>(i) * T + t] = r;
      ss.add(r * r);
    }
  }
  fit.sigma_eps2_hat = ss.value() / (static_cast<double>(N) * (T - 1));
  return fit;
}

BetweenFit fit_between(const PanelData& data, const CovariateSummary& summary) {
  if (!data.has_y()) throw EstimationError("fit_between: panel has no response column");
  const int N = data.n_units;
  const int T = data.n_periods;
  std::vector<double> y_means(N);
  KahanSum gy;
  for (int i = 0; i < N; ++i) {
    KahanSum m;
    for (int t = 0; t < T; ++t) m.add(data.y_at(i, t));
    y_means[i] = m.value() / T;
    gy.add(y_means[i]);
  }
  double y_grand = gy.value() / N;
  KahanSum sxy;
  for (int i = 0; i < N; ++i)
    sxy.add((summary.unit_means[i] - summary.grand_mean) * (y_means[i] - y_grand));

  BetweenFit fit;
  fit.b_between = sxy.value() / summary.ssb;
  fit.a_between = y_grand - fit.b_between * summary.grand_mean;
  fit.residuals.resize(N);
  for (int i = 0; i < N; ++i)
    fit.residuals[i] = y_means[i] - fit.a_between - fit.b_between * summary.unit_means[i];
  return fit;
}

VarianceComponents estimate_variance_components(const WithinFit& within, const BetweenFit& between,
                                                int n_periods) {
  VarianceComponents vc;
  vc.sigma_eps2 = within.sigma_eps2_hat;
  KahanSum ss;
  for (double r : between.residuals) ss.add(r * r);
  double n = static_cast<double>(between.residuals.size());
  vc.sigma_eta2 = ss.value() / n - vc.sigma_eps2 / n_periods;
  if (vc.sigma_eps2 <= 0.0)
    throw EstimationError("nu_hat undefined: sigma_eps2_hat = 0 (perfect within fit)");
  vc.nu_hat = vc.sigma_eta2 / vc.sigma_eps2;
  return vc;
}

GlsFit combine_gls(const WithinFit& within, const BetweenFit& between,
                   const VarianceComponents& vc, const CovariateSummary& summary) {
  const int T = summary.n_periods;
  const double q = q_of(vc.nu_hat, T);
  if (q <= 0.0)
    throw EstimationError("negative-variance regime: q(nu_hat, T) <= 0 with nu_hat = " +
                          std::to_string(vc.nu_hat));
  const double r = summary.ratio_r;
  GlsFit fit;
  fit.w_hat = q / (q + r);
  fit.b_hat = fit.w_hat * within.b_within + (1.0 - fit.w_hat) * between.b_between;
  fit.var_bw_given_x = vc.sigma_eps2 / summary.ssw;
  fit.var_bb_given_x = vc.sigma_eps2 * q / summary.ssb;
  fit.var_bhat_given_x = vc.sigma_eps2 / summary.ssw * q / (q + r);
  fit.gamma_hat = (between.b_between - within.b_within) * std::sqrt(double(summary.n_units)) /
                  std::sqrt(vc.sigma_eps2);
  return fit;
}

FitBundle fit_all(const PanelData& data, const CovariateSummary& summary) {
  FitBundle b;
  b.within = fit_within(data, summary);
  b.between = fit_between(data, summary);
  b.vc = estimate_variance_components(b.within, b.between, summary.n_periods);
  b.gls = combine_gls(b.within, b.between, b.vc, summary);
  return b;
}

}  // namespace hpl
