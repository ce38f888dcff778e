#include "hpl/analysis.hpp"

#include <algorithm>
#include <cmath>

#include "hpl/estimators.hpp"

namespace hpl {

namespace {

// gamma producing a given |E(h|x)| at (summary, nu).
double gamma_for_mean_h(const CovariateSummary& summary, double nu, double abs_mean_h) {
  double q = q_of(nu, summary.n_periods);
  return abs_mean_h * std::sqrt(static_cast<double>(summary.n_units) * (summary.ratio_r + q) /
                                summary.ssb);
}

}  // namespace

std::vector<double> gamma_grid_half(const CovariateSummary& summary, double nu, int n,
                                    double max_abs_mean_h) {
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i)
    grid[i] = gamma_for_mean_h(summary, nu, max_abs_mean_h * i / (n - 1));
  return grid;
}

std::vector<double> gamma_grid_full(const CovariateSummary& summary, double nu, int n,
                                    double max_abs_mean_h) {
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i) {
    double e = -max_abs_mean_h + 2.0 * max_abs_mean_h * i / (n - 1);
    grid[i] = (e < 0 ? -1.0 : 1.0) * gamma_for_mean_h(summary, nu, std::fabs(e));
  }
  return grid;
}

std::vector<double> nu_grid_around(double nu, int n) {
  double lo = std::max(1e-3, nu / 4.0), hi = 4.0 * nu;
  std::vector<double> grid(n);
  for (int i = 0; i < n; ++i)
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1));
  return grid;
}

MinCpResult min_cp_over_gamma(const CovariateSummary& summary, double nu, const SimConfig& cfg,
                              std::span<const double> gamma_grid) {
  if (gamma_grid.empty()) throw SimError("min_cp_over_gamma: empty gamma grid");
  auto curve = cp_curve(summary, gamma_grid, nu, cfg, Method::control_variate);
  MinCpResult res;
  res.estimate = curve[0];
  res.argmin_gamma = gamma_grid[0];
  for (std::size_t g = 1; g < curve.size(); ++g) {
    if (curve[g].value < res.estimate.value) {  // ties keep the first grid point
      res.estimate = curve[g];
      res.argmin_gamma = gamma_grid[g];
    }
  }
  return res;
}

ConfCoefResult confidence_coefficient(const CovariateSummary& summary, const SimConfig& cfg,
                                      double nu_floor) {
  if (!(nu_floor > 0.0)) throw SimError("confidence_coefficient: nu_floor must be > 0");
  std::vector<double> nus;
  for (double nu = 8.0; nu > 1e-3; nu /= 2.0) nus.push_back(nu);
  nus.push_back(1e-3);
  if (nu_floor < 1e-3) nus.push_back(nu_floor);

  ConfCoefResult res;
  MCEstimate prev{}, floor_est{};
  bool first = true;
  for (double nu : nus) {
    auto grid = gamma_grid_half(summary, nu);
    auto m = min_cp_over_gamma(summary, nu, cfg, grid);
    if (first || m.estimate.value < res.value) {
      res.value = m.estimate.value;
      res.std_error = m.estimate.std_error;
      res.at_nu = nu;
    }
    prev = floor_est;
    floor_est = m.estimate;
    first = false;
  }
  // The limit is approximated at the floor; flag when the last two
  // evaluations have not stabilized.
  if (nus.size() >= 2) {
    double gap = prev.value - floor_est.value;
    double se = 3.0 * std::hypot(prev.std_error, floor_est.std_error);
    res.still_decreasing = gap > se;
  }
  return res;
}

namespace {

struct NuIntervalEval {
  Interval nu_interval;
  double f_lo = 0.0, f_hi = 0.0;
  std::vector<double> nus;  // nu values at which min_g CP is evaluated
};

NuIntervalEval nu_interval_for(const CovariateSummary& summary, double nu_hat,
                               const SimConfig& cfg, long m_pivot, bool dense) {
  SimConfig pcfg = cfg;
  pcfg.m_runs = m_pivot;
  double probs[2] = {cfg.alpha_bar / 2.0, 1.0 - cfg.alpha_bar / 2.0};
  auto f = pivot_quantiles(summary, pcfg, probs);
  NuIntervalEval e;
  e.f_lo = f[0];
  e.f_hi = f[1];
  e.nu_interval = nu_confidence_interval(nu_hat, summary.n_periods, f[0], f[1]);
  if (!(e.nu_interval.lower > 0.0))
    throw SimError("nu confidence interval extends below 0; cannot evaluate CP there");
  e.nus = {e.nu_interval.lower, e.nu_interval.upper};
  if (dense) {
    const int inner = 9;
    for (int i = 1; i <= inner; ++i)
      e.nus.push_back(e.nu_interval.lower +
                      (e.nu_interval.upper - e.nu_interval.lower) * i / (inner + 1));
  }
  return e;
}

}  // namespace

MinCpCI ci_for_min_cp(const CovariateSummary& summary, double nu_hat, const SimConfig& cfg,
                      long m_pivot, bool dense) {
  auto e = nu_interval_for(summary, nu_hat, cfg, m_pivot, dense);
  std::vector<double> vals;
  for (double nu : e.nus) {
    auto grid = gamma_grid_half(summary, nu);
    vals.push_back(min_cp_over_gamma(summary, nu, cfg, grid).estimate.value);
  }
  MinCpCI res;
  res.nu_interval = e.nu_interval;
  res.f_lo = e.f_lo;
  res.f_hi = e.f_hi;
  res.non_monotone = vals[0] > vals[1];
  res.interval = Interval{*std::min_element(vals.begin(), vals.end()),
                          std::max(vals[0], vals[1])};
  return res;
}

MinSelCI ci_for_min_sel(const CovariateSummary& summary, double nu_hat, const SimConfig& cfg,
                        long m_pivot, bool dense) {
  auto e = nu_interval_for(summary, nu_hat, cfg, m_pivot, dense);
  std::vector<double> cp_vals;
  for (double nu : e.nus) {
    auto grid = gamma_grid_half(summary, nu);
    cp_vals.push_back(min_cp_over_gamma(summary, nu, cfg, grid).estimate.value);
  }
  MinSelCI res;
  res.nu_interval = e.nu_interval;
  res.target_coverage = *std::min_element(cp_vals.begin(), cp_vals.end());
  res.c_star = solve_coverage_quantile(summary, res.target_coverage, cfg);

  std::vector<double> sel_vals;
  for (double nu : {e.nu_interval.lower, e.nu_interval.upper}) {
    auto grid = gamma_grid_half(summary, nu);
    auto curve = sel_curve(summary, grid, nu, res.c_star, cfg, Method::control_variate);
    double best = curve[0].value;
    for (const auto& est : curve) best = std::min(best, est.value);
    sel_vals.push_back(best);
  }
  res.interval = Interval{std::min(sel_vals[0], sel_vals[1]), std::max(sel_vals[0], sel_vals[1])};
  return res;
}

std::vector<SweepRow> sweep_curve(const CovariateSummary& summary, const SimConfig& cfg,
                                  std::span<const double> nu_grid,
                                  std::optional<double> sel_c_star) {
  std::vector<SweepRow> rows;
  for (double nu : nu_grid) {
    SweepRow row;
    row.nu = nu;
    auto grid = gamma_grid_half(summary, nu);
    auto m = min_cp_over_gamma(summary, nu, cfg, grid);
    row.min_cp = m.estimate;
    row.argmin_gamma = m.argmin_gamma;
    if (sel_c_star) {
      auto curve = sel_curve(summary, grid, nu, *sel_c_star, cfg, Method::control_variate);
      MCEstimate best = curve[0];
      for (const auto& est : curve)
        if (est.value < best.value) best = est;
      row.min_sel = best;
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace hpl
