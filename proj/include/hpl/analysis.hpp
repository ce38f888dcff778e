#pragma once

#include <optional>

#include "hpl/mc.hpp"

namespace hpl {

// Half grid over g >= 0 (evenness in gamma): n points whose induced |E(h|x)|
// is equally spaced over [0, max_abs_mean_h].
std::vector<double> gamma_grid_half(const CovariateSummary& summary, double nu, int n = 41,
                                    double max_abs_mean_h = 10.0);

// Full grid with |E(h|x)| spanning [-max, max]; used for density mapping.
std::vector<double> gamma_grid_full(const CovariateSummary& summary, double nu, int n = 81,
                                    double max_abs_mean_h = 10.0);

// Log-spaced nu grid around a center value; used for the nu_hat plug-in map.
std::vector<double> nu_grid_around(double nu, int n = 41);

struct MinCpResult {
  MCEstimate estimate;
  double argmin_gamma = 0.0;
};

MinCpResult min_cp_over_gamma(const CovariateSummary& summary, double nu, const SimConfig& cfg,
                              std::span<const double> gamma_grid);

struct ConfCoefResult {
  double value = 0.0;
  double std_error = 0.0;
  double at_nu = 0.0;
  bool still_decreasing = false;  // set when the floor check has not stabilized
};

ConfCoefResult confidence_coefficient(const CovariateSummary& summary, const SimConfig& cfg,
                                      double nu_floor = 1e-4);

struct MinCpCI {
  Interval interval;
  Interval nu_interval;
  bool non_monotone = false;
  double f_lo = 0.0;
  double f_hi = 0.0;
};

// m_pivot is the run count for the pivot-quantile step; it must make
// r = (alpha_bar/2)(m_pivot+1) an integer (9999 works for alpha_bar = 0.02).
MinCpCI ci_for_min_cp(const CovariateSummary& summary, double nu_hat, const SimConfig& cfg,
                      long m_pivot, bool dense = false);

struct MinSelCI {
  Interval interval;
  Interval nu_interval;
  double c_star = 0.0;
  double target_coverage = 0.0;
};

MinSelCI ci_for_min_sel(const CovariateSummary& summary, double nu_hat, const SimConfig& cfg,
                        long m_pivot, bool dense = false);

struct SweepRow {
  double nu = 0.0;
  MCEstimate min_cp;
  double argmin_gamma = 0.0;
  std::optional<MCEstimate> min_sel;
};

std::vector<SweepRow> sweep_curve(const CovariateSummary& summary, const SimConfig& cfg,
                                  std::span<const double> nu_grid,
                                  std::optional<double> sel_c_star = std::nullopt);

}  // namespace hpl
