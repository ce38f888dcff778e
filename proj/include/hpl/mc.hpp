#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "hpl/inference.hpp"
#include "hpl/panel.hpp"
#include "hpl/rng.hpp"

namespace hpl {

struct SimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SimConfig {
  long m_runs = 50000;
  std::uint64_t seed = 0;
  double alpha = 0.05;
  double alpha_h = 0.05;
  double alpha_bar = 0.02;
};

enum class Method { brute, control_variate };

// One simulation run of the standardized-noise kernel. The estimated-variance
// statistics (hatted) and their known-variance counterparts share the same
// underlying draws.
struct KernelRun {
  double g_hat_I = 0.0;
  double g_hat_J = 0.0;
  double h_hat = 0.0;
  double g_I = 0.0;
  double g_J = 0.0;
  double h = 0.0;
  double sigma_ratio = 0.0;  // sigma_eps_hat / sigma_eps
  double nu_hat = 0.0;
  double pivot = 0.0;        // (nu_hat + 1/T) / (nu + 1/T)
  bool valid = true;
};

struct MCEstimate {
  double value = 0.0;
  double std_error = 0.0;
  long m_runs = 0;
  Method method = Method::brute;
  long invalid_runs = 0;
};

struct DensityEstimate {
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  long clamped = 0;  // plug-in values clamped to the CP-grid ends
};

// Simulation kernel conditioned on a covariate summary. By Theorem-level
// parameter freeness the draws depend on x only through (SSB, SSW, N, T);
// a canonical covariate with those sums is synthesized internally, so two
// summaries with equal (SSB, SSW, N, T) yield bit-identical run streams.
class Kernel {
 public:
  Kernel(const CovariateSummary& summary, double nu);

  // Draw-dependent quantities that do not involve gamma. gamma enters the
  // finished statistics affinely, which lets one pass over the draws serve a
  // whole gamma grid.
  struct Base {
    double s_w = 0.0;          // sum (x_it - xbar_i)(eps - eps_bar_i), standardized
    double s_b = 0.0;          // sum (xbar_i - xbar)(sqrt(nu) eta + eps_bar_i), standardized
    double sigma_ratio = 0.0;  // sigma_eps_hat / sigma_eps
    double nu_hat = 0.0;
    double q_hat = 0.0;
    double pivot = 0.0;
    bool valid = true;
  };

  Base draw(RunStream& rs) const;
  KernelRun finish(const Base& base, double gamma) const;
  // Second-sample draw for the SEL denominator: only the eps draws are used.
  double draw_sigma_ratio(RunStream& rs) const;

  double nu() const { return nu_; }
  int n_units() const { return n_units_; }
  int n_periods() const { return n_periods_; }

 private:
  int n_units_;
  int n_periods_;
  double nu_;
  double ssb_, ssw_, ratio_r_, q_;
  double sqrt_ssb_over_n_;
  std::vector<double> unit_mean_dev_;  // canonical xbar_i - xbar, sum of squares = SSB
  std::vector<double> within_dev_;     // canonical per-period x deviations, shared across units
};

std::vector<KernelRun> simulate_kernel(const CovariateSummary& summary, double gamma, double nu,
                                       const SimConfig& cfg);

MCEstimate estimate_cp(const CovariateSummary& summary, double gamma, double nu,
                       const SimConfig& cfg, Method method);

// One pass over the draws evaluating every gamma in the grid with common
// random numbers.
std::vector<MCEstimate> cp_curve(const CovariateSummary& summary, std::span<const double> gammas,
                                 double nu, const SimConfig& cfg, Method method);

MCEstimate estimate_sel(const CovariateSummary& summary, double gamma, double nu, double c_star,
                        const SimConfig& cfg, Method method);

std::vector<MCEstimate> sel_curve(const CovariateSummary& summary, std::span<const double> gammas,
                                  double nu, double c_star, const SimConfig& cfg, Method method);

// Order-statistic quantiles of the pivot (nu_hat + 1/T)/(nu + 1/T), simulated
// at nu = 1. Each p must satisfy p = r/(M+1) for integer r.
std::vector<double> pivot_quantiles(const CovariateSummary& summary, const SimConfig& cfg,
                                    std::span<const double> probs);

Interval nu_confidence_interval(double nu_hat, int n_periods, double f_lo, double f_hi);

// Smallest c in [1/2, 1) whose simulated J_c coverage matches the target,
// solved by bisection on a single fixed sample.
double solve_coverage_quantile(const CovariateSummary& summary, double target_coverage,
                               const SimConfig& cfg);

enum class PlugIn { nu_hat_plugin, gamma_hat_plugin };

// Piecewise-linear CP curve used to map plug-in estimates.
struct CpGrid {
  std::vector<double> param;  // strictly increasing
  std::vector<double> cp;
};

DensityEstimate density_cp(const CovariateSummary& summary, double gamma, double nu, PlugIn which,
                           const SimConfig& cfg, const CpGrid& cp_grid);

// Worker-count control: the HPL_THREADS environment variable overrides the
// hardware default. Results never depend on the number of workers.
int worker_count();

}  // namespace hpl
