#include "hpl/mc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <thread>

#include "hpl/normal.hpp"
#include "hpl/theory.hpp"

namespace hpl {

namespace {

constexpr std::uint64_t kMainStream = 0;
constexpr std::uint64_t kDenomStream = 0x64656e6f6dULL;  // "denom"
constexpr long kBlock = 4096;

// Fixed-size blocks pulled by workers; callers merge per-block results in
// block order, so estimator outputs never depend on the worker count.
template <typename BlockFn>
void run_blocks(long m, const BlockFn& fn) {
  long n_blocks = (m + kBlock - 1) / kBlock;
  int workers = std::min<long>(worker_count(), n_blocks);
  if (workers <= 1) {
    for (long b = 0; b < n_blocks; ++b) fn(b, b * kBlock, std::min(m, (b + 1) * kBlock));
    return;
  }
  std::atomic<long> next{0};
  auto work = [&] {
    for (;;) {
      long b = next.fetch_add(1);
      if (b >= n_blocks) return;
      fn(b, b * kBlock, std::min(m, (b + 1) * kBlock));
    }
  };
  std::vector<std::thread> pool;
  for (int i = 0; i < workers; ++i) pool.emplace_back(work);
  for (auto& t : pool) t.join();
}

}  // namespace

int worker_count() {
  if (const char* env = std::getenv("HPL_THREADS")) {
    int n = std::atoi(env);
    if (n >= 1) return n;
  }
  int n = static_cast<int>(std::thread::hardware_concurrency());
  return n < 1 ? 1 : n;
}

Kernel::Kernel(const CovariateSummary& summary, double nu)
    : n_units_(summary.n_units),
      n_periods_(summary.n_periods),
      nu_(nu),
      ssb_(summary.ssb),
      ssw_(summary.ssw),
      ratio_r_(summary.ratio_r) {
  if (!(nu > 0.0)) throw SimError("Kernel: nu must be > 0");
  q_ = q_of(nu, n_periods_);
  sqrt_ssb_over_n_ = std::sqrt(ssb_ / n_units_);

  // Canonical covariate with the prescribed SSB and SSW. The run distribution
  // depends on x only through (SSB, SSW, N, T), so any design with these sums
  // is equivalent; equally spaced levels keep the stream reproducible.
  unit_mean_dev_.resize(n_units_);
  double ss = 0.0;
  for (int i = 0; i < n_units_; ++i) {
    unit_mean_dev_[i] = i - 0.5 * (n_units_ - 1);
    ss += unit_mean_dev_[i] * unit_mean_dev_[i];
  }
  double sb = std::sqrt(ssb_ / ss);
  for (double& v : unit_mean_dev_) v *= sb;

  within_dev_.resize(n_periods_);
  ss = 0.0;
  for (int t = 0; t < n_periods_; ++t) {
    within_dev_[t] = t - 0.5 * (n_periods_ - 1);
    ss += within_dev_[t] * within_dev_[t];
  }
  double sw = std::sqrt(ssw_ / (n_units_ * ss));
  for (double& v : within_dev_) v *= sw;
}

Kernel::Base Kernel::draw(RunStream& rs) const {
  const int N = n_units_;
  const int T = n_periods_;
  // Draw order is part of the reproducibility contract: eps row-major, then eta.
  double s_w = 0.0, w2 = 0.0;
  std::vector<double> eps_means(N);
  std::vector<double> eps_row(T);
  for (int i = 0; i < N; ++i) {
    double m = 0.0;
    for (int t = 0; t < T; ++t) {
      eps_row[t] = rs.normal();
      m += eps_row[t];
    }
    m /= T;
    eps_means[i] = m;
    for (int t = 0; t < T; ++t) {
      double e = eps_row[t] - m;
      s_w += within_dev_[t] * e;
      w2 += e * e;
    }
  }

  double sqrt_nu = std::sqrt(nu_);
  double s_b = 0.0, u_sum = 0.0;
  std::vector<double> u(N);
  for (int i = 0; i < N; ++i) {
    u[i] = sqrt_nu * rs.normal() + eps_means[i];
    u_sum += u[i];
  }
  double u_mean = u_sum / N;
  double u2 = 0.0;
  for (int i = 0; i < N; ++i) {
    double d = u[i] - u_mean;
    s_b += unit_mean_dev_[i] * d;
    u2 += d * d;
  }

  Base b;
  b.s_w = s_w;
  b.s_b = s_b;
  double sig2 = (w2 - s_w * s_w / ssw_) / (static_cast<double>(N) * (T - 1));
  b.sigma_ratio = std::sqrt(std::max(sig2, 0.0));
  double between_ms = (u2 - s_b * s_b / ssb_) / N;  // N^{-1} sum (r_tilde_i / sigma_eps)^2
  if (sig2 > 0.0) {
    b.q_hat = between_ms / sig2;  // nu_hat + 1/T
    b.nu_hat = b.q_hat - 1.0 / T;
    b.pivot = b.q_hat / q_;
    b.valid = b.q_hat > 0.0;
  } else {
    b.q_hat = b.nu_hat = b.pivot = 0.0;
    b.valid = false;
  }
  return b;
}

double Kernel::draw_sigma_ratio(RunStream& rs) const {
  const int N = n_units_;
  const int T = n_periods_;
  double s_w = 0.0, w2 = 0.0;
  std::vector<double> eps_row(T);
  for (int i = 0; i < N; ++i) {
    double m = 0.0;
    for (int t = 0; t < T; ++t) {
      eps_row[t] = rs.normal();
      m += eps_row[t];
    }
    m /= T;
    for (int t = 0; t < T; ++t) {
      double e = eps_row[t] - m;
      s_w += within_dev_[t] * e;
      w2 += e * e;
    }
  }
  double sig2 = (w2 - s_w * s_w / ssw_) / (static_cast<double>(N) * (T - 1));
  return std::sqrt(std::max(sig2, 0.0));
}

KernelRun Kernel::finish(const Base& b, double gamma) const {
  const double r = ratio_r_;
  KernelRun run;
  run.sigma_ratio = b.sigma_ratio;
  run.nu_hat = b.nu_hat;
  run.pivot = b.pivot;
  run.valid = b.valid;

  // Known-variance statistics (Lemma expressions with q = nu + 1/T).
  double g_shift = gamma * sqrt_ssb_over_n_;
  run.g_J = b.s_w / std::sqrt(ssw_);
  run.g_I = (q_ * b.s_w + b.s_b) / std::sqrt(q_ * ssw_ * (q_ + r)) +
            g_shift * std::sqrt(r / (q_ * (q_ + r)));
  run.h = (r * b.s_w - b.s_b) / std::sqrt(ssb_ * (q_ + r)) - g_shift / std::sqrt(r + q_);

  if (b.valid) {
    double qh = b.q_hat;
    double sr = b.sigma_ratio;
    run.g_hat_J = b.s_w / (sr * std::sqrt(ssw_));
    run.g_hat_I = (qh * b.s_w + b.s_b) / (sr * std::sqrt(qh * ssw_ * (qh + r))) +
                  g_shift * std::sqrt(r / (qh * (qh + r))) / sr;
    run.h_hat = (r * b.s_w - b.s_b) / (sr * std::sqrt(ssb_ * (qh + r))) -
                g_shift / (sr * std::sqrt(r + qh));
  }
  return run;
}

std::vector<KernelRun> simulate_kernel(const CovariateSummary& summary, double gamma, double nu,
                                       const SimConfig& cfg) {
  if (cfg.m_runs < 1) throw SimError("simulate_kernel: m_runs must be >= 1");
  Kernel kernel(summary, nu);
  std::vector<KernelRun> runs(cfg.m_runs);
  run_blocks(cfg.m_runs, [&](long, long lo, long hi) {
    for (long k = lo; k < hi; ++k) {
      RunStream rs(cfg.seed, kMainStream, static_cast<std::uint64_t>(k));
      runs[k] = kernel.finish(kernel.draw(rs), gamma);
    }
  });
  return runs;
}

namespace {

struct MomentBlock {
  std::vector<double> sum;
  std::vector<double> sum_sq;
  long invalid = 0;
};

// Shared driver for CP-style per-run summands evaluated over a gamma grid.
template <typename SummandFn>
std::vector<MCEstimate> accumulate_curve(const Kernel& kernel, std::size_t n_gammas, long m,
                                         std::uint64_t seed, Method method,
                                         const SummandFn& summand) {
  long n_blocks = (m + kBlock - 1) / kBlock;
  std::vector<MomentBlock> blocks(n_blocks);
  run_blocks(m, [&](long b, long lo, long hi) {
    MomentBlock& blk = blocks[b];
    blk.sum.assign(n_gammas, 0.0);
    blk.sum_sq.assign(n_gammas, 0.0);
    for (long k = lo; k < hi; ++k) {
      RunStream rs(seed, kMainStream, static_cast<std::uint64_t>(k));
      Kernel::Base base = kernel.draw(rs);
      if (!base.valid) {
        ++blk.invalid;
        continue;
      }
      summand(base, blk.sum, blk.sum_sq);
    }
  });

  long invalid = 0;
  std::vector<KahanSum> sums(n_gammas), sums_sq(n_gammas);
  for (const auto& blk : blocks) {
    invalid += blk.invalid;
    for (std::size_t g = 0; g < n_gammas; ++g) {
      sums[g].add(blk.sum[g]);
      sums_sq[g].add(blk.sum_sq[g]);
    }
  }
  long m_eff = m - invalid;
  if (m_eff < 2) throw SimError("estimator: too few valid runs");

  std::vector<MCEstimate> out(n_gammas);
  for (std::size_t g = 0; g < n_gammas; ++g) {
    double mean = sums[g].value() / m_eff;
    double var = std::max(sums_sq[g].value() / m_eff - mean * mean, 0.0);
    out[g].value = mean;
    out[g].std_error = std::sqrt(var / m_eff);
    out[g].m_runs = m;
    out[g].method = method;
    out[g].invalid_runs = invalid;
  }
  return out;
}

}  // namespace

std::vector<MCEstimate> cp_curve(const CovariateSummary& summary, std::span<const double> gammas,
                                 double nu, const SimConfig& cfg, Method method) {
  if (gammas.empty()) throw SimError("cp_curve: empty gamma grid");
  if (cfg.m_runs < 1) throw SimError("cp_curve: m_runs must be >= 1");
  Kernel kernel(summary, nu);
  const double z = norm_quantile(1.0 - cfg.alpha / 2.0);
  const double zh = norm_quantile(1.0 - cfg.alpha_h / 2.0);

  std::vector<double> cpk(gammas.size(), 0.0);
  if (method == Method::control_variate)
    for (std::size_t g = 0; g < gammas.size(); ++g)
      cpk[g] = cpk_exact(summary, gammas[g], nu, cfg.alpha, cfg.alpha_h);

  auto summand = [&](const Kernel::Base& base, std::vector<double>& sum,
                     std::vector<double>& sum_sq) {
    for (std::size_t g = 0; g < gammas.size(); ++g) {
      KernelRun run = kernel.finish(base, gammas[g]);
      double in_h = std::fabs(run.h_hat) <= zh;
      double i_hat = (std::fabs(run.g_hat_I) <= z && in_h) +
                     (std::fabs(run.g_hat_J) <= z && !in_h);
      double s = i_hat;
      if (method == Method::control_variate) {
        double in_hk = std::fabs(run.h) <= zh;
        double i_known = (std::fabs(run.g_I) <= z && in_hk) +
                         (std::fabs(run.g_J) <= z && !in_hk);
        s = i_hat - i_known;
      }
      sum[g] += s;
      sum_sq[g] += s * s;
    }
  };
  auto out = accumulate_curve(kernel, gammas.size(), cfg.m_runs, cfg.seed, method, summand);
  if (method == Method::control_variate)
    for (std::size_t g = 0; g < gammas.size(); ++g) out[g].value += cpk[g];
  return out;
}

MCEstimate estimate_cp(const CovariateSummary& summary, double gamma, double nu,
                       const SimConfig& cfg, Method method) {
  double g[1] = {gamma};
  return cp_curve(summary, std::span<const double>(g, 1), nu, cfg, method)[0];
}

std::vector<MCEstimate> sel_curve(const CovariateSummary& summary, std::span<const double> gammas,
                                  double nu, double c_star, const SimConfig& cfg, Method method) {
  if (gammas.empty()) throw SimError("sel_curve: empty gamma grid");
  if (!(c_star >= 0.5 && c_star < 1.0)) throw SimError("sel_curve: c_star must be in [1/2, 1)");
  Kernel kernel(summary, nu);
  const double zh = norm_quantile(1.0 - cfg.alpha_h / 2.0);
  const double prefactor =
      norm_quantile(1.0 - cfg.alpha / 2.0) / norm_quantile((c_star + 1.0) / 2.0);
  const double r = summary.ratio_r;
  const double sqrt_w = std::sqrt(q_of(nu, summary.n_periods) /
                                  (q_of(nu, summary.n_periods) + r));

  std::vector<double> numk(gammas.size(), 0.0);
  if (method == Method::control_variate)
    for (std::size_t g = 0; g < gammas.size(); ++g)
      numk[g] = sel_known_terms(summary, gammas[g], nu, cfg.alpha_h).numk;

  auto summand = [&](const Kernel::Base& base, std::vector<double>& sum,
                     std::vector<double>& sum_sq) {
    double sqrt_w_hat = std::sqrt(base.q_hat / (base.q_hat + r));
    for (std::size_t g = 0; g < gammas.size(); ++g) {
      KernelRun run = kernel.finish(base, gammas[g]);
      double num_k =
          base.sigma_ratio * (std::fabs(run.h_hat) <= zh ? sqrt_w_hat : 1.0);
      double s = num_k;
      if (method == Method::control_variate) {
        double numk_k = std::fabs(run.h) <= zh ? sqrt_w : 1.0;
        s = num_k - numk_k;
      }
      sum[g] += s;
      sum_sq[g] += s * s;
    }
  };
  auto num = accumulate_curve(kernel, gammas.size(), cfg.m_runs, cfg.seed, method, summand);
  if (method == Method::control_variate)
    for (std::size_t g = 0; g < gammas.size(); ++g) num[g].value += numk[g];

  // Independent second sample for the denominator E(sigma_eps_hat / sigma_eps).
  long n_blocks = (cfg.m_runs + kBlock - 1) / kBlock;
  std::vector<double> dsum(n_blocks, 0.0), dsum_sq(n_blocks, 0.0);
  run_blocks(cfg.m_runs, [&](long b, long lo, long hi) {
    double s = 0.0, s2 = 0.0;
    for (long k = lo; k < hi; ++k) {
      RunStream rs(cfg.seed, kDenomStream, static_cast<std::uint64_t>(k));
      double v = kernel.draw_sigma_ratio(rs);
      s += v;
      s2 += v * v;
    }
    dsum[b] = s;
    dsum_sq[b] = s2;
  });
  KahanSum ds, ds2;
  for (long b = 0; b < n_blocks; ++b) {
    ds.add(dsum[b]);
    ds2.add(dsum_sq[b]);
  }
  double denom = ds.value() / cfg.m_runs;
  double denom_var = std::max(ds2.value() / cfg.m_runs - denom * denom, 0.0);
  double denom_se2 = denom_var / cfg.m_runs;
  if (denom <= 0.0) throw SimError("sel_curve: nonpositive denominator estimate");

  for (auto& e : num) {
    double n_val = e.value, n_se2 = e.std_error * e.std_error;
    e.value = prefactor * n_val / denom;
    e.std_error = prefactor * std::sqrt(n_se2 / (denom * denom) +
                                        n_val * n_val * denom_se2 /
                                            (denom * denom * denom * denom));
  }
  return num;
}

MCEstimate estimate_sel(const CovariateSummary& summary, double gamma, double nu, double c_star,
                        const SimConfig& cfg, Method method) {
  double g[1] = {gamma};
  return sel_curve(summary, std::span<const double>(g, 1), nu, c_star, cfg, method)[0];
}

std::vector<double> pivot_quantiles(const CovariateSummary& summary, const SimConfig& cfg,
                                    std::span<const double> probs) {
  const long m = cfg.m_runs;
  std::vector<long> ranks;
  for (double p : probs) {
    if (!(p > 0.0 && p < 1.0)) throw SimError("pivot_quantiles: p must be in (0, 1)");
    double r = p * (m + 1);
    long ri = std::lround(r);
    if (std::fabs(r - ri) > 1e-9 || ri < 1 || ri > m)
      throw SimError("pivot_quantiles: p = " + std::to_string(p) +
                     " needs integer r = p*(M+1); adjust M (r = " + std::to_string(r) + ")");
    ranks.push_back(ri);
  }

  // Any nu is valid here; the pivot is parameter-free. Use nu = 1.
  Kernel kernel(summary, 1.0);
  std::vector<double> pivots(m);
  run_blocks(m, [&](long, long lo, long hi) {
    for (long k = lo; k < hi; ++k) {
      RunStream rs(cfg.seed, kMainStream, static_cast<std::uint64_t>(k));
      pivots[k] = kernel.draw(rs).pivot;
    }
  });
  std::sort(pivots.begin(), pivots.end());

  std::vector<double> out;
  for (long r : ranks) out.push_back(pivots[r - 1]);
  return out;
}

Interval nu_confidence_interval(double nu_hat, int n_periods, double f_lo, double f_hi) {
  if (!(f_lo > 0.0) || !(f_hi > 0.0))
    throw SimError("nu_confidence_interval: quantiles must be positive");
  if (f_lo > f_hi) throw SimError("nu_confidence_interval: F_lo must not exceed F_hi");
  double inv_t = 1.0 / n_periods;
  double s = nu_hat + inv_t;
  return Interval{s / f_hi - inv_t, s / f_lo - inv_t};
}

double solve_coverage_quantile(const CovariateSummary& summary, double target_coverage,
                               const SimConfig& cfg) {
  if (!(target_coverage >= 0.0 && target_coverage < 1.0))
    throw SimError("solve_coverage_quantile: target must be in [0, 1)");
  if (target_coverage == 0.0) return 0.5;

  Kernel kernel(summary, 1.0);  // g_hat_J does not depend on nu or gamma
  const long m = cfg.m_runs;
  std::vector<double> abs_gj(m);
  run_blocks(m, [&](long, long lo, long hi) {
    for (long k = lo; k < hi; ++k) {
      RunStream rs(cfg.seed, kMainStream, static_cast<std::uint64_t>(k));
      Kernel::Base b = kernel.draw(rs);
      abs_gj[k] = b.sigma_ratio > 0.0 ? std::fabs(b.s_w) / (b.sigma_ratio * std::sqrt(summary.ssw))
                                      : std::numeric_limits<double>::infinity();
    }
  });
  std::sort(abs_gj.begin(), abs_gj.end());

  auto coverage = [&](double c) {
    double thr = norm_quantile((c + 1.0) / 2.0);
    return static_cast<double>(std::upper_bound(abs_gj.begin(), abs_gj.end(), thr) -
                               abs_gj.begin()) /
           m;
  };
  double hi = 1.0 - 1e-12;
  if (coverage(hi) < target_coverage)
    throw SimError("solve_coverage_quantile: target " + std::to_string(target_coverage) +
                   " unreachable; max attainable coverage is " + std::to_string(coverage(hi)));
  double lo = 0.5;
  for (int it = 0; it < 200; ++it) {
    double mid = 0.5 * (lo + hi);
    double cov = coverage(mid);
    if (std::fabs(cov - target_coverage) <= 1e-6) return mid;
    if (cov < target_coverage)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-13) break;
  }
  return 0.5 * (lo + hi);
}

DensityEstimate density_cp(const CovariateSummary& summary, double gamma, double nu, PlugIn which,
                           const SimConfig& cfg, const CpGrid& cp_grid) {
  if (cp_grid.param.size() < 2 || cp_grid.param.size() != cp_grid.cp.size())
    throw SimError("density_cp: cp_grid needs at least 2 (param, cp) pairs");
  for (std::size_t i = 1; i < cp_grid.param.size(); ++i)
    if (!(cp_grid.param[i] > cp_grid.param[i - 1]))
      throw SimError("density_cp: cp_grid params must be strictly increasing");

  Kernel kernel(summary, nu);
  const long m = cfg.m_runs;
  const double sqrt_n = std::sqrt(static_cast<double>(summary.n_units));
  std::vector<double> plug(m);
  run_blocks(m, [&](long, long lo, long hi) {
    for (long k = lo; k < hi; ++k) {
      RunStream rs(cfg.seed, kMainStream, static_cast<std::uint64_t>(k));
      Kernel::Base b = kernel.draw(rs);
      if (which == PlugIn::nu_hat_plugin) {
        plug[k] = b.nu_hat;
      } else {
        double gamma_hat =
            (gamma + sqrt_n * (b.s_b / summary.ssb - b.s_w / summary.ssw)) / b.sigma_ratio;
        plug[k] = gamma_hat;
      }
    }
  });

  // Map through the linearly interpolated CP curve, clamping at the ends.
  DensityEstimate de;
  std::vector<double> mapped(m);
  const auto& px = cp_grid.param;
  const auto& py = cp_grid.cp;
  for (long k = 0; k < m; ++k) {
    double v = plug[k];
    if (v <= px.front()) {
      mapped[k] = py.front();
      if (v < px.front()) ++de.clamped;
    } else if (v >= px.back()) {
      mapped[k] = py.back();
      if (v > px.back()) ++de.clamped;
    } else {
      auto it = std::upper_bound(px.begin(), px.end(), v);
      std::size_t j = it - px.begin();
      double f = (v - px[j - 1]) / (px[j] - px[j - 1]);
      mapped[k] = py[j - 1] + f * (py[j] - py[j - 1]);
    }
  }

  // Gaussian KDE with Silverman's rule-of-thumb bandwidth.
  std::vector<double> sorted = mapped;
  std::sort(sorted.begin(), sorted.end());
  double mean = 0.0;
  for (double v : mapped) mean += v;
  mean /= m;
  double var = 0.0;
  for (double v : mapped) var += (v - mean) * (v - mean);
  double sd = std::sqrt(var / std::max<long>(m - 1, 1));
  double iqr = sorted[static_cast<std::size_t>(0.75 * (m - 1))] -
               sorted[static_cast<std::size_t>(0.25 * (m - 1))];
  double spread = std::min(sd, iqr / 1.34);
  if (spread <= 0.0) spread = sd;
  if (spread <= 0.0) spread = std::max(std::fabs(mean), 1.0) * 1e-6;
  de.bandwidth = 0.9 * spread * std::pow(static_cast<double>(m), -0.2);

  const int grid_n = 512;
  double g_lo = sorted.front() - 3.0 * de.bandwidth;
  double g_hi = sorted.back() + 3.0 * de.bandwidth;
  de.grid.resize(grid_n);
  de.density.resize(grid_n);
  double step = (g_hi - g_lo) / (grid_n - 1);
  run_blocks(grid_n, [&](long, long lo, long hi) {
    for (long j = lo; j < hi; ++j) {
      double gj = g_lo + step * j;
      double s = 0.0;
      for (long k = 0; k < m; ++k) s += norm_pdf((gj - mapped[k]) / de.bandwidth);
      de.grid[j] = gj;
      de.density[j] = s / (m * de.bandwidth);
    }
  });
  return de;
}

}  // namespace hpl
