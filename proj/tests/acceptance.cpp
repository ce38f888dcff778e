// Acceptance suite: one line per criterion, nonzero exit on any failure.
// Usage: acceptance <path-to-cli> [path-to-airfare.csv]

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "hpl/analysis.hpp"
#include "hpl/estimators.hpp"
#include "hpl/inference.hpp"
#include "hpl/mc.hpp"
#include "hpl/normal.hpp"
#include "hpl/panel.hpp"
#include "hpl/theory.hpp"
#include "test_support.hpp"

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& detail = "") {
  std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL");
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  if (!pass) ++g_failures;
}

void report_skip(int criterion, const std::string& why) {
  std::cout << "criterion " << criterion << ": SKIP (" << why << ")\n";
}

hpl::CovariateSummary synthetic_summary() {
  // Fixed synthetic covariate geometry, N = 20, T = 4.
  std::mt19937 rng(20260824);
  auto d = test_support::random_covariate(20, 4, rng);
  return hpl::summarize(d);
}

double gamma_for_mean_h(const hpl::CovariateSummary& s, double nu, double abs_mean_h) {
  double q = hpl::q_of(nu, s.n_periods);
  return abs_mean_h * std::sqrt(s.n_units * (s.ratio_r + q) / s.ssb);
}

// ---------------------------------------------------------------- criterion 1
void criterion_1(const std::string& airfare_path) {
  if (airfare_path.empty()) {
    report_skip(1, "airfare.csv not supplied");
    return;
  }
  std::ifstream probe(airfare_path);
  if (!probe) {
    report_skip(1, "cannot open " + airfare_path);
    return;
  }
  probe.close();
  try {
    hpl::ColumnMap cols;
    cols.id = "id";
    cols.time = "year";
    cols.x = "concen";
    cols.y = "lfare";
    auto data = hpl::load_panel_file(airfare_path, cols);
    auto s = hpl::summarize(data);
    auto fits = hpl::fit_all(data, s);
    bool ok = std::fabs(fits.vc.nu_hat - 12.78) <= 0.01;
    std::ostringstream detail;
    detail << "nu_hat=" << fits.vc.nu_hat;

    hpl::SimConfig cfg;
    cfg.m_runs = 9999;
    double probs[2] = {0.01, 0.99};
    auto f = hpl::pivot_quantiles(s, cfg, probs);
    auto nu_iv = hpl::nu_confidence_interval(fits.vc.nu_hat, s.n_periods, f[0], f[1]);
    ok = ok && std::fabs(nu_iv.lower - 11.3976) <= 0.05 &&
         std::fabs(nu_iv.upper - 14.3829) <= 0.05;
    detail << " nu_ci=[" << nu_iv.lower << "," << nu_iv.upper << "]";

    hpl::SimConfig big = cfg;
    big.m_runs = 50000;
    auto cp_ci = hpl::ci_for_min_cp(s, fits.vc.nu_hat, big, 9999);
    ok = ok && std::fabs(cp_ci.interval.lower - 0.8889) <= 0.01 &&
         std::fabs(cp_ci.interval.upper - 0.9026) <= 0.01;
    detail << " min_cp_ci=[" << cp_ci.interval.lower << "," << cp_ci.interval.upper << "]";

    auto sel_ci = hpl::ci_for_min_sel(s, fits.vc.nu_hat, big, 9999);
    ok = ok && std::fabs(sel_ci.interval.lower - 1.1012) <= 0.01 &&
         std::fabs(sel_ci.interval.upper - 1.1244) <= 0.01;
    detail << " min_sel_ci=[" << sel_ci.interval.lower << "," << sel_ci.interval.upper << "]";

    auto cc = hpl::confidence_coefficient(s, big);
    ok = ok && std::fabs(cc.value - 0.19) <= 0.02;
    detail << " conf_coef=" << cc.value;

    // Limiting (nu -> infinity) minimum scaled expected length: the weights
    // degenerate and the infimum over nu is approached at large nu.
    double best_sel = 1e30;
    for (double nu : {64.0, 256.0, 1024.0}) {
      auto grid = hpl::gamma_grid_half(s, nu);
      auto curve = hpl::sel_curve(s, grid, nu, 0.95, big, hpl::Method::control_variate);
      for (const auto& e : curve) best_sel = std::min(best_sel, e.value);
    }
    (void)best_sel;  // reported, not gated beyond the tolerance below
    ok = ok && std::fabs(best_sel - 2.5208) <= 0.05;
    detail << " inf_min_sel=" << best_sel;
    report(1, ok, detail.str());
  } catch (const std::exception& e) {
    report(1, false, e.what());
  }
}

// ---------------------------------------------------------------- criterion 2
void criterion_2(const hpl::CovariateSummary& s) {
  const long m = 1000000;
  const double z = hpl::norm_quantile(0.975);
  struct Point {
    double gamma, nu;
  };
  std::vector<std::vector<Point>> by_nu;
  for (double nu : {0.5, 1.0, 2.0}) {
    std::vector<Point> pts;
    pts.push_back({0.0, nu});
    pts.push_back({gamma_for_mean_h(s, nu, 1.5), nu});
    pts.push_back({gamma_for_mean_h(s, nu, 8.0), nu});
    by_nu.push_back(pts);
  }
  bool ok = true;
  std::ostringstream detail;
  std::uint64_t seed = 1001;
  for (const auto& pts : by_nu) {
    hpl::Kernel kernel(s, pts[0].nu);
    std::vector<double> hits(pts.size(), 0.0);
    for (long k = 0; k < m; ++k) {
      hpl::RunStream rs(seed, 0, static_cast<std::uint64_t>(k));
      auto base = kernel.draw(rs);
      for (std::size_t p = 0; p < pts.size(); ++p) {
        auto run = kernel.finish(base, pts[p].gamma);
        bool in_h = std::fabs(run.h) <= z;
        hits[p] += in_h ? (std::fabs(run.g_I) <= z) : (std::fabs(run.g_J) <= z);
      }
    }
    for (std::size_t p = 0; p < pts.size(); ++p) {
      double mc = hits[p] / m;
      double exact = hpl::cpk_exact(s, pts[p].gamma, pts[p].nu, 0.05, 0.05);
      double se = std::sqrt(exact * (1.0 - exact) / m);
      if (std::fabs(mc - exact) > 4.0 * se) {
        ok = false;
        detail << " (gamma=" << pts[p].gamma << ",nu=" << pts[p].nu << ": mc=" << mc
               << " exact=" << exact << ")";
      }
    }
    ++seed;
  }
  report(2, ok, ok ? "9 points, M=1e6, 4 SE" : detail.str());
}

// ---------------------------------------------------------------- criterion 3
void criterion_3(const hpl::CovariateSummary& s) {
  const long m = 100000;
  const double tol = 4.0 / std::sqrt(static_cast<double>(m));
  bool ok = true;
  std::ostringstream detail;
  std::uint64_t seed = 2001;
  for (auto [gamma, nu] : {std::pair{0.0, 0.5}, {0.5, 0.5}, {1.0, 1.0}, {-1.0, 1.0},
                           {2.0, 2.0}, {0.25, 4.0}}) {
    hpl::SimConfig cfg;
    cfg.m_runs = m;
    cfg.seed = seed++;
    auto runs = hpl::simulate_kernel(s, gamma, nu, cfg);
    double sI = 0, sJ = 0, sh = 0, sJh = 0, sIh = 0, sII = 0, sJJ = 0, shh = 0;
    for (const auto& r : runs) {
      sI += r.g_I;
      sJ += r.g_J;
      sh += r.h;
      sII += r.g_I * r.g_I;
      sJJ += r.g_J * r.g_J;
      shh += r.h * r.h;
      sJh += r.g_J * r.h;
      sIh += r.g_I * r.h;
    }
    double mI = sI / m, mJ = sJ / m, mh = sh / m;
    double vI = sII / m - mI * mI, vJ = sJJ / m - mJ * mJ, vh = shh / m - mh * mh;
    double cJh = (sJh / m - mJ * mh) / std::sqrt(vJ * vh);
    double cIh = (sIh / m - mI * mh) / std::sqrt(vI * vh);
    auto want = hpl::theory_moments(s, gamma, nu);
    bool point_ok = std::fabs(mI - want.mean_gI) <= tol && std::fabs(mJ) <= tol &&
                    std::fabs(mh - want.mean_h) <= tol &&
                    std::fabs(cJh - want.corr_gJ_h) <= tol && std::fabs(cIh) <= tol;
    if (!point_ok) {
      ok = false;
      detail << " (gamma=" << gamma << ",nu=" << nu << ")";
    }
  }
  report(3, ok, ok ? "6 points, M=1e5, 4 SE" : "mismatch at" + detail.str());
}

// ---------------------------------------------------------------- criterion 4
void criterion_4(const hpl::CovariateSummary& s) {
  bool ok = true;
  std::ostringstream detail;
  std::uint64_t seed = 3001;
  for (double nu : {0.5, 2.0}) {
    for (double g : {0.5, 1.0, 2.0, 5.0}) {
      hpl::SimConfig cfg_pos, cfg_neg;
      cfg_pos.m_runs = cfg_neg.m_runs = 20000;
      cfg_pos.seed = seed++;
      cfg_neg.seed = seed++;
      auto cp_pos = hpl::estimate_cp(s, g, nu, cfg_pos, hpl::Method::brute);
      auto cp_neg = hpl::estimate_cp(s, -g, nu, cfg_neg, hpl::Method::brute);
      double comb = std::hypot(cp_pos.std_error, cp_neg.std_error);
      if (std::fabs(cp_pos.value - cp_neg.value) > 3.0 * comb) {
        ok = false;
        detail << " (CP g=" << g << ",nu=" << nu << ")";
      }
      auto sel_pos = hpl::estimate_sel(s, g, nu, 0.95, cfg_pos, hpl::Method::brute);
      auto sel_neg = hpl::estimate_sel(s, -g, nu, 0.95, cfg_neg, hpl::Method::brute);
      comb = std::hypot(sel_pos.std_error, sel_neg.std_error);
      if (std::fabs(sel_pos.value - sel_neg.value) > 3.0 * comb) {
        ok = false;
        detail << " (SEL g=" << g << ",nu=" << nu << ")";
      }
    }
  }
  report(4, ok, ok ? "CP and SEL even in g, 8 points each" : "asymmetry at" + detail.str());
}

// ---------------------------------------------------------------- criterion 5
void criterion_5(const hpl::CovariateSummary& ref_summary) {
  const int m = 20000;
  // Sample 1: standardized kernel, nu = 1, sigma_eps = 1 implicit.
  hpl::SimConfig cfg;
  cfg.m_runs = m;
  cfg.seed = 4001;
  std::vector<double> kernel_pivots;
  kernel_pivots.reserve(m);
  for (const auto& r : hpl::simulate_kernel(ref_summary, 0.0, 1.0, cfg))
    kernel_pivots.push_back(r.pivot);

  // Sample 2: full data-level pipeline at nu = 5, sigma_eps = 3.
  std::mt19937 rng(4002);
  auto d = test_support::random_covariate(20, 4, rng);
  // Match the reference covariate geometry exactly so the two samples share
  // (SSB, SSW, N, T).
  auto s0 = hpl::summarize(d);
  double scale_b = std::sqrt(ref_summary.ssb / s0.ssb);
  double scale_w = std::sqrt(ref_summary.ssw / s0.ssw);
  for (int i = 0; i < d.n_units; ++i)
    for (int t = 0; t < d.n_periods; ++t)
      d.x[i * d.n_periods + t] = scale_b * s0.unit_means[i] +
                                 scale_w * (d.x_at(i, t) - s0.unit_means[i]);
  auto s = hpl::summarize(d);

  const double nu_true = 5.0, sigma_eps = 3.0, inv_t = 1.0 / d.n_periods;
  std::vector<double> data_pivots;
  data_pivots.reserve(m);
  for (int rep = 0; rep < m; ++rep) {
    auto panel = d;
    test_support::add_response(panel, 0.3, 1.1, 0.6, sigma_eps,
                               sigma_eps * std::sqrt(nu_true), rng);
    auto w = hpl::fit_within(panel, s);
    auto b = hpl::fit_between(panel, s);
    auto vc = hpl::estimate_variance_components(w, b, d.n_periods);
    data_pivots.push_back((vc.nu_hat + inv_t) / (nu_true + inv_t));
  }

  double ks = test_support::ks_statistic(kernel_pivots, data_pivots);
  double crit = test_support::ks_critical(0.01, kernel_pivots.size(), data_pivots.size());
  std::ostringstream detail;
  detail << "KS=" << ks << " crit(1%)=" << crit;
  report(5, ks < crit, detail.str());
}

// ---------------------------------------------------------------- criterion 6
void criterion_6(const hpl::CovariateSummary& s) {
  const double nu_true = 2.0;
  const int outer = 500;
  const long inner_m = 1999;
  hpl::Kernel kernel(s, nu_true);
  int covered = 0;
  for (int rep = 0; rep < outer; ++rep) {
    hpl::RunStream rs(5001, 1, static_cast<std::uint64_t>(rep));
    auto base = kernel.draw(rs);
    hpl::SimConfig inner;
    inner.m_runs = inner_m;
    inner.seed = 6001 + static_cast<std::uint64_t>(rep);
    double probs[2] = {0.05, 0.95};  // 1 - alpha_bar = 0.90
    auto f = hpl::pivot_quantiles(s, inner, probs);
    auto iv = hpl::nu_confidence_interval(base.nu_hat, s.n_periods, f[0], f[1]);
    if (iv.contains(nu_true)) ++covered;
  }
  double coverage = static_cast<double>(covered) / outer;
  std::ostringstream detail;
  detail << "coverage=" << coverage << " target 0.90 in [0.87, 0.93]";
  report(6, coverage >= 0.87 && coverage <= 0.93, detail.str());
}

// ---------------------------------------------------------------- criterion 7
void criterion_7(const hpl::CovariateSummary& s) {
  bool ok = true;
  std::ostringstream detail;
  detail.setf(std::ios::fixed);
  detail.precision(2);
  std::uint64_t seed = 7001;
  detail << "variance ratios:";
  for (auto [gamma, nu] : {std::pair{0.0, 0.5}, {0.0, 2.0}, {1.0, 1.0}, {2.0, 0.5},
                           {3.0, 2.0}, {0.5, 4.0}}) {
    hpl::SimConfig cfg_b, cfg_c;
    cfg_b.m_runs = cfg_c.m_runs = 20000;
    cfg_b.seed = seed++;
    cfg_c.seed = seed++;
    auto brute = hpl::estimate_cp(s, gamma, nu, cfg_b, hpl::Method::brute);
    auto cv = hpl::estimate_cp(s, gamma, nu, cfg_c, hpl::Method::control_variate);
    double comb = std::hypot(brute.std_error, cv.std_error);
    if (std::fabs(brute.value - cv.value) > 3.0 * comb) ok = false;
    double ratio = (brute.std_error * brute.std_error) / (cv.std_error * cv.std_error);
    detail << " " << ratio;
  }
  report(7, ok, detail.str());
}

// ---------------------------------------------------------------- criterion 8
void criterion_8(const hpl::CovariateSummary& s) {
  const double nu = 1.0;
  double gamma = gamma_for_mean_h(s, nu, 8.0);
  hpl::SimConfig cfg;
  cfg.m_runs = 50000;
  cfg.seed = 8001;
  auto est = hpl::estimate_cp(s, gamma, nu, cfg, hpl::Method::brute);
  double exact = hpl::cpk_exact(s, gamma, nu, 0.05, 0.05);
  std::ostringstream detail;
  detail << "cp=" << est.value << " cpk=" << exact;
  report(8, std::fabs(est.value - 0.95) <= 0.01 && std::fabs(exact - 0.95) <= 1e-10,
         detail.str());
}

// ---------------------------------------------------------------- criterion 9
void criterion_9(const hpl::CovariateSummary& s) {
  const long m = 100000;
  hpl::SimConfig cfg;
  cfg.m_runs = m;
  cfg.seed = 9001;
  const double z2 = std::pow(hpl::norm_quantile(0.975), 2);
  long rejections = 0;
  // With known variances the pretest statistic equals h^2, chi-square(1) at
  // gamma = 0.
  for (const auto& r : hpl::simulate_kernel(s, 0.0, 1.0, cfg))
    if (r.h * r.h > z2) ++rejections;
  double rate = static_cast<double>(rejections) / m;
  std::ostringstream detail;
  detail << "P(H > z^2) = " << rate;
  report(9, std::fabs(rate - 0.05) <= 0.003, detail.str());
}

// --------------------------------------------------------------- criterion 10
std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_10(const std::string& cli) {
  // Fixture files.
  const std::string summary_path = "acc_summary.json";
  const std::string data_path = "acc_data.csv";
  {
    std::ofstream out(summary_path);
    out << "{\"n_units\": 20, \"n_periods\": 4, \"ssb\": 30.0, \"ssw\": 12.0}\n";
    std::ofstream csv(data_path);
    csv << "id,t,x,y\n";
    csv << "a,1,0,1.0\na,2,1,2.0\nb,1,1,2.5\nb,2,3,6.1\nc,1,2,3.0\nc,2,5,8.2\n";
  }
  std::vector<std::string> commands = {
      cli + " cpk --summary " + summary_path + " --gamma 1 --nu 1",
      cli + " cp --summary " + summary_path + " --gamma 0 --gamma 1 --nu 1 --m 2000",
      cli + " sel --summary " + summary_path + " --gamma 1 --nu 1 --m 2000 --method brute",
      cli + " nu-ci --summary " + summary_path + " --nu-hat 2 --m 1999",
      cli + " estimate --data " + data_path + " --y-col y",
      cli + " two-stage --data " + data_path + " --y-col y",
      cli + " sweep --summary " + summary_path + " --nu-grid 0.5 --nu-grid 1 --m 1000",
      cli + " density --summary " + summary_path + " --gamma 0 --nu 1 --m 500 --which gamma",
  };
  bool ok = true;
  std::ostringstream detail;
  int idx = 0;
  for (const auto& cmd : commands) {
    std::string f1 = "acc_out_a.txt", f2 = "acc_out_b.txt", f3 = "acc_out_c.txt";
    int rc1 = std::system(("HPL_THREADS=1 " + cmd + " > " + f1 + " 2>&1").c_str());
    int rc2 = std::system(("HPL_THREADS=1 " + cmd + " > " + f2 + " 2>&1").c_str());
    int rc3 = std::system(("HPL_THREADS=3 " + cmd + " > " + f3 + " 2>&1").c_str());
    std::string o1 = slurp(f1), o2 = slurp(f2), o3 = slurp(f3);
    if (rc1 != 0 || rc2 != 0 || rc3 != 0 || o1.empty() || o1 != o2 || o1 != o3) {
      ok = false;
      detail << " [command " << idx << " rc=" << rc1 << "/" << rc2 << "/" << rc3
             << (o1 != o2 ? " rerun-differs" : "") << (o1 != o3 ? " threads-differ" : "")
             << "]";
    }
    ++idx;
  }
  std::remove("acc_out_a.txt");
  std::remove("acc_out_b.txt");
  std::remove("acc_out_c.txt");
  std::remove(summary_path.c_str());
  std::remove(data_path.c_str());
  report(10, ok,
         ok ? "8 commands byte-identical across reruns and worker counts" : detail.str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::cerr << "usage: acceptance <path-to-cli> [airfare.csv]\n";
    return 2;
  }
  std::string cli = argv[1];
  std::string airfare = argc > 2 ? argv[2] : "";
  if (airfare.empty()) {
    if (const char* env = std::getenv("AIRFARE_CSV")) airfare = env;
  }
  if (airfare.empty()) {
    for (const char* cand : {"airfare.csv", "data/airfare.csv", "../airfare.csv"}) {
      std::ifstream probe(cand);
      if (probe) {
        airfare = cand;
        break;
      }
    }
  }

  auto s = synthetic_summary();
  criterion_1(airfare);
  criterion_2(s);
  criterion_3(s);
  criterion_4(s);
  criterion_5(s);
  criterion_6(s);
  criterion_7(s);
  criterion_8(s);
  criterion_9(s);
  criterion_10(cli);

  if (g_failures > 0) {
    std::cout << g_failures << " criterion(s) failed\n";
    return 1;
  }
  std::cout << "all evaluated criteria passed\n";
  return 0;
}
