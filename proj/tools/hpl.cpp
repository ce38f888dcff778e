#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "hpl/analysis.hpp"
#include "hpl/estimators.hpp"
#include "hpl/inference.hpp"
#include "hpl/mc.hpp"
#include "hpl/normal.hpp"
#include "hpl/panel.hpp"
#include "hpl/theory.hpp"

namespace {

using nlohmann::ordered_json;

struct CommonOpts {
  std::string data_path;
  hpl::ColumnMap cols;
  std::string summary_path;
  std::string emit_summary_path;
  std::string output_path;
  int precision = 6;
  hpl::SimConfig cfg;
  std::string method = "cv";
};

void add_common(CLI::App* cmd, CommonOpts& o, bool with_sim) {
  cmd->add_option("--data", o.data_path, "long-format CSV dataset");
  cmd->add_option("--id-col", o.cols.id, "unit id column name")->capture_default_str();
  cmd->add_option("--time-col", o.cols.time, "time index column name")->capture_default_str();
  cmd->add_option("--x-col", o.cols.x, "covariate column name")->capture_default_str();
  cmd->add_option("--y-col", o.cols.y, "response column name (optional)");
  cmd->add_option("--summary", o.summary_path, "covariate summary JSON (replaces --data)");
  cmd->add_option("--emit-summary", o.emit_summary_path,
                  "write the covariate summary JSON to this path");
  cmd->add_option("--output", o.output_path, "output path (default: stdout)");
  cmd->add_option("--precision", o.precision, "significant digits in output")
      ->capture_default_str();
  if (with_sim) {
    cmd->add_option("--m", o.cfg.m_runs, "simulation runs M")->capture_default_str();
    cmd->add_option("--seed", o.cfg.seed, "RNG seed")->capture_default_str();
    cmd->add_option("--alpha", o.cfg.alpha, "alpha (nominal coverage 1-alpha)")
        ->capture_default_str();
    cmd->add_option("--alpha-h", o.cfg.alpha_h, "Hausman pretest level")->capture_default_str();
    cmd->add_option("--alpha-bar", o.cfg.alpha_bar, "nu-interval level (1 - alpha_bar coverage)")
        ->capture_default_str();
    cmd->add_option("--method", o.method, "estimator: brute or cv")
        ->check(CLI::IsMember({"brute", "cv"}))
        ->capture_default_str();
  }
}

hpl::Method method_of(const CommonOpts& o) {
  return o.method == "brute" ? hpl::Method::brute : hpl::Method::control_variate;
}

std::string fmt_num(double v, int prec) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
  return buf;
}

// Round to the output precision before serializing, so the printed document
// carries exactly the requested significant digits.
double rounded(double v, int prec) { return std::strtod(fmt_num(v, prec).c_str(), nullptr); }

void emit(const CommonOpts& o, const std::string& text) {
  if (o.output_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream out(o.output_path);
    if (!out) throw std::runtime_error("cannot open output path: " + o.output_path);
    out << text;
  }
}

hpl::CovariateSummary load_summary_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open summary file: " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  hpl::CovariateSummary s;
  s.n_units = j.at("n_units").get<int>();
  s.n_periods = j.at("n_periods").get<int>();
  s.ssb = j.at("ssb").get<double>();
  s.ssw = j.at("ssw").get<double>();
  if (s.n_units < 2 || s.n_periods < 2 || !(s.ssb > 0.0) || !(s.ssw > 0.0))
    throw std::runtime_error("invalid summary file: need n_units, n_periods >= 2 and ssb, ssw > 0");
  s.ratio_r = s.ssb / s.ssw;
  return s;
}

// Data holder for one invocation: summary always available, panel only when
// raw data was supplied.
struct Inputs {
  hpl::CovariateSummary summary;
  std::optional<hpl::PanelData> data;
};

Inputs load_inputs(const CommonOpts& o, bool need_data) {
  Inputs in;
  if (!o.data_path.empty()) {
    in.data = hpl::load_panel_file(o.data_path, o.cols);
    in.summary = hpl::summarize(*in.data);
  } else if (!o.summary_path.empty()) {
    if (need_data) throw CLI::ValidationError("--data", "this command requires raw data");
    in.summary = load_summary_json(o.summary_path);
  } else {
    throw CLI::ValidationError("--data", "either --data or --summary is required");
  }
  if (!o.emit_summary_path.empty()) {
    ordered_json j;
    j["n_units"] = in.summary.n_units;
    j["n_periods"] = in.summary.n_periods;
    j["ssb"] = in.summary.ssb;
    j["ssw"] = in.summary.ssw;
    j["ratio_r"] = in.summary.ratio_r;
    std::ofstream out(o.emit_summary_path);
    if (!out) throw std::runtime_error("cannot open summary output: " + o.emit_summary_path);
    out << j.dump(2) << "\n";
  }
  return in;
}

std::string json_text(const ordered_json& j) { return j.dump(2) + "\n"; }

ordered_json estimate_json(const hpl::MCEstimate& e, int prec) {
  ordered_json j;
  j["value"] = rounded(e.value, prec);
  j["std_error"] = rounded(e.std_error, prec);
  j["m_runs"] = e.m_runs;
  j["method"] = e.method == hpl::Method::brute ? "brute" : "cv";
  j["invalid_runs"] = e.invalid_runs;
  return j;
}

ordered_json interval_json(const hpl::Interval& iv, int prec) {
  ordered_json j;
  j["lower"] = rounded(iv.lower, prec);
  j["upper"] = rounded(iv.upper, prec);
  return j;
}

double nu_hat_from(const CommonOpts& o, const Inputs& in, std::optional<double> nu_hat_flag) {
  if (nu_hat_flag) return *nu_hat_flag;
  if (!in.data || !in.data->has_y())
    throw CLI::ValidationError("--nu-hat", "need --nu-hat or --data with --y-col");
  auto fits = hpl::fit_all(*in.data, in.summary);
  (void)o;
  return fits.vc.nu_hat;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional assessment of the Hausman-pretest confidence procedure"};
  app.require_subcommand(1);

  // estimate
  auto o_est = std::make_shared<CommonOpts>();
  auto* c_est = app.add_subcommand("estimate", "point and variance-component estimates");
  add_common(c_est, *o_est, false);

  // two-stage
  auto o_ts = std::make_shared<CommonOpts>();
  auto* c_ts = app.add_subcommand("two-stage", "Hausman pretest + selected interval");
  add_common(c_ts, *o_ts, true);

  // cpk
  auto o_cpk = std::make_shared<CommonOpts>();
  auto* c_cpk = app.add_subcommand("cpk", "exact known-variance coverage probability");
  add_common(c_cpk, *o_cpk, true);
  double cpk_gamma = 0.0, cpk_nu = 1.0;
  c_cpk->add_option("--gamma", cpk_gamma, "scaled non-exogeneity parameter")->required();
  c_cpk->add_option("--nu", cpk_nu, "variance ratio nu")->required();

  // cp
  auto o_cp = std::make_shared<CommonOpts>();
  auto* c_cp = app.add_subcommand("cp", "Monte Carlo conditional coverage probability");
  add_common(c_cp, *o_cp, true);
  std::vector<double> cp_gammas;
  double cp_nu = 1.0;
  c_cp->add_option("--gamma", cp_gammas, "gamma value(s); several values emit a CSV curve")
      ->required();
  c_cp->add_option("--nu", cp_nu, "variance ratio nu")->required();

  // sel
  auto o_sel = std::make_shared<CommonOpts>();
  auto* c_sel = app.add_subcommand("sel", "Monte Carlo scaled expected length");
  add_common(c_sel, *o_sel, true);
  std::vector<double> sel_gammas;
  double sel_nu = 1.0, sel_c = 0.95;
  c_sel->add_option("--gamma", sel_gammas, "gamma value(s); several values emit a CSV curve")
      ->required();
  c_sel->add_option("--nu", sel_nu, "variance ratio nu")->required();
  c_sel->add_option("--c-star", sel_c, "benchmark coverage c* of J_c")->capture_default_str();

  // nu-ci
  auto o_nuci = std::make_shared<CommonOpts>();
  auto* c_nuci = app.add_subcommand("nu-ci", "equi-tailed confidence interval for nu");
  add_common(c_nuci, *o_nuci, true);
  o_nuci->cfg.m_runs = 9999;  // (alpha_bar/2)(M+1) must be an integer
  std::optional<double> nuci_nu_hat;
  c_nuci->add_option("--nu-hat", nuci_nu_hat, "nu_hat (skips fitting --data)");

  // density
  auto o_den = std::make_shared<CommonOpts>();
  auto* c_den = app.add_subcommand("density", "density of the plug-in coverage probability");
  add_common(c_den, *o_den, true);
  double den_gamma = 0.0, den_nu = 1.0;
  std::string den_which = "nu";
  c_den->add_option("--gamma", den_gamma, "true gamma")->required();
  c_den->add_option("--nu", den_nu, "true nu")->required();
  c_den->add_option("--which", den_which, "plug-in: nu or gamma")
      ->check(CLI::IsMember({"nu", "gamma"}))
      ->capture_default_str();

  // sweep
  auto o_sw = std::make_shared<CommonOpts>();
  auto* c_sw = app.add_subcommand("sweep", "min_g CP (and optionally SEL) over a nu grid");
  add_common(c_sw, *o_sw, true);
  std::vector<double> sw_nus;
  std::optional<double> sw_sel_c;
  c_sw->add_option("--nu-grid", sw_nus, "ascending nu values")->required();
  c_sw->add_option("--with-sel-c", sw_sel_c, "also report min_g SEL at this c*");

  // confcoef
  auto o_cc = std::make_shared<CommonOpts>();
  auto* c_cc = app.add_subcommand("confcoef", "confidence coefficient (inf over g and n of CP)");
  add_common(c_cc, *o_cc, true);
  double cc_floor = 1e-4;
  c_cc->add_option("--nu-floor", cc_floor, "smallest nu evaluated")->capture_default_str();

  // min-cp-ci
  auto o_mcp = std::make_shared<CommonOpts>();
  auto* c_mcp = app.add_subcommand("min-cp-ci", "confidence interval for min_g CP(g, nu)");
  add_common(c_mcp, *o_mcp, true);
  std::optional<double> mcp_nu_hat;
  long mcp_m_pivot = 9999;
  bool mcp_dense = false;
  c_mcp->add_option("--nu-hat", mcp_nu_hat, "nu_hat (skips fitting --data)");
  c_mcp->add_option("--m-pivot", mcp_m_pivot, "runs for the pivot quantiles")
      ->capture_default_str();
  c_mcp->add_flag("--dense", mcp_dense, "evaluate an inner nu grid instead of endpoints only");

  // min-sel-ci
  auto o_msel = std::make_shared<CommonOpts>();
  auto* c_msel = app.add_subcommand("min-sel-ci", "confidence interval for min_g SEL(g, nu)");
  add_common(c_msel, *o_msel, true);
  std::optional<double> msel_nu_hat;
  long msel_m_pivot = 9999;
  bool msel_dense = false;
  c_msel->add_option("--nu-hat", msel_nu_hat, "nu_hat (skips fitting --data)");
  c_msel->add_option("--m-pivot", msel_m_pivot, "runs for the pivot quantiles")
      ->capture_default_str();
  c_msel->add_flag("--dense", msel_dense, "evaluate an inner nu grid instead of endpoints only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*c_est) {
      const auto& o = *o_est;
      auto in = load_inputs(o, true);
      if (!in.data->has_y()) throw std::runtime_error("estimate requires --y-col");
      auto f = hpl::fit_all(*in.data, in.summary);
      ordered_json j;
      int p = o.precision;
      j["b_within"] = rounded(f.within.b_within, p);
      j["b_between"] = rounded(f.between.b_between, p);
      j["b_gls"] = rounded(f.gls.b_hat, p);
      j["w_hat"] = rounded(f.gls.w_hat, p);
      j["sigma_eps2"] = rounded(f.vc.sigma_eps2, p);
      j["sigma_eta2"] = rounded(f.vc.sigma_eta2, p);
      j["nu_hat"] = rounded(f.vc.nu_hat, p);
      j["gamma_hat"] = rounded(f.gls.gamma_hat, p);
      emit(o, json_text(j));
    } else if (*c_ts) {
      const auto& o = *o_ts;
      auto in = load_inputs(o, true);
      if (!in.data->has_y()) throw std::runtime_error("two-stage requires --y-col");
      auto f = hpl::fit_all(*in.data, in.summary);
      auto res = hpl::two_stage(f.gls, f.within, f.between, o.cfg.alpha, o.cfg.alpha_h);
      ordered_json j;
      j["hausman_stat"] = rounded(res.hausman_stat, o.precision);
      j["accepted"] = res.accepted_null;
      j["interval"] = interval_json(res.interval, o.precision);
      j["used"] = res.interval_used == hpl::IntervalKind::I ? "I" : "J";
      emit(o, json_text(j));
    } else if (*c_cpk) {
      const auto& o = *o_cpk;
      auto in = load_inputs(o, false);
      auto m = hpl::theory_moments(in.summary, cpk_gamma, cpk_nu);
      double cpk = hpl::cpk_exact(in.summary, cpk_gamma, cpk_nu, o.cfg.alpha, o.cfg.alpha_h);
      ordered_json j;
      int p = o.precision;
      j["cpk"] = rounded(cpk, p);
      j["mean_gI"] = rounded(m.mean_gI, p);
      j["mean_h"] = rounded(m.mean_h, p);
      j["corr_gJ_h"] = rounded(m.corr_gJ_h, p);
      j["w"] = rounded(m.w, p);
      emit(o, json_text(j));
    } else if (*c_cp) {
      const auto& o = *o_cp;
      auto in = load_inputs(o, false);
      auto curve = hpl::cp_curve(in.summary, cp_gammas, cp_nu, o.cfg, method_of(o));
      if (curve.size() == 1) {
        emit(o, json_text(estimate_json(curve[0], o.precision)));
      } else {
        std::ostringstream csv;
        csv << "gamma,nu,estimate,std_error,method\n";
        for (std::size_t g = 0; g < curve.size(); ++g)
          csv << fmt_num(cp_gammas[g], o.precision) << ',' << fmt_num(cp_nu, o.precision) << ','
              << fmt_num(curve[g].value, o.precision) << ','
              << fmt_num(curve[g].std_error, o.precision) << ',' << o.method << "\n";
        emit(o, csv.str());
      }
    } else if (*c_sel) {
      const auto& o = *o_sel;
      auto in = load_inputs(o, false);
      auto curve = hpl::sel_curve(in.summary, sel_gammas, sel_nu, sel_c, o.cfg, method_of(o));
      if (curve.size() == 1) {
        emit(o, json_text(estimate_json(curve[0], o.precision)));
      } else {
        std::ostringstream csv;
        csv << "gamma,nu,estimate,std_error,method\n";
        for (std::size_t g = 0; g < curve.size(); ++g)
          csv << fmt_num(sel_gammas[g], o.precision) << ',' << fmt_num(sel_nu, o.precision) << ','
              << fmt_num(curve[g].value, o.precision) << ','
              << fmt_num(curve[g].std_error, o.precision) << ',' << o.method << "\n";
        emit(o, csv.str());
      }
    } else if (*c_nuci) {
      const auto& o = *o_nuci;
      auto in = load_inputs(o, !nuci_nu_hat.has_value());
      double nu_hat = nu_hat_from(o, in, nuci_nu_hat);
      double probs[2] = {o.cfg.alpha_bar / 2.0, 1.0 - o.cfg.alpha_bar / 2.0};
      auto f = hpl::pivot_quantiles(in.summary, o.cfg, probs);
      auto iv = hpl::nu_confidence_interval(nu_hat, in.summary.n_periods, f[0], f[1]);
      ordered_json j;
      int p = o.precision;
      j["nu_hat"] = rounded(nu_hat, p);
      j["f_lo"] = rounded(f[0], p);
      j["f_hi"] = rounded(f[1], p);
      j["interval"] = interval_json(iv, p);
      emit(o, json_text(j));
    } else if (*c_den) {
      const auto& o = *o_den;
      auto in = load_inputs(o, false);
      hpl::CpGrid grid;
      if (den_which == "nu") {
        grid.param = hpl::nu_grid_around(den_nu);
        for (double nu : grid.param)
          grid.cp.push_back(
              hpl::estimate_cp(in.summary, den_gamma, nu, o.cfg, method_of(o)).value);
      } else {
        grid.param = hpl::gamma_grid_full(in.summary, den_nu);
        auto curve = hpl::cp_curve(in.summary, grid.param, den_nu, o.cfg, method_of(o));
        for (const auto& e : curve) grid.cp.push_back(e.value);
      }
      auto which =
          den_which == "nu" ? hpl::PlugIn::nu_hat_plugin : hpl::PlugIn::gamma_hat_plugin;
      auto de = hpl::density_cp(in.summary, den_gamma, den_nu, which, o.cfg, grid);
      std::ostringstream csv;
      csv << "# bandwidth=" << fmt_num(de.bandwidth, o.precision) << " clamped=" << de.clamped
          << "\n";
      csv << "cp,density\n";
      for (std::size_t i = 0; i < de.grid.size(); ++i)
        csv << fmt_num(de.grid[i], o.precision) << ',' << fmt_num(de.density[i], o.precision)
            << "\n";
      emit(o, csv.str());
    } else if (*c_sw) {
      const auto& o = *o_sw;
      auto in = load_inputs(o, false);
      auto rows = hpl::sweep_curve(in.summary, o.cfg, sw_nus, sw_sel_c);
      std::ostringstream csv;
      csv << "nu,min_cp,min_cp_se,argmin_gamma";
      if (sw_sel_c) csv << ",min_sel,min_sel_se";
      csv << "\n";
      for (const auto& row : rows) {
        csv << fmt_num(row.nu, o.precision) << ',' << fmt_num(row.min_cp.value, o.precision)
            << ',' << fmt_num(row.min_cp.std_error, o.precision) << ','
            << fmt_num(row.argmin_gamma, o.precision);
        if (row.min_sel)
          csv << ',' << fmt_num(row.min_sel->value, o.precision) << ','
              << fmt_num(row.min_sel->std_error, o.precision);
        csv << "\n";
      }
      emit(o, csv.str());
    } else if (*c_cc) {
      const auto& o = *o_cc;
      auto in = load_inputs(o, false);
      auto res = hpl::confidence_coefficient(in.summary, o.cfg, cc_floor);
      ordered_json j;
      j["value"] = rounded(res.value, o.precision);
      j["std_error"] = rounded(res.std_error, o.precision);
      j["at_nu"] = rounded(res.at_nu, o.precision);
      j["still_decreasing"] = res.still_decreasing;
      emit(o, json_text(j));
    } else if (*c_mcp) {
      const auto& o = *o_mcp;
      auto in = load_inputs(o, !mcp_nu_hat.has_value());
      double nu_hat = nu_hat_from(o, in, mcp_nu_hat);
      auto res = hpl::ci_for_min_cp(in.summary, nu_hat, o.cfg, mcp_m_pivot, mcp_dense);
      ordered_json j;
      j["nu_hat"] = rounded(nu_hat, o.precision);
      j["nu_interval"] = interval_json(res.nu_interval, o.precision);
      j["interval"] = interval_json(res.interval, o.precision);
      j["non_monotone"] = res.non_monotone;
      emit(o, json_text(j));
    } else if (*c_msel) {
      const auto& o = *o_msel;
      auto in = load_inputs(o, !msel_nu_hat.has_value());
      double nu_hat = nu_hat_from(o, in, msel_nu_hat);
      auto res = hpl::ci_for_min_sel(in.summary, nu_hat, o.cfg, msel_m_pivot, msel_dense);
      ordered_json j;
      j["nu_hat"] = rounded(nu_hat, o.precision);
      j["nu_interval"] = interval_json(res.nu_interval, o.precision);
      j["interval"] = interval_json(res.interval, o.precision);
      j["c_star"] = rounded(res.c_star, o.precision);
      j["target_coverage"] = rounded(res.target_coverage, o.precision);
      emit(o, json_text(j));
    }
  } catch (const CLI::ValidationError& e) {
    std::cerr << "{\"error\": \"" << e.what() << "\"}\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "{\"error\": \"" << e.what() << "\"}\n";
    return 1;
  }
  return 0;
}
