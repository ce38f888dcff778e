#include "hpl/inference.hpp"

#include <cmath>

#include "hpl/normal.hpp"

namespace hpl {

double hausman_statistic(const GlsFit& fit, const WithinFit& within, const BetweenFit& between) {
  double var_sum = fit.var_bw_given_x + fit.var_bb_given_x;
  if (var_sum <= 0.0) throw EstimationError("hausman_statistic: nonpositive variance sum");
  double d = within.b_within - between.b_between;
  return d * d / var_sum;
}

Interval build_interval(IntervalKind kind, const GlsFit& fit, const WithinFit& within,
                        double level_or_c) {
  double center, sd, quantile;
  switch (kind) {
    case IntervalKind::I:
      if (!(level_or_c > 0.0 && level_or_c < 1.0))
        throw EstimationError("build_interval: level must be in (0, 1)");
      center = fit.b_hat;
      sd = std::sqrt(fit.var_bhat_given_x);
      quantile = norm_quantile((1.0 + level_or_c) / 2.0);
      break;
    case IntervalKind::J:
      if (!(level_or_c > 0.0 && level_or_c < 1.0))
        throw EstimationError("build_interval: level must be in (0, 1)");
      center = within.b_within;
      sd = std::sqrt(fit.var_bw_given_x);
      quantile = norm_quantile((1.0 + level_or_c) / 2.0);
      break;
    case IntervalKind::Jc:
      if (!(level_or_c >= 0.5 && level_or_c < 1.0))
        throw EstimationError("build_interval: c must be in [1/2, 1)");
      center = within.b_within;
      sd = std::sqrt(fit.var_bw_given_x);
      quantile = norm_quantile((level_or_c + 1.0) / 2.0);
      break;
    default:
      throw EstimationError("build_interval: unknown kind");
  }
  return Interval{center - quantile * sd, center + quantile * sd};
}

TwoStageResult two_stage(const GlsFit& fit, const WithinFit& within, const BetweenFit& between,
                         double alpha, double alpha_h) {
  if (!(alpha > 0.0 && alpha < 1.0) || !(alpha_h > 0.0 && alpha_h < 1.0))
    throw EstimationError("two_stage: alpha and alpha_h must be in (0, 1)");
  TwoStageResult res;
  res.hausman_stat = hausman_statistic(fit, within, between);
  double z = norm_quantile(1.0 - alpha_h / 2.0);
  res.accepted_null = res.hausman_stat <= z * z;
  res.interval_used = res.accepted_null ? IntervalKind::I : IntervalKind::J;
  res.interval = build_interval(res.interval_used, fit, within, 1.0 - alpha);
  return res;
}

}  // namespace hpl
