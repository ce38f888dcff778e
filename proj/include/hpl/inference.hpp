#pragma once

#include "hpl/estimators.hpp"

namespace hpl {

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
  double width() const { return upper - lower; }
  bool contains(double v) const { return lower <= v && v <= upper; }
};

enum class IntervalKind { I, J, Jc };

struct TwoStageResult {
  double hausman_stat = 0.0;
  bool accepted_null = false;
  IntervalKind interval_used = IntervalKind::I;
  Interval interval;
};

double hausman_statistic(const GlsFit& fit, const WithinFit& within, const BetweenFit& between);

// kind I / J: level_or_c is the nominal coverage 1 - alpha in (0, 1).
// kind Jc: level_or_c is c in [1/2, 1); half-width quantile is PhiInv((c+1)/2).
Interval build_interval(IntervalKind kind, const GlsFit& fit, const WithinFit& within,
                        double level_or_c);

// Hausman pretest at level alpha_h selecting between I and J, both at nominal
// coverage 1 - alpha. A tie H == threshold resolves to acceptance.
TwoStageResult two_stage(const GlsFit& fit, const WithinFit& within, const BetweenFit& between,
                         double alpha, double alpha_h);

}  // namespace hpl
