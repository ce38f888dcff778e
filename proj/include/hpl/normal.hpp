#pragma once

namespace hpl {

// Standard normal density, cdf and inverse cdf.
// The inverse cdf is a rational approximation refined by one Halley step,
// accurate to near machine precision over (0, 1).
double norm_pdf(double x);
double norm_cdf(double x);
double norm_quantile(double p);

}  // namespace hpl
