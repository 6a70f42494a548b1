#pragma once

#include <string>

#include "exactmeta/univariate.hpp"

namespace exactmeta::cmp {

struct MethodResult {
  std::string method;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double tau2 = 0.0;
};

// DerSimonian-Laird moment estimator with a normal Wald interval.
MethodResult dl_interval(const uni::UnivariateData& data, double alpha);

// REML variance estimate for the univariate model.
double reml_tau2(const uni::UnivariateData& data);

MethodResult reml_interval_uni(const uni::UnivariateData& data, double alpha);

// Knapp-Hartung: REML tau2, scaled variance, t(k-1) quantile.
MethodResult knha_interval(const uni::UnivariateData& data, double alpha);

// Profile-likelihood interval from inverting T(mu0) <= chi2(1, 1-alpha).
MethodResult lr_interval_uni(const uni::UnivariateData& data, double alpha);

}  // namespace exactmeta::cmp
