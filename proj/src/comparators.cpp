#include "exactmeta/comparators.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>

#include "exactmeta/errors.hpp"
#include "exactmeta/optim.hpp"

namespace exactmeta::cmp {

namespace {

double z_quantile(double alpha) {
  boost::math::normal norm;
  return boost::math::quantile(norm, 1.0 - alpha / 2.0);
}

double tau2_search_cap(const uni::UnivariateData& data) {
  double mu = uni::weighted_mean(data, 0.0);
  double cap = 1e-3;
  for (int i = 0; i < data.k(); ++i) {
    double r = data.y[i] - mu;
    cap = std::max(cap, r * r);
  }
  return 10.0 * cap;
}

}  // namespace

MethodResult dl_interval(const uni::UnivariateData& data, double alpha) {
  data.validate();
  const int k = data.k();
  double sw = 0.0, sw2 = 0.0, swy = 0.0;
  for (int i = 0; i < k; ++i) {
    double w = 1.0 / data.sigma2[i];
    sw += w;
    sw2 += w * w;
    swy += w * data.y[i];
  }
  double ybar = swy / sw;
  double q = 0.0;
  for (int i = 0; i < k; ++i) {
    double r = data.y[i] - ybar;
    q += r * r / data.sigma2[i];
  }
  double tau2 = std::max(0.0, (q - (k - 1)) / (sw - sw2 / sw));

  double sv = 0.0, svy = 0.0;
  for (int i = 0; i < k; ++i) {
    double w = 1.0 / (tau2 + data.sigma2[i]);
    sv += w;
    svy += w * data.y[i];
  }
  MethodResult res;
  res.method = "dl";
  res.tau2 = tau2;
  res.estimate = svy / sv;
  double hw = z_quantile(alpha) / std::sqrt(sv);
  res.lower = res.estimate - hw;
  res.upper = res.estimate + hw;
  return res;
}

double reml_tau2(const uni::UnivariateData& data) {
  auto objective = [&](double tau2) {
    double mu = uni::weighted_mean(data, tau2);
    double sw = 0.0;
    for (int i = 0; i < data.k(); ++i) sw += 1.0 / (tau2 + data.sigma2[i]);
    return uni::deviance(data, mu, tau2) + std::log(sw);
  };
  double cap = tau2_search_cap(data);
  double tau2 = optim::golden_section(objective, 0.0, cap, 1e-10 * cap);
  if (objective(0.0) <= objective(tau2)) tau2 = 0.0;
  return tau2;
}

MethodResult reml_interval_uni(const uni::UnivariateData& data, double alpha) {
  data.validate();
  MethodResult res;
  res.method = "reml";
  res.tau2 = reml_tau2(data);
  double sw = 0.0, swy = 0.0;
  for (int i = 0; i < data.k(); ++i) {
    double w = 1.0 / (res.tau2 + data.sigma2[i]);
    sw += w;
    swy += w * data.y[i];
  }
  res.estimate = swy / sw;
  double hw = z_quantile(alpha) / std::sqrt(sw);
  res.lower = res.estimate - hw;
  res.upper = res.estimate + hw;
  return res;
}

MethodResult knha_interval(const uni::UnivariateData& data, double alpha) {
  data.validate();
  const int k = data.k();
  MethodResult res;
  res.method = "knha";
  res.tau2 = reml_tau2(data);
  double sw = 0.0, swy = 0.0;
  for (int i = 0; i < k; ++i) {
    double w = 1.0 / (res.tau2 + data.sigma2[i]);
    sw += w;
    swy += w * data.y[i];
  }
  res.estimate = swy / sw;
  double q = 0.0;
  for (int i = 0; i < k; ++i) {
    double w = 1.0 / (res.tau2 + data.sigma2[i]);
    double r = data.y[i] - res.estimate;
    q += w * r * r;
  }
  q /= (k - 1);
  boost::math::students_t tdist(k - 1);
  double tq = boost::math::quantile(tdist, 1.0 - alpha / 2.0);
  double hw = tq * std::sqrt(q / sw);
  res.lower = res.estimate - hw;
  res.upper = res.estimate + hw;
  return res;
}

MethodResult lr_interval_uni(const uni::UnivariateData& data, double alpha) {
  data.validate();
  uni::UniFit fit = uni::fit_ml(data);
  boost::math::chi_squared chi1(1);
  double crit = boost::math::quantile(chi1, 1.0 - alpha);

  auto excess = [&](double mu0) { return uni::lrt_mu(data, mu0) - crit; };

  double sw = 0.0;
  for (int i = 0; i < data.k(); ++i) sw += 1.0 / (fit.tau2 + data.sigma2[i]);
  double hw = z_quantile(alpha) / std::sqrt(sw);

  auto endpoint = [&](int dir) {
    double step = hw;
    double inner = fit.mu;
    double outer = inner;
    for (int e = 0; e < 60; ++e) {
      outer = fit.mu + dir * step;
      if (excess(outer) > 0.0) break;
      inner = outer;
      step *= 2.0;
      if (e == 59) throw numerical_error("lr_interval: bracket failed");
    }
    return optim::scalar_root(excess, std::min(inner, outer),
                              std::max(inner, outer),
                              excess(std::min(inner, outer)),
                              excess(std::max(inner, outer)), 1e-10);
  };

  MethodResult res;
  res.method = "lr";
  res.tau2 = fit.tau2;
  res.estimate = fit.mu;
  res.lower = endpoint(-1);
  res.upper = endpoint(+1);
  return res;
}

}  // namespace exactmeta::cmp
