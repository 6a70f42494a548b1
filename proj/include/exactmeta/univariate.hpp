#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "exactmeta/mc_core.hpp"

namespace exactmeta::uni {

// Per-study effect estimates with known within-study variances.
struct UnivariateData {
  std::vector<double> y;
  std::vector<double> sigma2;

  int k() const { return static_cast<int>(y.size()); }
  void validate() const;  // throws input_error
};

struct UniFit {
  double mu = 0.0;
  double tau2 = 0.0;
  double deviance = 0.0;
  bool converged = false;
  int iterations = 0;
};

// sum log(tau2+s2) + sum (y-mu)^2/(tau2+s2)
double deviance(const UnivariateData& data, double mu, double tau2);

// Profile score d(deviance)/d(tau2) = sum 1/v - sum (y-mu0)^2/v^2.
double score_tau2(const UnivariateData& data, double mu0, double tau2);

// Root of score_tau2 in tau2, clamped at 0 when the score has no sign
// change on [0, inf).
double constrained_tau2(const UnivariateData& data, double mu0);

double weighted_mean(const UnivariateData& data, double tau2);

UniFit fit_ml_constrained(const UnivariateData& data, double mu0);
UniFit fit_ml(const UnivariateData& data);

// Closed-form pivot solution tau*^2(U); negative solutions are clamped to 0
// (clamped reports whether that happened).
double pivot_tau2_star(std::span<const double> u, const UnivariateData& data,
                       double tau2_hat_c, bool* clamped = nullptr);

// Implicit-function-theorem weight for the mu test.
double weight_mu(std::span<const double> u, const UnivariateData& data,
                 double tau2_hat_c, double tau2_star);

// Nonnegative LRT statistic of H0: mu = mu0.
double lrt_mu(const UnivariateData& data, double mu0);

// Nonnegative LRT statistic of H0: tau2 = tau02.
double lrt_tau2(const UnivariateData& data, double tau02);

// Engine adapters; exposed so the harness can reuse draws across candidates.
class MuPivotModel : public mc::PivotModel {
 public:
  MuPivotModel(const UnivariateData& data, double mu0);
  int draw_dimension() const override;
  double observed_lrt() const override;
  std::optional<Replicate> simulate(std::span<const double> u) const override;

 private:
  const UnivariateData& data_;
  double mu0_;
  double tau2_hat_c_;
};

class Tau2PivotModel : public mc::PivotModel {
 public:
  Tau2PivotModel(const UnivariateData& data, double tau02);
  int draw_dimension() const override;
  double observed_lrt() const override;
  std::optional<Replicate> simulate(std::span<const double> u) const override;

 private:
  const UnivariateData& data_;
  double tau02_;
  double mu_hat_c_;
};

mc::PValueResult p_value_mu(const UnivariateData& data, double mu0, int b,
                            std::uint64_t seed);
mc::PValueResult p_value_tau2(const UnivariateData& data, double tau02, int b,
                              std::uint64_t seed);

mc::ConfidenceInterval ci_mu(const UnivariateData& data, double alpha, int b,
                             std::uint64_t seed);
mc::ConfidenceInterval ci_tau2(const UnivariateData& data, double alpha, int b,
                               std::uint64_t seed);

}  // namespace exactmeta::uni
