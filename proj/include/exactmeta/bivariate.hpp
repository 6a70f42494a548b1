#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "exactmeta/mc_core.hpp"

namespace exactmeta::dta {

// Logit sensitivity/specificity pair with known within-study variances.
struct DTAStudy {
  double yA = 0.0;
  double yB = 0.0;
  double sA2 = 1.0;
  double sB2 = 1.0;
};

using Data = std::vector<DTAStudy>;

void validate(const Data& data);

// Between-study nuisance (sigma_A^2, sigma_B^2, rho).
struct Nuisance {
  double sA2 = 0.0;
  double sB2 = 0.0;
  double rho = 0.0;
};

struct BivarFit {
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  Nuisance psi;
  double deviance = 0.0;
  double score_residual = 0.0;  // sup-norm of the three score equations
  bool converged = false;
};

struct FitOptions {
  int restarts = 5;
  bool polish = true;
};

double deviance(const Data& data, const Eigen::Vector2d& mu,
                const Nuisance& psi);

// The three constrained score equations (stationarity of the deviance in the
// free elements of Sigma) evaluated at (mu0, psi).
Eigen::Vector3d score(const Data& data, const Eigen::Vector2d& mu0,
                      const Nuisance& psi);

BivarFit fit_constrained(const Data& data, const Eigen::Vector2d& mu0,
                         const FitOptions& opt = {});
BivarFit fit_ml(const Data& data, const FitOptions& opt = {});

// Solves the noise-transformed score equations for psi; nullopt when the
// residual cannot be driven below the 1e-6 floor.
std::optional<Nuisance> pivot_psi_star(std::span<const double> u,
                                       const Data& data,
                                       const Eigen::Vector2d& mu0,
                                       const Nuisance& psi_hat_c,
                                       double* residual = nullptr);

// Determinant weight from the numeric Jacobian of psi |-> constrained fit of
// the synthetic data H(U, mu0, psi).
std::optional<double> weight_bivar(std::span<const double> u, const Data& data,
                                   const Eigen::Vector2d& mu0,
                                   const Nuisance& psi_hat_c,
                                   const Nuisance& psi_star);

double lrt(const Data& data, const Eigen::Vector2d& mu0);

class BivarMuModel : public mc::PivotModel {
 public:
  BivarMuModel(const Data& data, const Eigen::Vector2d& mu0);
  int draw_dimension() const override;
  double observed_lrt() const override;
  std::optional<Replicate> simulate(std::span<const double> u) const override;
  const Nuisance& psi_hat_c() const { return psi_hat_c_; }

 private:
  const Data& data_;
  Eigen::Vector2d mu0_;
  Nuisance psi_hat_c_;
};

mc::PValueResult p_value(const Data& data, const Eigen::Vector2d& mu0, int b,
                         std::uint64_t seed);

struct ConfidenceRegion {
  Eigen::Vector2d center = Eigen::Vector2d::Zero();
  std::vector<double> angles;
  std::vector<double> radii_raw;
  std::vector<double> radii_smoothed;
  double alpha = 0.05;
  std::vector<Eigen::Vector2d> boundary;  // center + r_smoothed * direction
  bool partial = false;
};

ConfidenceRegion confidence_region(const Data& data, double alpha, int m,
                                   int b, std::uint64_t seed);

// REML fit backing the Reitsma approximate region.
struct RemlBivarFit {
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  Nuisance psi;
  Eigen::Matrix2d cov_mu = Eigen::Matrix2d::Zero();
  double sA = 0.0;   // se of mu_A
  double sB = 0.0;   // se of mu_B
  double rho_hat = 0.0;
};

RemlBivarFit fit_reml(const Data& data);

ConfidenceRegion approx_region(const Data& data, double alpha, int m = 200);

// Containment test for the approximate elliptical region.
bool acr_covers(const RemlBivarFit& fit, const Eigen::Vector2d& point,
                double alpha);

// (sensitivity, false-positive rate) scale.
std::pair<double, double> to_roc(double mu_a, double mu_b);

struct SrocPoint {
  double mu_b = 0.0;
  double mu_a = 0.0;
  double sens = 0.0;
  double fpr = 0.0;
};

// Regression line E[mu_A | mu_B] over the grid, on both scales.
std::vector<SrocPoint> sroc_points(const BivarFit& fit,
                                   std::span<const double> grid);

// Ingestion from 2x2 counts; 0.5 added to all four cells when any is zero.
DTAStudy study_from_counts(double tp, double fp, double fn, double tn);

}  // namespace exactmeta::dta
