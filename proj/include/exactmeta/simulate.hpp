#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "exactmeta/bivariate.hpp"
#include "exactmeta/network.hpp"
#include "exactmeta/univariate.hpp"

namespace exactmeta::sim {

struct UniReplicate {
  uni::UnivariateData data;
  std::vector<double> theta;
  double mu = 0.0;
  double tau2 = 0.0;
  std::uint64_t seed = 0;
};

struct DtaReplicate {
  dta::Data data;
  Eigen::Vector2d mu = Eigen::Vector2d::Zero();
  double tau2 = 0.0;
  double rho = 0.0;
  std::uint64_t seed = 0;
};

struct NmaReplicate {
  net::NetworkModel model;
  Eigen::Vector3d mu = Eigen::Vector3d::Zero();
  double tau = 0.0;
  std::uint64_t seed = 0;
};

// Two-arm binomial trials: theta_i ~ N(mu, tau2), control rate uniform on
// [0.095, 0.65], common arm size uniform on {20..200}, log-OR summaries with
// a 0.5 continuity correction on zero cells.
UniReplicate gen_univariate(int k, double mu, double tau2, std::uint64_t seed);

// Logit-scale pairs with between-study covariance tau2 * P(rho) and
// within-study variances 0.25 chi2(1) truncated to [0.009, 0.6].
DtaReplicate gen_bivariate(int k, double tau2, double rho, std::uint64_t seed);

// Four-treatment quadrangular network; per-design trial counts are fixed for
// k in {8, 12, 16}.  mu = (0.4, 0.7, 1.0), theta_i ~ N(mu, tau^2 P(0.5)).
NmaReplicate gen_network(int k, double tau, std::uint64_t seed);

// Treatment-id sets (0 = reference) of the k trials used by gen_network.
std::vector<std::vector<int>> network_designs(int k);

struct CoverageConfig {
  std::string generator;  // uni | dta | nma
  int k = 0;
  double tau2 = 0.0;  // uni/dta cells
  double rho = 0.0;   // dta cells
  double tau = 0.0;   // nma cells
  std::vector<std::string> methods;
  int R = 0;
  int B = 0;
  double alpha = 0.05;
  std::uint64_t seed = 0;
};

struct CellResult {
  std::string method;
  std::vector<double> coverage;    // %, one entry per target parameter
  std::vector<double> avg_length;  // empty when no interval is produced
  std::vector<double> mc_se;       // % scale
  int n_failed = 0;
};

struct ExperimentReport {
  CoverageConfig config;
  std::vector<CellResult> cells;
  double wall_seconds = 0.0;
};

ExperimentReport run_coverage(const CoverageConfig& config);

// Experiment presets; cell values of -1 keep the preset's default row.
CoverageConfig preset_config(const std::string& experiment, int k, double tau2,
                             double rho, double tau, int r, int b,
                             std::uint64_t seed);

}  // namespace exactmeta::sim
