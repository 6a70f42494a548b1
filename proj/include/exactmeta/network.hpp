#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "exactmeta/mc_core.hpp"

namespace exactmeta::net {

struct ArmRecord {
  int study = 0;
  int treatment = 0;  // 0 is the reference
  double events = 0.0;
  double n = 0.0;
};

// Per-study log-OR contrasts versus the reference arm.
struct ContrastStudy {
  std::vector<int> treatments;  // non-reference treatment ids, 1..p
  Eigen::VectorXd y;
  Eigen::MatrixXd S;
};

struct NetworkModel {
  std::vector<ContrastStudy> studies;
  int p = 0;               // number of non-reference treatments
  int n_total = 0;         // sum of p_i
  Eigen::MatrixXd design;  // stacked N x p design

  static NetworkModel build(std::vector<ContrastStudy> studies, int p);
  void validate() const;  // throws input_error (rank, shapes)
};

// Arm-level records -> contrast-level studies.  Studies lacking the
// reference arm get a quasi-arm (0.001 events / 0.01 patients) when augment
// is set, else an error; 0.5 is added to every cell of a study containing a
// zero cell.
std::vector<ContrastStudy> contrasts_from_arms(std::vector<ArmRecord> arms,
                                               bool augment);

// Block-diagonal marginal covariance tau2 * P(0.5) + S (dense, for tests).
Eigen::MatrixXd build_v(const NetworkModel& model, double tau2);

double deviance(const NetworkModel& model, const Eigen::VectorXd& beta,
                double tau2);

struct MlFit {
  Eigen::VectorXd beta;
  double tau2 = 0.0;
  double deviance = 0.0;
  bool converged = false;
};

MlFit fit_ml(const NetworkModel& model);

struct RemlFit {
  Eigen::VectorXd beta;
  double tau2 = 0.0;
  Eigen::MatrixXd cov_beta;
};

RemlFit fit_reml(const NetworkModel& model);

// Replaces the design by X A^{-1} where A has first row c^t, so the first
// coordinate of the new parameter is c^t beta.
NetworkModel contrast_transform(const NetworkModel& model,
                                const Eigen::VectorXd& c);

struct ConstrainedFit {
  Eigen::VectorXd omega;  // remaining coordinates (length p-1)
  double tau2 = 0.0;
  double deviance = 0.0;
  bool converged = false;
};

// Constrained ML under H0: beta_1 = beta10 (first coordinate of the model's
// current design).
ConstrainedFit fit_constrained(const NetworkModel& model, double beta10);

// Residuals of the two stationarity conditions at (omega, tau2); for tests.
Eigen::VectorXd constrained_equations(const NetworkModel& model, double beta10,
                                      const Eigen::VectorXd& omega,
                                      double tau2);

struct PivotSolution {
  Eigen::VectorXd omega_star;
  double tau2_star = 0.0;
  bool clamped = false;
};

std::optional<PivotSolution> pivot_net(std::span<const double> u,
                                       const NetworkModel& model,
                                       double beta10,
                                       const ConstrainedFit& cfit);

std::optional<double> weight_net(std::span<const double> u,
                                 const NetworkModel& model, double beta10,
                                 const ConstrainedFit& cfit,
                                 const PivotSolution& pivot);

// Nonnegative LRT statistic of H0: beta_1 = beta10.
double lrt(const NetworkModel& model, double beta10);

class NetPivotModel : public mc::PivotModel {
 public:
  NetPivotModel(const NetworkModel& model, double beta10);
  int draw_dimension() const override;
  double observed_lrt() const override;
  std::optional<Replicate> simulate(std::span<const double> u) const override;
  const ConstrainedFit& constrained() const { return cfit_; }

 private:
  const NetworkModel& model_;
  double beta10_;
  ConstrainedFit cfit_;
};

mc::PValueResult p_value_contrast(const NetworkModel& model,
                                  const Eigen::VectorXd& c, double eta0, int b,
                                  std::uint64_t seed);

mc::ConfidenceInterval ci_contrast(const NetworkModel& model,
                                   const Eigen::VectorXd& c, double alpha,
                                   int b, std::uint64_t seed);

// Comparator intervals for the network model.
struct NetMethodResult {
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double tau2 = 0.0;
};

std::vector<NetMethodResult> reml_wald_net(const NetworkModel& model,
                                           double alpha);
NetMethodResult lr_interval_net(const NetworkModel& model,
                                const Eigen::VectorXd& c, double alpha);

}  // namespace exactmeta::net
