#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace exactmeta::optim {

struct NelderMeadOptions {
  int max_iter = 2000;
  double ftol = 1e-12;   // spread of simplex values
  double xtol = 1e-10;   // simplex diameter
  double init_step = 0.25;
};

struct NelderMeadResult {
  Eigen::VectorXd x;
  double fval = 0.0;
  int iterations = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0,
                             const NelderMeadOptions& opt = {});

// Minimum of a unimodal f on [lo, hi] to absolute tolerance tol.
double golden_section(const std::function<double(double)>& f, double lo,
                      double hi, double tol);

struct NewtonOptions {
  int max_iter = 40;
  double tol = 1e-10;          // sup-norm of residual
  double fd_step = 1e-6;       // relative step for the numeric Jacobian
  // Optional box; Newton iterates are clamped into it.
  Eigen::VectorXd lower;
  Eigen::VectorXd upper;
};

struct NewtonResult {
  Eigen::VectorXd x;
  double residual_norm = 0.0;
  bool converged = false;
};

// Damped Newton for F(x)=0 with central-difference Jacobian.
NewtonResult newton_solve(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, const NewtonOptions& opt = {});

// Scalar root on [lo, hi] (f(lo), f(hi) of opposite sign) by bisection with
// secant acceleration; relative tolerance on the bracket.
double scalar_root(const std::function<double(double)>& f, double lo,
                   double hi, double flo, double fhi, double rel_tol = 1e-13);

}  // namespace exactmeta::optim
