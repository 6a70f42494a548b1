#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>

#include "exactmeta/rng.hpp"

namespace exactmeta::mc {

struct PValueResult {
  double p = 0.0;            // weighted conditional p-value
  int b_total = 0;           // requested replicate count
  double ess = 0.0;          // (sum w)^2 / sum w^2 over accepted replicates
  double mc_se = 0.0;        // weighted binomial standard error
  int n_degenerate = 0;      // replicates dropped (pivot failure / bad weight)
};

struct ConfidenceInterval {
  double lower = 0.0;
  double upper = 0.0;
  double alpha = 0.05;
  double point_estimate = 0.0;
  bool converged = false;
};

// Contract a model binds to one (data, phi0) hypothesis: the observed LRT
// statistic plus a per-draw map from standard-normal noise to the synthetic
// statistic and its conditioning weight.
class PivotModel {
 public:
  struct Replicate {
    double lrt = 0.0;     // T(Y*) >= 0
    double weight = 0.0;  // w(U) >= 0
  };

  virtual ~PivotModel() = default;

  // Length of the standard-normal vector consumed per replicate.
  virtual int draw_dimension() const = 0;

  // T(Y) for the bound data and null value; throws numerical_error when the
  // fits on the observed data do not converge.
  virtual double observed_lrt() const = 0;

  // nullopt marks a degenerate replicate (pivot equation unsolvable).
  virtual std::optional<Replicate> simulate(std::span<const double> u) const = 0;
};

PValueResult conditional_p_value(const PivotModel& model, int b,
                                 std::uint64_t seed);

// Same computation with caller-supplied draws (draws.rows replicates); used
// during interval inversion so every candidate reuses the same noise.
PValueResult conditional_p_value(const PivotModel& model,
                                 const DrawMatrix& draws);

struct InversionOptions {
  double tol = 1e-6;  // parameter-axis bisection tolerance
  int max_expand = 60;
  double domain_lo = -std::numeric_limits<double>::infinity();
  double domain_hi = std::numeric_limits<double>::infinity();
};

// Inverts phi |-> p(phi) into a level-(1-alpha) interval.  Brackets are found
// by doubling the Wald half-width outward from the point estimate; p_fn must
// use common random numbers so it is a stable function of its argument.
ConfidenceInterval invert_to_interval(const std::function<double(double)>& p_fn,
                                      double point_estimate,
                                      double wald_halfwidth, double alpha,
                                      const InversionOptions& opt = {});

// Root of f on a sign-changing bracket [lo, hi], to bracket width <= tol.
double bisect(const std::function<double(double)>& f, double lo, double hi,
              double tol);

}  // namespace exactmeta::mc
