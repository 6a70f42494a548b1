#include "exactmeta/mc_core.hpp"

#include <cmath>
#include <vector>

#include "exactmeta/errors.hpp"
#include "exactmeta/parallel.hpp"

namespace exactmeta::mc {

namespace {

struct Slot {
  double weight = 0.0;
  bool exceed = false;
  bool accepted = false;
};

PValueResult reduce(const std::vector<Slot>& slots, int b) {
  double sum_w = 0.0, sum_w2 = 0.0, sum_iw = 0.0;
  int degenerate = 0;
  for (const Slot& s : slots) {
    if (!s.accepted) {
      ++degenerate;
      continue;
    }
    sum_w += s.weight;
    sum_w2 += s.weight * s.weight;
    if (s.exceed) sum_iw += s.weight;
  }
  if (degenerate == b || sum_w <= 0.0)
    throw numerical_error("pivot solving failed for all replicates");

  PValueResult res;
  res.b_total = b;
  res.n_degenerate = degenerate;
  res.p = sum_iw / sum_w;
  res.ess = sum_w * sum_w / sum_w2;
  double var = 0.0;
  for (const Slot& s : slots) {
    if (!s.accepted) continue;
    double ind = s.exceed ? 1.0 : 0.0;
    double d = s.weight * (ind - res.p);
    var += d * d;
  }
  res.mc_se = std::sqrt(var) / sum_w;
  return res;
}

PValueResult run(const PivotModel& model, int b,
                 const std::function<std::span<const double>(int, std::vector<double>&)>& draw) {
  double t_obs = model.observed_lrt();
  std::vector<Slot> slots(b);
  parallel_for(b, [&](int i) {
    thread_local std::vector<double> scratch;
    std::span<const double> u = draw(i, scratch);
    auto rep = model.simulate(u);
    if (!rep) return;
    double w = rep->weight;
    if (!std::isfinite(w) || w <= 0.0) return;
    slots[i].weight = w;
    slots[i].exceed = rep->lrt >= t_obs;
    slots[i].accepted = true;
  });
  return reduce(slots, b);
}

}  // namespace

PValueResult conditional_p_value(const PivotModel& model, int b,
                                 std::uint64_t seed) {
  if (b < 1) throw input_error("replicate count must be >= 1");
  int dim = model.draw_dimension();
  return run(model, b, [&](int i, std::vector<double>& scratch) {
    scratch.resize(dim);
    Philox gen(seed, static_cast<std::uint64_t>(i));
    gen.fill_normal(scratch);
    return std::span<const double>(scratch);
  });
}

PValueResult conditional_p_value(const PivotModel& model,
                                 const DrawMatrix& draws) {
  if (draws.rows < 1) throw input_error("replicate count must be >= 1");
  if (draws.cols != model.draw_dimension())
    throw input_error("draw matrix width does not match model dimension");
  return run(model, draws.rows,
             [&](int i, std::vector<double>&) { return draws.row(i); });
}

ConfidenceInterval invert_to_interval(const std::function<double(double)>& p_fn,
                                      double point_estimate,
                                      double wald_halfwidth, double alpha,
                                      const InversionOptions& opt) {
  if (!(wald_halfwidth > 0.0))
    throw input_error("invert_to_interval: half-width must be positive");
  double p0 = p_fn(point_estimate);
  if (p0 <= alpha)
    throw numerical_error(
        "invert_to_interval: p-value at the point estimate is not above alpha");

  auto endpoint = [&](int dir) {
    double step = wald_halfwidth;
    double inner = point_estimate;
    double outer = inner;
    bool bracketed = false;
    for (int e = 0; e < opt.max_expand; ++e) {
      outer = point_estimate + dir * step;
      bool clamped = false;
      if (dir < 0 && outer < opt.domain_lo) {
        outer = opt.domain_lo;
        clamped = true;
      }
      if (dir > 0 && outer > opt.domain_hi) {
        outer = opt.domain_hi;
        clamped = true;
      }
      if (p_fn(outer) <= alpha) {
        bracketed = true;
        break;
      }
      inner = outer;
      if (clamped) return outer;  // whole side up to the boundary is retained
      step *= 2.0;
    }
    if (!bracketed) throw numerical_error("endpoint bracket failed");
    while (std::fabs(outer - inner) > opt.tol) {
      double mid = 0.5 * (inner + outer);
      if (p_fn(mid) > alpha)
        inner = mid;
      else
        outer = mid;
    }
    return 0.5 * (inner + outer);
  };

  ConfidenceInterval ci;
  ci.alpha = alpha;
  ci.point_estimate = point_estimate;
  ci.lower = endpoint(-1);
  ci.upper = endpoint(+1);
  ci.converged = true;
  return ci;
}

double bisect(const std::function<double(double)>& f, double lo, double hi,
              double tol) {
  if (!(tol > 0.0)) throw input_error("bisect: tol must be positive");
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0))
    throw numerical_error("bisect: bracket endpoints have the same sign");
  while (std::fabs(hi - lo) > tol) {
    double mid = 0.5 * (lo + hi);
    double fm = f(mid);
    if (fm == 0.0) return mid;
    if ((fm > 0.0) == (flo > 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace exactmeta::mc
