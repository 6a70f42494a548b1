#include "exactmeta/optim.hpp"

#include <algorithm>
#include <cmath>

#include "exactmeta/errors.hpp"

namespace exactmeta::optim {

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                             const Eigen::VectorXd& x0,
                             const NelderMeadOptions& opt) {
  const int n = static_cast<int>(x0.size());
  std::vector<Eigen::VectorXd> simplex(n + 1, x0);
  std::vector<double> fv(n + 1);
  for (int j = 0; j < n; ++j) simplex[j + 1][j] += opt.init_step;
  for (int j = 0; j <= n; ++j) fv[j] = f(simplex[j]);

  std::vector<int> order(n + 1);
  NelderMeadResult res;
  int iter = 0;
  for (; iter < opt.max_iter; ++iter) {
    for (int j = 0; j <= n; ++j) order[j] = j;
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return fv[a] < fv[b]; });
    int best = order[0], worst = order[n], second = order[n - 1];

    double diam = 0.0;
    for (int j = 1; j <= n; ++j)
      diam = std::max(diam, (simplex[order[j]] - simplex[best]).lpNorm<Eigen::Infinity>());
    if (std::fabs(fv[worst] - fv[best]) < opt.ftol && diam < opt.xtol) {
      res.converged = true;
      break;
    }

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(n);
    for (int j = 0; j <= n; ++j)
      if (j != worst) centroid += simplex[j];
    centroid /= n;

    Eigen::VectorXd xr = centroid + (centroid - simplex[worst]);
    double fr = f(xr);
    if (fr < fv[best]) {
      Eigen::VectorXd xe = centroid + 2.0 * (centroid - simplex[worst]);
      double fe = f(xe);
      if (fe < fr) {
        simplex[worst] = xe;
        fv[worst] = fe;
      } else {
        simplex[worst] = xr;
        fv[worst] = fr;
      }
    } else if (fr < fv[second]) {
      simplex[worst] = xr;
      fv[worst] = fr;
    } else {
      Eigen::VectorXd xc = centroid + 0.5 * (simplex[worst] - centroid);
      double fc = f(xc);
      if (fc < fv[worst]) {
        simplex[worst] = xc;
        fv[worst] = fc;
      } else {
        for (int j = 0; j <= n; ++j) {
          if (j == best) continue;
          simplex[j] = simplex[best] + 0.5 * (simplex[j] - simplex[best]);
          fv[j] = f(simplex[j]);
        }
      }
    }
  }
  int best = 0;
  for (int j = 1; j <= n; ++j)
    if (fv[j] < fv[best]) best = j;
  res.x = simplex[best];
  res.fval = fv[best];
  res.iterations = iter;
  return res;
}

double golden_section(const std::function<double(double)>& f, double lo,
                      double hi, double tol) {
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = lo, b = hi;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

NewtonResult newton_solve(
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&)>& f,
    const Eigen::VectorXd& x0, const NewtonOptions& opt) {
  const int n = static_cast<int>(x0.size());
  auto clamp = [&](Eigen::VectorXd x) {
    if (opt.lower.size() == n)
      for (int j = 0; j < n; ++j) x[j] = std::max(x[j], opt.lower[j]);
    if (opt.upper.size() == n)
      for (int j = 0; j < n; ++j) x[j] = std::min(x[j], opt.upper[j]);
    return x;
  };

  NewtonResult res;
  Eigen::VectorXd x = clamp(x0);
  Eigen::VectorXd fx = f(x);
  double norm = fx.lpNorm<Eigen::Infinity>();
  for (int iter = 0; iter < opt.max_iter; ++iter) {
    if (!std::isfinite(norm)) break;
    if (norm < opt.tol) {
      res.converged = true;
      break;
    }
    Eigen::MatrixXd jac(n, n);
    for (int j = 0; j < n; ++j) {
      double h = opt.fd_step * std::max(1.0, std::fabs(x[j]));
      Eigen::VectorXd xp = x, xm = x;
      xp[j] += h;
      xm[j] -= h;
      jac.col(j) = (f(clamp(xp)) - f(clamp(xm))) / (2.0 * h);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    if (!lu.isInvertible()) break;
    Eigen::VectorXd step = lu.solve(fx);
    double t = 1.0;
    bool improved = false;
    for (int ls = 0; ls < 8; ++ls) {
      Eigen::VectorXd cand = clamp(x - t * step);
      Eigen::VectorXd fc = f(cand);
      double cn = fc.lpNorm<Eigen::Infinity>();
      if (std::isfinite(cn) && cn < norm) {
        x = cand;
        fx = fc;
        norm = cn;
        improved = true;
        break;
      }
      t *= 0.5;
    }
    if (!improved) break;
  }
  res.x = x;
  res.residual_norm = norm;
  if (norm < opt.tol) res.converged = true;
  return res;
}

double scalar_root(const std::function<double(double)>& f, double lo,
                   double hi, double flo, double fhi, double rel_tol) {
  if ((flo > 0.0) == (fhi > 0.0))
    throw numerical_error("scalar_root: bracket endpoints have the same sign");
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  double scale = std::max({std::fabs(lo), std::fabs(hi), 1.0});
  for (int iter = 0; iter < 200 && hi - lo > rel_tol * scale; ++iter) {
    // secant candidate, safeguarded by the midpoint
    double mid = 0.5 * (lo + hi);
    double sec = lo - flo * (hi - lo) / (fhi - flo);
    double x = (sec > lo && sec < hi && iter % 2 == 0) ? sec : mid;
    double fx = f(x);
    if (fx == 0.0) return x;
    if ((fx > 0.0) == (flo > 0.0)) {
      lo = x;
      flo = fx;
    } else {
      hi = x;
      fhi = fx;
    }
  }
  return 0.5 * (lo + hi);
}

}  // namespace exactmeta::optim
