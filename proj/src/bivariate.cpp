#include "exactmeta/bivariate.hpp"

#include <cmath>

#include <boost/math/distributions/chi_squared.hpp>

#include "exactmeta/errors.hpp"
#include "exactmeta/optim.hpp"

namespace exactmeta::dta {

namespace {

constexpr double kRhoCap = 0.999;
constexpr double kScoreFloor = 1e-6;

struct Cov2 {
  // symmetric 2x2: [[a, b], [b, d]]
  double a, b, d;

  double det() const { return a * d - b * b; }
  bool pd() const { return a > 0.0 && det() > 0.0; }

  Eigen::Matrix2d inv() const {
    double dt = det();
    Eigen::Matrix2d m;
    m << d / dt, -b / dt, -b / dt, a / dt;
    return m;
  }

  // lower Cholesky factor
  Eigen::Matrix2d chol() const {
    double l11 = std::sqrt(a);
    double l21 = b / l11;
    double l22 = std::sqrt(std::max(d - l21 * l21, 0.0));
    Eigen::Matrix2d m;
    m << l11, 0.0, l21, l22;
    return m;
  }
};

Cov2 marginal_cov(const DTAStudy& s, const Nuisance& psi) {
  double off = psi.rho * std::sqrt(psi.sA2 * psi.sB2);
  return {psi.sA2 + s.sA2, off, psi.sB2 + s.sB2};
}

bool valid_psi(const Nuisance& psi) {
  return psi.sA2 >= 0.0 && psi.sB2 >= 0.0 && std::fabs(psi.rho) <= kRhoCap;
}

// transformed coordinates used by the simplex search
Eigen::Vector3d to_x(const Nuisance& psi) {
  return {std::log(std::max(psi.sA2, 1e-10)),
          std::log(std::max(psi.sB2, 1e-10)),
          std::atanh(std::clamp(psi.rho, -0.99, 0.99))};
}

Nuisance from_x(const Eigen::Vector3d& x) {
  Nuisance psi;
  psi.sA2 = std::exp(std::clamp(x[0], -25.0, 25.0));
  psi.sB2 = std::exp(std::clamp(x[1], -25.0, 25.0));
  psi.rho = std::tanh(std::clamp(x[2], -8.0, 8.0));
  return psi;
}

Eigen::Vector3d psi_vec(const Nuisance& psi) {
  return {psi.sA2, psi.sB2, psi.rho};
}

Nuisance psi_from_vec(const Eigen::VectorXd& v) {
  return {std::max(v[0], 0.0), std::max(v[1], 0.0),
          std::clamp(v[2], -kRhoCap, kRhoCap)};
}

Nuisance moment_start(const Data& data, const Eigen::Vector2d& mu0) {
  const int k = static_cast<int>(data.size());
  double va = 0.0, vb = 0.0, cab = 0.0, ma = 0.0, mb = 0.0;
  for (const DTAStudy& s : data) {
    double da = s.yA - mu0[0];
    double db = s.yB - mu0[1];
    va += da * da - s.sA2;
    vb += db * db - s.sB2;
    cab += da * db;
    ma += s.sA2;
    mb += s.sB2;
  }
  Nuisance psi;
  psi.sA2 = std::max(va / k, 0.05);
  psi.sB2 = std::max(vb / k, 0.05);
  psi.rho = std::clamp(cab / k / std::sqrt(psi.sA2 * psi.sB2), -0.8, 0.8);
  return psi;
}

Eigen::Vector2d gls_mean(const Data& data, const Nuisance& psi) {
  Eigen::Matrix2d sw = Eigen::Matrix2d::Zero();
  Eigen::Vector2d swy = Eigen::Vector2d::Zero();
  for (const DTAStudy& s : data) {
    Eigen::Matrix2d vi = marginal_cov(s, psi).inv();
    sw += vi;
    swy += vi * Eigen::Vector2d(s.yA, s.yB);
  }
  return sw.ldlt().solve(swy);
}

// Simplex minimization of the deviance over psi with mu profiled out when
// profile_mu is set; deterministic jittered restarts.
BivarFit simplex_fit(const Data& data, const Eigen::Vector2d& mu0,
                     bool profile_mu, const FitOptions& opt) {
  auto objective = [&](const Eigen::VectorXd& x) {
    Nuisance psi = from_x(x);
    Eigen::Vector2d mu = profile_mu ? gls_mean(data, psi) : mu0;
    return deviance(data, mu, psi);
  };

  static const double kJitter[5][3] = {{0, 0, 0},
                                       {1.0, -1.0, 0.3},
                                       {-1.0, 1.0, -0.3},
                                       {1.5, 1.5, 0.0},
                                       {-1.5, -1.5, 0.6}};
  Nuisance start = moment_start(data, mu0);
  optim::NelderMeadResult best;
  best.fval = std::numeric_limits<double>::infinity();
  int tries = std::max(1, std::min(opt.restarts, 5));
  for (int t = 0; t < tries; ++t) {
    Eigen::Vector3d x0 = to_x(start);
    for (int j = 0; j < 3; ++j) x0[j] += kJitter[t][j];
    optim::NelderMeadOptions nmo;
    nmo.init_step = 0.4;
    auto r = optim::nelder_mead(objective, x0, nmo);
    if (r.fval < best.fval) best = r;
  }

  BivarFit fit;
  fit.psi = from_x(best.x);
  fit.mu = profile_mu ? gls_mean(data, fit.psi) : mu0;
  fit.deviance = best.fval;
  return fit;
}

// Newton polish of the score equations at fixed mu.
void polish_scores(const Data& data, const Eigen::Vector2d& mu, BivarFit& fit) {
  optim::NewtonOptions no;
  no.tol = 1e-9;
  no.lower = Eigen::Vector3d(0.0, 0.0, -kRhoCap);
  no.upper = Eigen::Vector3d(std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity(), kRhoCap);
  auto fn = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return score(data, mu, psi_from_vec(v));
  };
  auto r = optim::newton_solve(fn, psi_vec(fit.psi), no);
  Nuisance cand = psi_from_vec(r.x);
  double cand_dev = deviance(data, mu, cand);
  double cur_res = score(data, mu, fit.psi).lpNorm<Eigen::Infinity>();
  if (std::isfinite(cand_dev) && r.residual_norm < cur_res &&
      cand_dev <= fit.deviance + 1e-6) {
    fit.psi = cand;
    fit.deviance = cand_dev;
  }
}

}  // namespace

void validate(const Data& data) {
  if (data.size() < 2) throw input_error("dta data: at least 2 studies required");
  for (const DTAStudy& s : data)
    if (!(s.sA2 > 0.0) || !(s.sB2 > 0.0))
      throw input_error("dta data: within-study variances must be > 0");
}

double deviance(const Data& data, const Eigen::Vector2d& mu,
                const Nuisance& psi) {
  if (!valid_psi(psi)) return std::numeric_limits<double>::infinity();
  double out = 0.0;
  for (const DTAStudy& s : data) {
    Cov2 v = marginal_cov(s, psi);
    if (!v.pd()) throw numerical_error("deviance: marginal covariance not PD");
    Eigen::Vector2d d(s.yA - mu[0], s.yB - mu[1]);
    out += std::log(v.det()) + d.dot(v.inv() * d);
  }
  return out;
}

Eigen::Vector3d score(const Data& data, const Eigen::Vector2d& mu0,
                      const Nuisance& psi) {
  Eigen::Vector3d f = Eigen::Vector3d::Zero();
  for (const DTAStudy& s : data) {
    Cov2 v = marginal_cov(s, psi);
    Eigen::Matrix2d vi = v.inv();
    Eigen::Vector2d d(s.yA - mu0[0], s.yB - mu0[1]);
    Eigen::Vector2d g = vi * d;
    f[0] += vi(0, 0) - g[0] * g[0];
    f[1] += vi(1, 1) - g[1] * g[1];
    f[2] += 2.0 * (vi(0, 1) - g[0] * g[1]);
  }
  return f;
}

BivarFit fit_constrained(const Data& data, const Eigen::Vector2d& mu0,
                         const FitOptions& opt) {
  BivarFit fit = simplex_fit(data, mu0, false, opt);
  if (opt.polish) polish_scores(data, mu0, fit);
  fit.score_residual = score(data, mu0, fit.psi).lpNorm<Eigen::Infinity>();
  fit.converged = fit.score_residual < kScoreFloor;
  return fit;
}

BivarFit fit_ml(const Data& data, const FitOptions& opt) {
  BivarFit fit = simplex_fit(data, Eigen::Vector2d::Zero(), true, opt);
  if (opt.polish) {
    for (int round = 0; round < 4; ++round) {
      fit.mu = gls_mean(data, fit.psi);
      polish_scores(data, fit.mu, fit);
    }
    fit.mu = gls_mean(data, fit.psi);
    fit.deviance = deviance(data, fit.mu, fit.psi);
  }
  fit.score_residual = score(data, fit.mu, fit.psi).lpNorm<Eigen::Infinity>();
  fit.converged = fit.score_residual < kScoreFloor;
  return fit;
}

std::optional<Nuisance> pivot_psi_star(std::span<const double> u,
                                       const Data& data,
                                       const Eigen::Vector2d& mu0,
                                       const Nuisance& psi_hat_c,
                                       double* residual) {
  const int k = static_cast<int>(data.size());
  // fixed pieces at the conditioning point
  std::vector<Eigen::Matrix2d> vc_inv(k);
  Eigen::Vector3d trace_sum = Eigen::Vector3d::Zero();
  for (int i = 0; i < k; ++i) {
    vc_inv[i] = marginal_cov(data[i], psi_hat_c).inv();
    trace_sum[0] += vc_inv[i](0, 0);
    trace_sum[1] += vc_inv[i](1, 1);
    trace_sum[2] += 2.0 * vc_inv[i](0, 1);
  }

  auto equations = [&](const Nuisance& psi) -> Eigen::Vector3d {
    Eigen::Vector3d f = trace_sum;
    for (int i = 0; i < k; ++i) {
      Cov2 v = marginal_cov(data[i], psi);
      Eigen::Vector2d ui(u[2 * i], u[2 * i + 1]);
      Eigen::Vector2d g = vc_inv[i] * (v.chol() * ui);
      f[0] -= g[0] * g[0];
      f[1] -= g[1] * g[1];
      f[2] -= 2.0 * g[0] * g[1];
    }
    return f;
  };

  optim::NewtonOptions no;
  no.tol = 1e-9;
  no.lower = Eigen::Vector3d(0.0, 0.0, -kRhoCap);
  no.upper = Eigen::Vector3d(std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity(), kRhoCap);
  auto fn = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return equations(psi_from_vec(v));
  };
  auto r = optim::newton_solve(fn, psi_vec(psi_hat_c), no);

  if (!r.converged) {
    // squared-residual simplex fallback in transformed coordinates
    auto obj = [&](const Eigen::VectorXd& x) {
      return equations(from_x(x)).squaredNorm();
    };
    optim::NelderMeadOptions nmo;
    nmo.init_step = 0.5;
    auto nm = optim::nelder_mead(obj, to_x(psi_hat_c), nmo);
    auto r2 = optim::newton_solve(fn, psi_vec(from_x(nm.x)), no);
    if (r2.residual_norm < r.residual_norm) r = r2;
  }

  if (residual) *residual = r.residual_norm;
  if (r.residual_norm >= kScoreFloor) return std::nullopt;
  return psi_from_vec(r.x);
}

namespace {

// Constrained fit of the synthetic dataset H(U, mu0, psi); warm-started
// Newton with a simplex fallback.
std::optional<Nuisance> refit_synthetic(std::span<const double> u,
                                        const Data& data,
                                        const Eigen::Vector2d& mu0,
                                        const Nuisance& psi,
                                        const Nuisance& warm) {
  Data synth = data;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Eigen::Matrix2d t = marginal_cov(data[i], psi).chol();
    Eigen::Vector2d ui(u[2 * i], u[2 * i + 1]);
    Eigen::Vector2d yi = mu0 + t * ui;
    synth[i].yA = yi[0];
    synth[i].yB = yi[1];
  }

  optim::NewtonOptions no;
  no.tol = 1e-9;
  no.lower = Eigen::Vector3d(0.0, 0.0, -kRhoCap);
  no.upper = Eigen::Vector3d(std::numeric_limits<double>::infinity(),
                             std::numeric_limits<double>::infinity(), kRhoCap);
  auto fn = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    return score(synth, mu0, psi_from_vec(v));
  };
  auto r = optim::newton_solve(fn, psi_vec(warm), no);
  if (!r.converged) {
    FitOptions fo;
    fo.restarts = 1;
    BivarFit fb = fit_constrained(synth, mu0, fo);
    auto r2 = optim::newton_solve(fn, psi_vec(fb.psi), no);
    if (r2.residual_norm < r.residual_norm) r = r2;
    if (r.residual_norm >= 1e-6) return std::nullopt;
  }
  return psi_from_vec(r.x);
}

}  // namespace

std::optional<double> weight_bivar(std::span<const double> u, const Data& data,
                                   const Eigen::Vector2d& mu0,
                                   const Nuisance& psi_hat_c,
                                   const Nuisance& psi_star) {
  Eigen::Matrix3d jac;
  Eigen::Vector3d base = psi_vec(psi_star);
  for (int j = 0; j < 3; ++j) {
    double h = 1e-4 * std::max(1.0, std::fabs(base[j]));
    double lo = base[j] - h;
    double hi = base[j] + h;
    if (j < 2) lo = std::max(lo, 0.0);
    if (j == 2) {
      lo = std::max(lo, -kRhoCap);
      hi = std::min(hi, kRhoCap);
    }
    Eigen::Vector3d plo = base, phi = base;
    plo[j] = lo;
    phi[j] = hi;
    auto flo = refit_synthetic(u, data, mu0, psi_from_vec(plo), psi_hat_c);
    auto fhi = refit_synthetic(u, data, mu0, psi_from_vec(phi), psi_hat_c);
    if (!flo || !fhi) return std::nullopt;
    jac.col(j) = (psi_vec(*fhi) - psi_vec(*flo)) / (hi - lo);
  }
  double det = std::fabs(jac.determinant());
  if (!std::isfinite(det) || det <= 0.0) return std::nullopt;
  return 1.0 / det;
}

double lrt(const Data& data, const Eigen::Vector2d& mu0) {
  FitOptions fast;
  fast.restarts = 2;
  double dev_c = fit_constrained(data, mu0, fast).deviance;
  double dev_u = fit_ml(data, fast).deviance;
  return std::max(0.0, dev_c - dev_u);
}

BivarMuModel::BivarMuModel(const Data& data, const Eigen::Vector2d& mu0)
    : data_(data), mu0_(mu0) {
  BivarFit fit = fit_constrained(data, mu0);
  psi_hat_c_ = fit.psi;
}

int BivarMuModel::draw_dimension() const {
  return 2 * static_cast<int>(data_.size());
}

double BivarMuModel::observed_lrt() const { return lrt(data_, mu0_); }

std::optional<mc::PivotModel::Replicate> BivarMuModel::simulate(
    std::span<const double> u) const {
  auto psi_star = pivot_psi_star(u, data_, mu0_, psi_hat_c_);
  if (!psi_star) return std::nullopt;
  auto w = weight_bivar(u, data_, mu0_, psi_hat_c_, *psi_star);
  if (!w) return std::nullopt;

  Data synth = data_;
  for (std::size_t i = 0; i < data_.size(); ++i) {
    Eigen::Matrix2d t = marginal_cov(data_[i], *psi_star).chol();
    Eigen::Vector2d ui(u[2 * i], u[2 * i + 1]);
    Eigen::Vector2d yi = mu0_ + t * ui;
    synth[i].yA = yi[0];
    synth[i].yB = yi[1];
  }
  Replicate rep;
  rep.lrt = lrt(synth, mu0_);
  rep.weight = *w;
  return rep;
}

mc::PValueResult p_value(const Data& data, const Eigen::Vector2d& mu0, int b,
                         std::uint64_t seed) {
  validate(data);
  BivarMuModel model(data, mu0);
  return mc::conditional_p_value(model, b, seed);
}

ConfidenceRegion confidence_region(const Data& data, double alpha, int m,
                                   int b, std::uint64_t seed) {
  validate(data);
  if (m < 8) throw input_error("confidence_region: M must be >= 8");
  BivarFit fit = fit_ml(data);
  Eigen::Matrix2d sw = Eigen::Matrix2d::Zero();
  for (const DTAStudy& s : data)
    sw += marginal_cov(s, fit.psi).inv();
  Eigen::Matrix2d cov = sw.inverse();

  DrawMatrix draws = normal_draws(seed, b, 2 * static_cast<int>(data.size()));
  auto p_at = [&](const Eigen::Vector2d& mu) {
    BivarMuModel model(data, mu);
    return mc::conditional_p_value(model, draws).p;
  };

  boost::math::chi_squared chi2(2);
  double c2 = boost::math::quantile(chi2, 1.0 - alpha);

  ConfidenceRegion region;
  region.center = fit.mu;
  region.alpha = alpha;
  region.angles.resize(m);
  region.radii_raw.assign(m, 0.0);

  double p_center = p_at(fit.mu);
  if (p_center <= alpha)
    throw numerical_error("confidence_region: p-value at the center <= alpha");

  for (int j = 0; j < m; ++j) {
    double t = 2.0 * M_PI * j / m;
    region.angles[j] = t;
    Eigen::Vector2d dir(std::cos(t), std::sin(t));
    double scale = std::sqrt(c2 * dir.dot(cov * dir));

    double inner = 0.0;
    double outer = scale;
    bool bracketed = false;
    for (int e = 0; e < 14; ++e) {
      if (p_at(fit.mu + outer * dir) <= alpha) {
        bracketed = true;
        break;
      }
      inner = outer;
      outer *= 2.0;
    }
    if (!bracketed) {
      region.partial = true;
      region.radii_raw[j] = std::numeric_limits<double>::quiet_NaN();
      continue;
    }
    double tol = 5e-3 * scale;
    while (outer - inner > tol) {
      double mid = 0.5 * (inner + outer);
      if (p_at(fit.mu + mid * dir) > alpha)
        inner = mid;
      else
        outer = mid;
    }
    region.radii_raw[j] = 0.5 * (inner + outer);
  }

  // circular 7-point moving average
  region.radii_smoothed.assign(m, 0.0);
  for (int j = 0; j < m; ++j) {
    double sum = 0.0;
    int cnt = 0;
    for (int o = -3; o <= 3; ++o) {
      double r = region.radii_raw[((j + o) % m + m) % m];
      if (std::isfinite(r)) {
        sum += r;
        ++cnt;
      }
    }
    region.radii_smoothed[j] = cnt > 0 ? sum / cnt
                                       : std::numeric_limits<double>::quiet_NaN();
  }
  region.boundary.resize(m);
  for (int j = 0; j < m; ++j) {
    Eigen::Vector2d dir(std::cos(region.angles[j]), std::sin(region.angles[j]));
    region.boundary[j] = region.center + region.radii_smoothed[j] * dir;
  }
  return region;
}

RemlBivarFit fit_reml(const Data& data) {
  validate(data);
  auto objective = [&](const Eigen::VectorXd& x) {
    Nuisance psi = from_x(x);
    Eigen::Matrix2d sw = Eigen::Matrix2d::Zero();
    for (const DTAStudy& s : data) sw += marginal_cov(s, psi).inv();
    Eigen::Vector2d mu = gls_mean(data, psi);
    return deviance(data, mu, psi) + std::log(sw.determinant());
  };
  Nuisance start = moment_start(data, gls_mean(data, Nuisance{0.1, 0.1, 0.0}));
  optim::NelderMeadResult best;
  best.fval = std::numeric_limits<double>::infinity();
  static const double kJitter[3][3] = {{0, 0, 0}, {1, -1, 0.3}, {-1, 1, -0.3}};
  for (int t = 0; t < 3; ++t) {
    Eigen::Vector3d x0 = to_x(start);
    for (int j = 0; j < 3; ++j) x0[j] += kJitter[t][j];
    auto r = optim::nelder_mead(objective, x0);
    if (r.fval < best.fval) best = r;
  }

  RemlBivarFit fit;
  fit.psi = from_x(best.x);
  fit.mu = gls_mean(data, fit.psi);
  Eigen::Matrix2d sw = Eigen::Matrix2d::Zero();
  for (const DTAStudy& s : data) sw += marginal_cov(s, fit.psi).inv();
  fit.cov_mu = sw.inverse();
  fit.sA = std::sqrt(fit.cov_mu(0, 0));
  fit.sB = std::sqrt(fit.cov_mu(1, 1));
  fit.rho_hat = fit.cov_mu(0, 1) / (fit.sA * fit.sB);
  return fit;
}

ConfidenceRegion approx_region(const Data& data, double alpha, int m) {
  RemlBivarFit fit = fit_reml(data);
  boost::math::chi_squared chi2(2);
  double c = std::sqrt(boost::math::quantile(chi2, 1.0 - alpha));
  double shift = std::acos(std::clamp(fit.rho_hat, -1.0, 1.0));

  ConfidenceRegion region;
  region.center = fit.mu;
  region.alpha = alpha;
  region.angles.resize(m);
  region.radii_raw.resize(m);
  region.radii_smoothed.resize(m);
  region.boundary.resize(m);
  for (int j = 0; j < m; ++j) {
    double t = 2.0 * M_PI * j / m;
    region.angles[j] = t;
    Eigen::Vector2d p(fit.mu[0] + c * fit.sA * std::cos(t),
                      fit.mu[1] + c * fit.sB * std::cos(t + shift));
    region.boundary[j] = p;
    double r = (p - fit.mu).norm();
    region.radii_raw[j] = r;
    region.radii_smoothed[j] = r;
  }
  return region;
}

bool acr_covers(const RemlBivarFit& fit, const Eigen::Vector2d& point,
                double alpha) {
  boost::math::chi_squared chi2(2);
  double c2 = boost::math::quantile(chi2, 1.0 - alpha);
  Eigen::Vector2d d = point - fit.mu;
  Eigen::Matrix2d r;
  r << fit.sA * fit.sA, fit.rho_hat * fit.sA * fit.sB,
      fit.rho_hat * fit.sA * fit.sB, fit.sB * fit.sB;
  return d.dot(r.inverse() * d) <= c2;
}

std::pair<double, double> to_roc(double mu_a, double mu_b) {
  auto expit = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
  return {expit(mu_a), 1.0 - expit(mu_b)};
}

std::vector<SrocPoint> sroc_points(const BivarFit& fit,
                                   std::span<const double> grid) {
  if (!(fit.psi.sB2 > 0.0))
    throw numerical_error("sroc_points: sigma_B^2 must be positive");
  double slope =
      fit.psi.rho * std::sqrt(fit.psi.sA2) / std::sqrt(fit.psi.sB2);
  std::vector<SrocPoint> out;
  out.reserve(grid.size());
  for (double mu_b : grid) {
    SrocPoint p;
    p.mu_b = mu_b;
    p.mu_a = fit.mu[0] + slope * (mu_b - fit.mu[1]);
    auto roc = to_roc(p.mu_a, p.mu_b);
    p.sens = roc.first;
    p.fpr = roc.second;
    out.push_back(p);
  }
  return out;
}

DTAStudy study_from_counts(double tp, double fp, double fn, double tn) {
  if (tp < 0 || fp < 0 || fn < 0 || tn < 0)
    throw input_error("study_from_counts: negative cell count");
  if (tp == 0 || fp == 0 || fn == 0 || tn == 0) {
    tp += 0.5;
    fp += 0.5;
    fn += 0.5;
    tn += 0.5;
  }
  DTAStudy s;
  s.yA = std::log(tp / fn);
  s.sA2 = 1.0 / tp + 1.0 / fn;
  s.yB = std::log(tn / fp);
  s.sB2 = 1.0 / tn + 1.0 / fp;
  return s;
}

}  // namespace exactmeta::dta
