#include "exactmeta/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "exactmeta/errors.hpp"
#include "exactmeta/optim.hpp"

namespace exactmeta::net {

namespace {

Eigen::MatrixXd compound_symmetry(int n) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Constant(n, n, 0.5);
  p.diagonal().setOnes();
  return p;
}

// Blockwise Cholesky machinery for V(tau2) = diag(tau2 P(0.5) + S_i).
struct BlockChol {
  std::vector<Eigen::LLT<Eigen::MatrixXd>> llt;
  std::vector<int> offset;
  std::vector<int> size;
  double logdet = 0.0;

  BlockChol(const NetworkModel& model, double tau2) {
    int off = 0;
    for (const ContrastStudy& s : model.studies) {
      int pi = static_cast<int>(s.y.size());
      Eigen::MatrixXd block = tau2 * compound_symmetry(pi) + s.S;
      llt.emplace_back(block);
      if (llt.back().info() != Eigen::Success)
        throw numerical_error("network: covariance block not positive definite");
      offset.push_back(off);
      size.push_back(pi);
      const auto& l = llt.back().matrixLLT();
      for (int j = 0; j < pi; ++j) logdet += 2.0 * std::log(l(j, j));
      off += pi;
    }
  }

  Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const {
    Eigen::MatrixXd out(rhs.rows(), rhs.cols());
    for (std::size_t i = 0; i < llt.size(); ++i)
      out.middleRows(offset[i], size[i]) =
          llt[i].solve(rhs.middleRows(offset[i], size[i]));
    return out;
  }

  Eigen::VectorXd solve(const Eigen::VectorXd& rhs) const {
    Eigen::VectorXd out(rhs.size());
    for (std::size_t i = 0; i < llt.size(); ++i)
      out.segment(offset[i], size[i]) =
          llt[i].solve(rhs.segment(offset[i], size[i]).eval());
    return out;
  }

  // lower factor applied to a vector: A(tau2) u
  Eigen::VectorXd factor_times(const Eigen::VectorXd& u) const {
    Eigen::VectorXd out(u.size());
    for (std::size_t i = 0; i < llt.size(); ++i)
      out.segment(offset[i], size[i]) =
          llt[i].matrixL() * u.segment(offset[i], size[i]);
    return out;
  }

  double trace_vinv_q() const {
    double tr = 0.0;
    for (std::size_t i = 0; i < llt.size(); ++i) {
      Eigen::MatrixXd vinv_q = llt[i].solve(compound_symmetry(size[i]));
      tr += vinv_q.trace();
    }
    return tr;
  }

  // r^t V^{-1} Q V^{-1} r
  double sandwich(const Eigen::VectorXd& r) const {
    double out = 0.0;
    for (std::size_t i = 0; i < llt.size(); ++i) {
      Eigen::VectorXd g = llt[i].solve(r.segment(offset[i], size[i]));
      out += g.dot(compound_symmetry(size[i]) * g);
    }
    return out;
  }
};

Eigen::VectorXd stacked_y(const NetworkModel& model) {
  Eigen::VectorXd y(model.n_total);
  int off = 0;
  for (const ContrastStudy& s : model.studies) {
    y.segment(off, s.y.size()) = s.y;
    off += static_cast<int>(s.y.size());
  }
  return y;
}

struct GlsSolve {
  Eigen::VectorXd coef;      // GLS coefficients (may be empty)
  Eigen::VectorXd residual;  // y - X coef
  double deviance = 0.0;
  double score = 0.0;        // tr{V^-1 Q} - r^t V^-1 Q V^-1 r
};

GlsSolve gls_at(const NetworkModel& model, const Eigen::VectorXd& y,
                const Eigen::MatrixXd& x, double tau2) {
  BlockChol chol(model, tau2);
  GlsSolve out;
  if (x.cols() > 0) {
    Eigen::MatrixXd vinv_x = chol.solve(x);
    Eigen::MatrixXd xtvx = x.transpose() * vinv_x;
    out.coef = xtvx.ldlt().solve(vinv_x.transpose() * y);
    out.residual = y - x * out.coef;
  } else {
    out.coef = Eigen::VectorXd(0);
    out.residual = y;
  }
  Eigen::VectorXd vinv_r = chol.solve(out.residual);
  out.deviance = chol.logdet + out.residual.dot(vinv_r);
  out.score = chol.trace_vinv_q() - chol.sandwich(out.residual);
  return out;
}

// Profiled ML: root of the tau2 score with GLS coefficients, clamped at 0
// when the score has no sign change.
std::pair<double, bool> solve_tau2(const NetworkModel& model,
                                   const Eigen::VectorXd& y,
                                   const Eigen::MatrixXd& x) {
  auto score_at = [&](double t) { return gls_at(model, y, x, t).score; };
  GlsSolve base = gls_at(model, y, x, 0.0);
  if (base.score >= 0.0) return {0.0, true};
  double hi = 10.0 * std::max(1e-4, base.residual.array().square().maxCoeff());
  double fhi = score_at(hi);
  int guard = 0;
  while (fhi <= 0.0 && guard++ < 60) {
    hi *= 4.0;
    fhi = score_at(hi);
  }
  if (fhi <= 0.0) return {0.0, false};
  double tau2 = optim::scalar_root(score_at, 0.0, hi, base.score, fhi);
  return {tau2, true};
}

Eigen::MatrixXd w2_of(const NetworkModel& model) {
  return model.design.rightCols(model.p - 1);
}

Eigen::VectorXd w1_of(const NetworkModel& model) {
  return model.design.col(0);
}

}  // namespace

NetworkModel NetworkModel::build(std::vector<ContrastStudy> studies, int p) {
  NetworkModel model;
  model.p = p;
  model.studies = std::move(studies);
  model.n_total = 0;
  for (const ContrastStudy& s : model.studies)
    model.n_total += static_cast<int>(s.y.size());
  model.design = Eigen::MatrixXd::Zero(model.n_total, p);
  int off = 0;
  for (const ContrastStudy& s : model.studies) {
    for (std::size_t j = 0; j < s.treatments.size(); ++j) {
      int t = s.treatments[j];
      if (t < 1 || t > p)
        throw input_error("network: treatment id out of range");
      model.design(off + static_cast<int>(j), t - 1) = 1.0;
    }
    off += static_cast<int>(s.y.size());
  }
  model.validate();
  return model;
}

void NetworkModel::validate() const {
  if (p < 1) throw input_error("network: need at least one treatment");
  for (const ContrastStudy& s : studies) {
    int pi = static_cast<int>(s.y.size());
    if (pi < 1 || s.S.rows() != pi || s.S.cols() != pi ||
        static_cast<int>(s.treatments.size()) != pi)
      throw input_error("network: inconsistent study dimensions");
    Eigen::LLT<Eigen::MatrixXd> llt(s.S);
    if (llt.info() != Eigen::Success)
      throw input_error("network: within-study covariance not PD");
  }
  Eigen::FullPivLU<Eigen::MatrixXd> lu(design);
  if (lu.rank() < p)
    throw input_error("network: design rank deficient (disconnected network)");
}

std::vector<ContrastStudy> contrasts_from_arms(std::vector<ArmRecord> arms,
                                               bool augment) {
  std::vector<int> order;
  std::map<int, std::vector<ArmRecord>> by_study;
  for (const ArmRecord& a : arms) {
    if (by_study.find(a.study) == by_study.end()) order.push_back(a.study);
    by_study[a.study].push_back(a);
  }

  std::vector<ContrastStudy> out;
  for (int id : order) {
    auto study_arms = by_study[id];
    if (study_arms.size() < 2)
      throw input_error("network: single-arm study " + std::to_string(id));
    bool zero_cell = false;
    for (const ArmRecord& a : study_arms) {
      if (a.events <= 0.0 || a.events >= a.n) zero_cell = true;
    }
    if (zero_cell)
      for (ArmRecord& a : study_arms) {
        a.events += 0.5;
        a.n += 1.0;
      }
    bool has_ref = std::any_of(study_arms.begin(), study_arms.end(),
                               [](const ArmRecord& a) { return a.treatment == 0; });
    if (!has_ref) {
      if (!augment)
        throw input_error("network: study " + std::to_string(id) +
                          " lacks the reference arm (use augmentation)");
      study_arms.push_back({id, 0, 0.001, 0.01});
    }
    std::sort(study_arms.begin(), study_arms.end(),
              [](const ArmRecord& a, const ArmRecord& b) {
                return a.treatment < b.treatment;
              });
    for (std::size_t j = 1; j < study_arms.size(); ++j)
      if (study_arms[j].treatment == study_arms[j - 1].treatment)
        throw input_error("network: duplicate treatment in study " +
                          std::to_string(id));

    const ArmRecord& ref = study_arms.front();
    double e0 = ref.events, f0 = ref.n - ref.events;
    double ref_var = 1.0 / e0 + 1.0 / f0;
    double ref_logodds = std::log(e0 / f0);

    ContrastStudy cs;
    int pi = static_cast<int>(study_arms.size()) - 1;
    cs.y.resize(pi);
    cs.S = Eigen::MatrixXd::Constant(pi, pi, ref_var);
    for (int j = 0; j < pi; ++j) {
      const ArmRecord& a = study_arms[j + 1];
      double e = a.events, f = a.n - a.events;
      cs.treatments.push_back(a.treatment);
      cs.y[j] = std::log(e / f) - ref_logodds;
      cs.S(j, j) = 1.0 / e + 1.0 / f + ref_var;
    }
    out.push_back(std::move(cs));
  }
  return out;
}

Eigen::MatrixXd build_v(const NetworkModel& model, double tau2) {
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(model.n_total, model.n_total);
  int off = 0;
  for (const ContrastStudy& s : model.studies) {
    int pi = static_cast<int>(s.y.size());
    v.block(off, off, pi, pi) = tau2 * compound_symmetry(pi) + s.S;
    off += pi;
  }
  return v;
}

double deviance(const NetworkModel& model, const Eigen::VectorXd& beta,
                double tau2) {
  BlockChol chol(model, tau2);
  Eigen::VectorXd r = stacked_y(model) - model.design * beta;
  return chol.logdet + r.dot(chol.solve(r));
}

MlFit fit_ml(const NetworkModel& model) {
  Eigen::VectorXd y = stacked_y(model);
  auto [tau2, ok] = solve_tau2(model, y, model.design);
  GlsSolve g = gls_at(model, y, model.design, tau2);
  MlFit fit;
  fit.beta = g.coef;
  fit.tau2 = tau2;
  fit.deviance = g.deviance;
  fit.converged = ok;
  return fit;
}

RemlFit fit_reml(const NetworkModel& model) {
  Eigen::VectorXd y = stacked_y(model);
  auto objective = [&](double tau2) {
    BlockChol chol(model, tau2);
    Eigen::MatrixXd vinv_x = chol.solve(model.design);
    Eigen::MatrixXd xtvx = model.design.transpose() * vinv_x;
    Eigen::VectorXd beta = xtvx.ldlt().solve(vinv_x.transpose() * y);
    Eigen::VectorXd r = y - model.design * beta;
    return chol.logdet + std::log(xtvx.determinant()) + r.dot(chol.solve(r));
  };

  GlsSolve base = gls_at(model, y, model.design, 0.0);
  double hi = 10.0 * std::max(1e-4, base.residual.array().square().maxCoeff());
  // coarse geometric scan for a bracketing triple, then golden section
  double best_t = 0.0, best_f = objective(0.0);
  const int grid = 40;
  for (int j = 0; j <= grid; ++j) {
    double t = hi * std::pow(1e-4, 1.0 - static_cast<double>(j) / grid);
    double f = objective(t);
    if (f < best_f) {
      best_f = f;
      best_t = t;
    }
  }
  double lo = best_t / 3.0, up = std::min(best_t * 3.0 + 1e-6, hi);
  double tau2 = optim::golden_section(objective, lo, up, 1e-10 * (1.0 + up));
  if (objective(0.0) <= objective(tau2)) tau2 = 0.0;

  BlockChol chol(model, tau2);
  Eigen::MatrixXd vinv_x = chol.solve(model.design);
  Eigen::MatrixXd xtvx = model.design.transpose() * vinv_x;
  RemlFit fit;
  fit.tau2 = tau2;
  fit.beta = xtvx.ldlt().solve(vinv_x.transpose() * y);
  fit.cov_beta = xtvx.inverse();
  return fit;
}

NetworkModel contrast_transform(const NetworkModel& model,
                                const Eigen::VectorXd& c) {
  if (c.size() != model.p) throw input_error("contrast length != p");
  if (c.lpNorm<Eigen::Infinity>() == 0.0)
    throw input_error("contrast vector must be nonzero");
  int pivot = 0;
  for (int j = 1; j < model.p; ++j)
    if (std::fabs(c[j]) > std::fabs(c[pivot])) pivot = j;

  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(model.p, model.p);
  a.row(0) = c.transpose();
  int row = 1;
  for (int j = 0; j < model.p; ++j) {
    if (j == pivot) continue;
    a(row++, j) = 1.0;
  }
  NetworkModel out = model;
  out.design = model.design * a.inverse();
  return out;
}

ConstrainedFit fit_constrained(const NetworkModel& model, double beta10) {
  Eigen::VectorXd y = stacked_y(model) - w1_of(model) * beta10;
  Eigen::MatrixXd w2 = w2_of(model);
  auto [tau2, ok] = solve_tau2(model, y, w2);
  GlsSolve g = gls_at(model, y, w2, tau2);
  ConstrainedFit fit;
  fit.omega = g.coef;
  fit.tau2 = tau2;
  fit.deviance = g.deviance;
  fit.converged = ok;
  return fit;
}

Eigen::VectorXd constrained_equations(const NetworkModel& model, double beta10,
                                      const Eigen::VectorXd& omega,
                                      double tau2) {
  Eigen::MatrixXd w2 = w2_of(model);
  Eigen::VectorXd r = stacked_y(model) - w1_of(model) * beta10 - w2 * omega;
  BlockChol chol(model, tau2);
  Eigen::VectorXd vinv_r = chol.solve(r);
  Eigen::VectorXd out(model.p);
  out.head(model.p - 1) = w2.transpose() * vinv_r;
  out[model.p - 1] = chol.trace_vinv_q() - chol.sandwich(r);
  return out;
}

std::optional<PivotSolution> pivot_net(std::span<const double> u,
                                       const NetworkModel& model,
                                       double beta10,
                                       const ConstrainedFit& cfit) {
  const int n = model.n_total;
  Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), n);
  Eigen::MatrixXd w2 = w2_of(model);
  BlockChol chol_c(model, cfit.tau2);
  double tr = chol_c.trace_vinv_q();

  Eigen::MatrixXd vinv_w2 = chol_c.solve(w2);
  Eigen::MatrixXd xtvx = w2.transpose() * vinv_w2;
  Eigen::LDLT<Eigen::MatrixXd> xtvx_ldlt(xtvx);

  auto project = [&](const Eigen::VectorXd& v) -> Eigen::VectorXd {
    // B(tau2_hat_c) v = v - W2 (W2' Vc^-1 W2)^-1 W2' Vc^-1 v
    if (model.p == 1) return v;
    return v - w2 * xtvx_ldlt.solve(vinv_w2.transpose() * v);
  };

  auto excess = [&](double tau2) {
    Eigen::VectorXd a = BlockChol(model, tau2).factor_times(uv);
    return tr - chol_c.sandwich(project(a));
  };

  PivotSolution sol;
  double f0 = excess(0.0);
  if (f0 <= 0.0) {
    sol.tau2_star = 0.0;
    sol.clamped = true;
  } else {
    Eigen::VectorXd r0 =
        stacked_y(model) - w1_of(model) * beta10 - w2 * cfit.omega;
    double hi = 10.0 * std::max(1e-4, r0.array().square().maxCoeff());
    double fhi = excess(hi);
    int guard = 0;
    while (fhi > 0.0 && guard++ < 3) {
      hi *= 4.0;
      fhi = excess(hi);
    }
    if (fhi > 0.0) return std::nullopt;  // no bracket within the cap
    sol.tau2_star = optim::scalar_root(excess, 0.0, hi, f0, fhi);
  }

  Eigen::VectorXd a_star = BlockChol(model, sol.tau2_star).factor_times(uv);
  if (model.p == 1)
    sol.omega_star = Eigen::VectorXd(0);
  else
    sol.omega_star = cfit.omega - xtvx_ldlt.solve(vinv_w2.transpose() * a_star);
  return sol;
}

std::optional<double> weight_net(std::span<const double> u,
                                 const NetworkModel& model, double beta10,
                                 const ConstrainedFit& cfit,
                                 const PivotSolution& pivot) {
  const int n = model.n_total;
  const int p = model.p;
  Eigen::VectorXd uv = Eigen::Map<const Eigen::VectorXd>(u.data(), n);
  Eigen::MatrixXd w2 = w2_of(model);

  // G as a function of (omega_hat, tau2_hat, omega, tau2)
  auto g_fn = [&](const Eigen::VectorXd& omega_hat, double tau2_hat,
                  const Eigen::VectorXd& omega,
                  double tau2) -> Eigen::VectorXd {
    BlockChol chol_h(model, tau2_hat);
    Eigen::VectorXd r = BlockChol(model, tau2).factor_times(uv);
    if (p > 1) r += w2 * (omega - omega_hat);
    Eigen::VectorXd out(p);
    if (p > 1) out.head(p - 1) = w2.transpose() * chol_h.solve(r);
    out[p - 1] = chol_h.trace_vinv_q() - chol_h.sandwich(r);
    return out;
  };

  const Eigen::VectorXd& omega_hat = cfit.omega;
  const double tau2_hat = cfit.tau2;
  const Eigen::VectorXd& omega = pivot.omega_star;
  const double tau2 = pivot.tau2_star;

  BlockChol chol_c(model, tau2_hat);
  Eigen::VectorXd r = BlockChol(model, tau2).factor_times(uv);
  if (p > 1) r += w2 * (omega - omega_hat);

  Eigen::MatrixXd numer(p, p), denom(p, p);
  if (p > 1) {
    Eigen::MatrixXd vinv_w2 = chol_c.solve(w2);
    Eigen::MatrixXd xtvx = w2.transpose() * vinv_w2;
    // V^-1 Q V^-1 r computed blockwise
    Eigen::VectorXd vinv_r = chol_c.solve(r);
    Eigen::VectorXd q_vinv_r(n);
    int off = 0;
    for (const ContrastStudy& s : model.studies) {
      int pi = static_cast<int>(s.y.size());
      q_vinv_r.segment(off, pi) =
          compound_symmetry(pi) * vinv_r.segment(off, pi);
      off += pi;
    }
    Eigen::VectorXd m_r = chol_c.solve(q_vinv_r);
    Eigen::VectorXd g2_row = 2.0 * (w2.transpose() * m_r);

    denom.topLeftCorner(p - 1, p - 1) = xtvx;
    numer.topLeftCorner(p - 1, p - 1) = -xtvx;
    denom.bottomLeftCorner(1, p - 1) = -g2_row.transpose();
    numer.bottomLeftCorner(1, p - 1) = g2_row.transpose();
  }

  // numeric tau2 and tau2_hat columns
  auto diff_col = [&](bool hat_side) -> Eigen::VectorXd {
    double base = hat_side ? tau2_hat : tau2;
    double h = 1e-5 * std::max(1.0, base);
    double lo = std::max(base - h, 0.0);
    double hi = base + h;
    Eigen::VectorXd g_hi, g_lo;
    if (hat_side) {
      g_hi = g_fn(omega_hat, hi, omega, tau2);
      g_lo = g_fn(omega_hat, lo, omega, tau2);
    } else {
      g_hi = g_fn(omega_hat, tau2_hat, omega, hi);
      g_lo = g_fn(omega_hat, tau2_hat, omega, lo);
    }
    return (g_hi - g_lo) / (hi - lo);
  };
  denom.col(p - 1) = diff_col(false);
  numer.col(p - 1) = diff_col(true);

  double dd = std::fabs(denom.determinant());
  double dn = std::fabs(numer.determinant());
  if (!std::isfinite(dd) || !std::isfinite(dn) || dd <= 0.0)
    return std::nullopt;
  return dn / dd;
}

double lrt(const NetworkModel& model, double beta10) {
  double dev_c = fit_constrained(model, beta10).deviance;
  double dev_u = fit_ml(model).deviance;
  return std::max(0.0, dev_c - dev_u);
}

NetPivotModel::NetPivotModel(const NetworkModel& model, double beta10)
    : model_(model), beta10_(beta10), cfit_(fit_constrained(model, beta10)) {
  if (!cfit_.converged)
    throw numerical_error("network: constrained fit did not converge");
}

int NetPivotModel::draw_dimension() const { return model_.n_total; }

double NetPivotModel::observed_lrt() const { return lrt(model_, beta10_); }

std::optional<mc::PivotModel::Replicate> NetPivotModel::simulate(
    std::span<const double> u) const {
  auto pivot = pivot_net(u, model_, beta10_, cfit_);
  if (!pivot) return std::nullopt;
  auto w = weight_net(u, model_, beta10_, cfit_, *pivot);
  if (!w) return std::nullopt;

  Eigen::VectorXd uv =
      Eigen::Map<const Eigen::VectorXd>(u.data(), model_.n_total);
  Eigen::VectorXd y_star =
      w1_of(model_) * beta10_ +
      BlockChol(model_, pivot->tau2_star).factor_times(uv);
  if (model_.p > 1) y_star += w2_of(model_) * pivot->omega_star;

  NetworkModel synth = model_;
  int off = 0;
  for (ContrastStudy& s : synth.studies) {
    int pi = static_cast<int>(s.y.size());
    s.y = y_star.segment(off, pi);
    off += pi;
  }

  Replicate rep;
  rep.lrt = lrt(synth, beta10_);
  rep.weight = *w;
  return rep;
}

mc::PValueResult p_value_contrast(const NetworkModel& model,
                                  const Eigen::VectorXd& c, double eta0, int b,
                                  std::uint64_t seed) {
  NetworkModel transformed = contrast_transform(model, c);
  NetPivotModel pm(transformed, eta0);
  return mc::conditional_p_value(pm, b, seed);
}

mc::ConfidenceInterval ci_contrast(const NetworkModel& model,
                                   const Eigen::VectorXd& c, double alpha,
                                   int b, std::uint64_t seed) {
  NetworkModel transformed = contrast_transform(model, c);
  MlFit ml = fit_ml(transformed);
  double eta_hat = ml.beta[0];

  BlockChol chol(transformed, ml.tau2);
  Eigen::MatrixXd vinv_x = chol.solve(transformed.design);
  Eigen::MatrixXd cov =
      (transformed.design.transpose() * vinv_x).inverse();
  boost::math::normal norm;
  double z = boost::math::quantile(norm, 1.0 - alpha / 2.0);
  double hw = z * std::sqrt(cov(0, 0));

  DrawMatrix draws = normal_draws(seed, b, model.n_total);
  auto p_fn = [&](double eta0) {
    NetPivotModel pm(transformed, eta0);
    return mc::conditional_p_value(pm, draws).p;
  };
  mc::InversionOptions opt;
  opt.tol = 1e-4 * hw;
  return mc::invert_to_interval(p_fn, eta_hat, hw, alpha, opt);
}

std::vector<NetMethodResult> reml_wald_net(const NetworkModel& model,
                                           double alpha) {
  RemlFit fit = fit_reml(model);
  boost::math::normal norm;
  double z = boost::math::quantile(norm, 1.0 - alpha / 2.0);
  std::vector<NetMethodResult> out(model.p);
  for (int j = 0; j < model.p; ++j) {
    out[j].estimate = fit.beta[j];
    double hw = z * std::sqrt(fit.cov_beta(j, j));
    out[j].lower = fit.beta[j] - hw;
    out[j].upper = fit.beta[j] + hw;
    out[j].tau2 = fit.tau2;
  }
  return out;
}

NetMethodResult lr_interval_net(const NetworkModel& model,
                                const Eigen::VectorXd& c, double alpha) {
  NetworkModel transformed = contrast_transform(model, c);
  MlFit ml = fit_ml(transformed);
  boost::math::chi_squared chi1(1);
  double crit = boost::math::quantile(chi1, 1.0 - alpha);

  auto excess = [&](double eta0) { return lrt(transformed, eta0) - crit; };

  BlockChol chol(transformed, ml.tau2);
  Eigen::MatrixXd vinv_x = chol.solve(transformed.design);
  Eigen::MatrixXd cov = (transformed.design.transpose() * vinv_x).inverse();
  boost::math::normal norm;
  double hw = boost::math::quantile(norm, 1.0 - alpha / 2.0) *
              std::sqrt(cov(0, 0));

  auto endpoint = [&](int dir) {
    double step = hw;
    double inner = ml.beta[0];
    double outer = inner;
    bool found = false;
    for (int e = 0; e < 60; ++e) {
      outer = ml.beta[0] + dir * step;
      if (excess(outer) > 0.0) {
        found = true;
        break;
      }
      inner = outer;
      step *= 2.0;
    }
    if (!found) throw numerical_error("lr_interval_net: bracket failed");
    double lo = std::min(inner, outer), hi = std::max(inner, outer);
    return optim::scalar_root(excess, lo, hi, excess(lo), excess(hi), 1e-10);
  };

  NetMethodResult res;
  res.estimate = ml.beta[0];
  res.tau2 = ml.tau2;
  res.lower = endpoint(-1);
  res.upper = endpoint(+1);
  return res;
}

}  // namespace exactmeta::net
