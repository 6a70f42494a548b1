#include <doctest.h>

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "exactmeta/bivariate.hpp"
#include "exactmeta/simulate.hpp"

using namespace exactmeta;

namespace {

Eigen::Matrix2d marginal(const dta::DTAStudy& s, double a, double b, double c) {
  Eigen::Matrix2d v;
  v << a + s.sA2, c, c, b + s.sB2;
  return v;
}

// deviance in the (Sigma11, Sigma22, Sigma12) parameterization
double dev_sigma(const dta::Data& data, const Eigen::Vector2d& mu, double a,
                 double b, double c) {
  double out = 0.0;
  for (const auto& s : data) {
    Eigen::Matrix2d v = marginal(s, a, b, c);
    Eigen::Vector2d d(s.yA - mu[0], s.yB - mu[1]);
    out += std::log(v.determinant()) + d.dot(v.inverse() * d);
  }
  return out;
}

dta::Data small5() { return sim::gen_bivariate(5, 0.4, 0.2, 101).data; }

}  // namespace

TEST_CASE("deviance agrees with a direct Eigen evaluation") {
  dta::Data d = small5();
  Eigen::Vector2d mu(0.9, -0.8);
  dta::Nuisance psi{0.3, 0.5, -0.4};
  double c = psi.rho * std::sqrt(psi.sA2 * psi.sB2);
  CHECK(dta::deviance(d, mu, psi) ==
        doctest::Approx(dev_sigma(d, mu, psi.sA2, psi.sB2, c)).epsilon(1e-12));
}

TEST_CASE("score equals the deviance gradient in Sigma coordinates") {
  dta::Data d = small5();
  Eigen::Vector2d mu(1.0, -1.0);
  dta::Nuisance psi{0.35, 0.6, 0.3};
  double c = psi.rho * std::sqrt(psi.sA2 * psi.sB2);
  Eigen::Vector3d f = dta::score(d, mu, psi);

  double h = 1e-6;
  double da = (dev_sigma(d, mu, psi.sA2 + h, psi.sB2, c) -
               dev_sigma(d, mu, psi.sA2 - h, psi.sB2, c)) /
              (2 * h);
  double db = (dev_sigma(d, mu, psi.sA2, psi.sB2 + h, c) -
               dev_sigma(d, mu, psi.sA2, psi.sB2 - h, c)) /
              (2 * h);
  double dc = (dev_sigma(d, mu, psi.sA2, psi.sB2, c + h) -
               dev_sigma(d, mu, psi.sA2, psi.sB2, c - h)) /
              (2 * h);
  CHECK(f[0] == doctest::Approx(da).epsilon(1e-5));
  CHECK(f[1] == doctest::Approx(db).epsilon(1e-5));
  CHECK(f[2] == doctest::Approx(dc).epsilon(1e-5));
}

TEST_CASE("constrained and unconstrained fits drive the score to zero") {
  for (std::uint64_t seed : {7u, 19u, 42u}) {
    auto rep = sim::gen_bivariate(8, 0.5, 0.0, seed);
    auto cfit = dta::fit_constrained(rep.data, rep.mu);
    CHECK(cfit.converged);
    CHECK(cfit.score_residual < 1e-6);

    auto mfit = dta::fit_ml(rep.data);
    CHECK(mfit.converged);
    CHECK(mfit.score_residual < 1e-6);
    CHECK(mfit.deviance <= cfit.deviance + 1e-9);
  }
}

TEST_CASE("pivot returns the conditioning point on standardized residuals") {
  auto rep = sim::gen_bivariate(6, 0.4, 0.3, 11);
  const auto& d = rep.data;
  Eigen::Vector2d mu0 = rep.mu;
  auto cfit = dta::fit_constrained(d, mu0);
  REQUIRE(cfit.converged);

  std::vector<double> u(2 * d.size());
  for (std::size_t i = 0; i < d.size(); ++i) {
    double off = cfit.psi.rho * std::sqrt(cfit.psi.sA2 * cfit.psi.sB2);
    Eigen::Matrix2d v = marginal(d[i], cfit.psi.sA2, cfit.psi.sB2, off);
    Eigen::Matrix2d l = v.llt().matrixL();
    Eigen::Vector2d r(d[i].yA - mu0[0], d[i].yB - mu0[1]);
    Eigen::Vector2d ui = l.triangularView<Eigen::Lower>().solve(r);
    u[2 * i] = ui[0];
    u[2 * i + 1] = ui[1];
  }
  auto psi_star = dta::pivot_psi_star(u, d, mu0, cfit.psi);
  REQUIRE(psi_star.has_value());
  CHECK(psi_star->sA2 == doctest::Approx(cfit.psi.sA2).epsilon(1e-4));
  CHECK(psi_star->sB2 == doctest::Approx(cfit.psi.sB2).epsilon(1e-4));
  CHECK(psi_star->rho == doctest::Approx(cfit.psi.rho).scale(1).epsilon(1e-4));
}

TEST_CASE("pivot solutions satisfy the transformed equations") {
  auto rep = sim::gen_bivariate(7, 0.5, 0.0, 23);
  const auto& d = rep.data;
  auto cfit = dta::fit_constrained(d, rep.mu);
  REQUIRE(cfit.converged);

  const int k = static_cast<int>(d.size());
  std::vector<Eigen::Matrix2d> vc_inv;
  Eigen::Vector3d trace_sum = Eigen::Vector3d::Zero();
  double off_c = cfit.psi.rho * std::sqrt(cfit.psi.sA2 * cfit.psi.sB2);
  for (int i = 0; i < k; ++i) {
    Eigen::Matrix2d vi =
        marginal(d[i], cfit.psi.sA2, cfit.psi.sB2, off_c).inverse();
    vc_inv.push_back(vi);
    trace_sum += Eigen::Vector3d(vi(0, 0), vi(1, 1), 2.0 * vi(0, 1));
  }

  DrawMatrix draws = normal_draws(31, 20, 2 * k);
  int solved = 0;
  for (int b = 0; b < 20; ++b) {
    double residual = 0.0;
    auto psi = dta::pivot_psi_star(draws.row(b), d, rep.mu, cfit.psi, &residual);
    if (!psi) continue;
    ++solved;
    double off = psi->rho * std::sqrt(psi->sA2 * psi->sB2);
    Eigen::Vector3d f = trace_sum;
    for (int i = 0; i < k; ++i) {
      Eigen::Matrix2d v = marginal(d[i], psi->sA2, psi->sB2, off);
      Eigen::Matrix2d l = v.llt().matrixL();
      Eigen::Vector2d ui(draws.row(b)[2 * i], draws.row(b)[2 * i + 1]);
      Eigen::Vector2d g = vc_inv[i] * (l * ui);
      f -= Eigen::Vector3d(g[0] * g[0], g[1] * g[1], 2.0 * g[0] * g[1]);
    }
    CHECK(f.lpNorm<Eigen::Infinity>() < 1e-6);
  }
  CHECK(solved >= 15);
}

TEST_CASE("weight is invariant to relabeling the studies") {
  auto rep = sim::gen_bivariate(6, 0.4, 0.2, 37);
  const auto& d = rep.data;
  auto cfit = dta::fit_constrained(d, rep.mu);
  DrawMatrix draws = normal_draws(41, 4, 12);

  dta::Data perm;
  std::vector<int> order{3, 0, 5, 1, 4, 2};
  for (int i : order) perm.push_back(d[i]);

  for (int b = 0; b < 4; ++b) {
    auto psi = dta::pivot_psi_star(draws.row(b), d, rep.mu, cfit.psi);
    if (!psi) continue;
    auto w = dta::weight_bivar(draws.row(b), d, rep.mu, cfit.psi, *psi);
    if (!w) continue;

    std::vector<double> up(12);
    for (int j = 0; j < 6; ++j) {
      up[2 * j] = draws.row(b)[2 * order[j]];
      up[2 * j + 1] = draws.row(b)[2 * order[j] + 1];
    }
    auto psi_p = dta::pivot_psi_star(up, perm, rep.mu, cfit.psi);
    REQUIRE(psi_p.has_value());
    auto w_p = dta::weight_bivar(up, perm, rep.mu, cfit.psi, *psi_p);
    REQUIRE(w_p.has_value());
    CHECK(*w > 0.0);
    CHECK(*w == doctest::Approx(*w_p).epsilon(1e-4));
  }
}

TEST_CASE("p-value at the joint MLE is 1 and is reproducible") {
  auto rep = sim::gen_bivariate(6, 0.5, 0.0, 51);
  auto fit = dta::fit_ml(rep.data);
  auto res = dta::p_value(rep.data, fit.mu, 60, 9);
  CHECK(res.p == 1.0);

  auto a = dta::p_value(rep.data, rep.mu, 80, 13);
  auto b = dta::p_value(rep.data, rep.mu, 80, 13);
  CHECK(a.p == b.p);
  CHECK(a.ess == b.ess);
}

TEST_CASE("approximate region boundary sits on the Wald ellipse") {
  auto rep = sim::gen_bivariate(8, 0.5, 0.2, 61);
  auto fit = dta::fit_reml(rep.data);
  auto region = dta::approx_region(rep.data, 0.05, 48);
  Eigen::Matrix2d r;
  r << fit.sA * fit.sA, fit.rho_hat * fit.sA * fit.sB,
      fit.rho_hat * fit.sA * fit.sB, fit.sB * fit.sB;
  Eigen::Matrix2d rinv = r.inverse();
  for (const auto& p : region.boundary) {
    Eigen::Vector2d d = p - fit.mu;
    CHECK(d.dot(rinv * d) == doctest::Approx(5.991464547).epsilon(1e-6));
  }
  // containment flips just inside / outside the boundary
  Eigen::Vector2d dir = (region.boundary[5] - fit.mu).normalized();
  double rad = (region.boundary[5] - fit.mu).norm();
  CHECK(dta::acr_covers(fit, fit.mu + 0.99 * rad * dir, 0.05));
  CHECK(!dta::acr_covers(fit, fit.mu + 1.01 * rad * dir, 0.05));
}

TEST_CASE("monte carlo region is finite, positive, and deterministic") {
  auto rep = sim::gen_bivariate(6, 0.5, 0.0, 71);
  auto ra = dta::confidence_region(rep.data, 0.05, 8, 80, 5);
  CHECK(!ra.partial);
  for (double r : ra.radii_raw) {
    CHECK(std::isfinite(r));
    CHECK(r > 0.0);
  }
  auto rb = dta::confidence_region(rep.data, 0.05, 8, 80, 5);
  for (int j = 0; j < 8; ++j) CHECK(ra.radii_raw[j] == rb.radii_raw[j]);
}

TEST_CASE("roc transforms and count ingestion") {
  auto [sens, fpr] = dta::to_roc(0.0, 0.0);
  CHECK(sens == doctest::Approx(0.5));
  CHECK(fpr == doctest::Approx(0.5));
  auto [s2, f2] = dta::to_roc(2.0, 1.0);
  CHECK(s2 == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  CHECK(f2 == doctest::Approx(1.0 - 1.0 / (1.0 + std::exp(-1.0))));

  auto s = dta::study_from_counts(10, 2, 5, 40);
  CHECK(s.yA == doctest::Approx(std::log(2.0)));
  CHECK(s.sA2 == doctest::Approx(0.3));
  auto z = dta::study_from_counts(10, 0, 5, 40);
  CHECK(z.yB == doctest::Approx(std::log(40.5 / 0.5)));

  // SROC line passes through the pooled point
  dta::BivarFit fit;
  fit.mu = Eigen::Vector2d(1.2, 0.8);
  fit.psi = {0.4, 0.25, 0.5};
  std::vector<double> grid{0.8};
  auto pts = dta::sroc_points(fit, grid);
  CHECK(pts[0].mu_a == doctest::Approx(1.2));
}
