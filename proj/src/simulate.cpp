#include "exactmeta/simulate.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include "exactmeta/comparators.hpp"
#include "exactmeta/errors.hpp"
#include "exactmeta/parallel.hpp"
#include "exactmeta/rng.hpp"

namespace exactmeta::sim {

namespace {

int draw_binomial(Philox& rng, int n, double p) {
  int x = 0;
  for (int i = 0; i < n; ++i)
    if (rng.uniform() < p) ++x;
  return x;
}

double expit_shift(double p0, double theta) {
  double e = p0 * std::exp(theta);
  return e / (1.0 - p0 + e);
}

// log-OR and variance from a 2x2 table, 0.5 added to every cell
void log_or(int x1, int n1, int x0, int n0, double* y, double* s2) {
  double a = x1 + 0.5, b = n1 - x1 + 0.5, c = x0 + 0.5, d = n0 - x0 + 0.5;
  *y = std::log(a / b) - std::log(c / d);
  *s2 = 1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d;
}

}  // namespace

UniReplicate gen_univariate(int k, double mu, double tau2, std::uint64_t seed) {
  if (k < 2) throw input_error("gen_univariate: k must be >= 2");
  Philox rng(seed, 0);
  UniReplicate rep;
  rep.mu = mu;
  rep.tau2 = tau2;
  rep.seed = seed;
  double sd = std::sqrt(tau2);
  for (int i = 0; i < k; ++i) {
    double theta = mu + sd * rng.normal();
    double p0 = 0.095 + (0.65 - 0.095) * rng.uniform();
    double p1 = expit_shift(p0, theta);
    int n = rng.uniform_int(20, 200);
    int x0 = draw_binomial(rng, n, p0);
    int x1 = draw_binomial(rng, n, p1);
    double y, s2;
    log_or(x1, n, x0, n, &y, &s2);
    rep.theta.push_back(theta);
    rep.data.y.push_back(y);
    rep.data.sigma2.push_back(s2);
  }
  return rep;
}

DtaReplicate gen_bivariate(int k, double tau2, double rho,
                           std::uint64_t seed) {
  if (k < 2) throw input_error("gen_bivariate: k must be >= 2");
  Philox rng(seed, 0);
  DtaReplicate rep;
  rep.mu << 1.0, -1.0;
  rep.tau2 = tau2;
  rep.rho = rho;
  rep.seed = seed;

  auto within_var = [&]() {
    for (;;) {
      double z = rng.normal();
      double v = 0.25 * z * z;
      if (v >= 0.009 && v <= 0.6) return v;
    }
  };

  // lower Cholesky of tau2 * P(rho)
  double l11 = std::sqrt(tau2);
  double l21 = l11 * rho;
  double l22 = l11 * std::sqrt(1.0 - rho * rho);
  for (int i = 0; i < k; ++i) {
    double z1 = rng.normal(), z2 = rng.normal();
    double mu_a = rep.mu[0] + l11 * z1;
    double mu_b = rep.mu[1] + l21 * z1 + l22 * z2;
    dta::DTAStudy s;
    s.sA2 = within_var();
    s.sB2 = within_var();
    s.yA = mu_a + std::sqrt(s.sA2) * rng.normal();
    s.yB = mu_b + std::sqrt(s.sB2) * rng.normal();
    rep.data.push_back(s);
  }
  return rep;
}

std::vector<std::vector<int>> network_designs(int k) {
  using D = std::vector<int>;
  const D ab{0, 1}, ac{0, 2}, ad{0, 3}, bc{1, 2}, bd{1, 3}, cd{2, 3};
  const D acd{0, 2, 3}, bcd{1, 2, 3};
  std::vector<D> out;
  auto rep = [&](const D& d, int times) {
    for (int i = 0; i < times; ++i) out.push_back(d);
  };
  switch (k) {
    case 8:
      rep(ab, 1); rep(ac, 3); rep(ad, 1); rep(cd, 1); rep(acd, 1); rep(bcd, 1);
      break;
    case 12:
      rep(ab, 2); rep(ac, 4); rep(ad, 2); rep(bd, 1); rep(cd, 1); rep(acd, 1);
      rep(bcd, 1);
      break;
    case 16:
      rep(ab, 2); rep(ac, 6); rep(ad, 3); rep(bc, 1); rep(bd, 1); rep(cd, 1);
      rep(acd, 1); rep(bcd, 1);
      break;
    default:
      throw input_error("network_designs: k must be one of 8, 12, 16");
  }
  return out;
}

NmaReplicate gen_network(int k, double tau, std::uint64_t seed) {
  auto designs = network_designs(k);
  Philox rng(seed, 0);

  Eigen::Vector3d mu(0.4, 0.7, 1.0);
  Eigen::Matrix3d p05 = Eigen::Matrix3d::Constant(0.5);
  p05.diagonal().setOnes();
  Eigen::Matrix3d chol =
      Eigen::LLT<Eigen::Matrix3d>(tau * tau * p05).matrixL();

  std::vector<net::ArmRecord> arms;
  for (std::size_t i = 0; i < designs.size(); ++i) {
    Eigen::Vector3d z(rng.normal(), rng.normal(), rng.normal());
    Eigen::Vector3d theta = mu + chol * z;
    double p0 = 0.095 + (0.65 - 0.095) * rng.uniform();
    int n = rng.uniform_int(20, 200);
    for (int t : designs[i]) {
      double p = (t == 0) ? p0 : expit_shift(p0, theta[t - 1]);
      int x = draw_binomial(rng, n, p);
      arms.push_back({static_cast<int>(i) + 1, t,
                      static_cast<double>(x), static_cast<double>(n)});
    }
  }

  NmaReplicate rep;
  rep.model =
      net::NetworkModel::build(net::contrasts_from_arms(arms, true), 3);
  rep.mu = mu;
  rep.tau = tau;
  rep.seed = seed;
  return rep;
}

namespace {

struct RepOutcome {
  // covered[m][t]: 1 yes, 0 no, -1 method failed on this replicate
  std::vector<std::vector<int>> covered;
  std::vector<std::vector<double>> length;  // NaN when no interval
};

int target_count(const std::string& generator) {
  return generator == "nma" ? 3 : 1;
}

void run_uni_rep(const CoverageConfig& cfg, int r, RepOutcome* out) {
  std::uint64_t data_seed = mix_seed(cfg.seed, 2 * static_cast<unsigned>(r));
  std::uint64_t mc_seed = mix_seed(cfg.seed, 2 * static_cast<unsigned>(r) + 1);
  UniReplicate rep = gen_univariate(cfg.k, -0.8, cfg.tau2, data_seed);

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    const std::string& method = cfg.methods[m];
    try {
      if (method == "mc") {
        DrawMatrix draws = normal_draws(mc_seed, cfg.B, cfg.k);
        uni::MuPivotModel model(rep.data, rep.mu);
        mc::PValueResult pv = mc::conditional_p_value(model, draws);
        out->covered[m][0] = pv.p >= cfg.alpha ? 1 : 0;
        // coverage needs one p-value per replicate; an interval whose
        // endpoint search fails only loses its length contribution
        try {
          mc::ConfidenceInterval ci =
              uni::ci_mu(rep.data, cfg.alpha, cfg.B, mc_seed);
          out->length[m][0] = ci.upper - ci.lower;
        } catch (const numerical_error&) {
        }
      } else {
        cmp::MethodResult res;
        if (method == "dl")
          res = cmp::dl_interval(rep.data, cfg.alpha);
        else if (method == "reml")
          res = cmp::reml_interval_uni(rep.data, cfg.alpha);
        else if (method == "knha")
          res = cmp::knha_interval(rep.data, cfg.alpha);
        else if (method == "lr")
          res = cmp::lr_interval_uni(rep.data, cfg.alpha);
        else
          throw input_error("unknown method for uni generator: " + method);
        out->covered[m][0] =
            (res.lower <= rep.mu && rep.mu <= res.upper) ? 1 : 0;
        out->length[m][0] = res.upper - res.lower;
      }
    } catch (const numerical_error&) {
      out->covered[m][0] = -1;
    }
  }
}

void run_dta_rep(const CoverageConfig& cfg, int r, RepOutcome* out) {
  std::uint64_t data_seed = mix_seed(cfg.seed, 2 * static_cast<unsigned>(r));
  std::uint64_t mc_seed = mix_seed(cfg.seed, 2 * static_cast<unsigned>(r) + 1);
  DtaReplicate rep = gen_bivariate(cfg.k, cfg.tau2, cfg.rho, data_seed);

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    const std::string& method = cfg.methods[m];
    try {
      if (method == "mc") {
        mc::PValueResult pv = dta::p_value(rep.data, rep.mu, cfg.B, mc_seed);
        out->covered[m][0] = pv.p >= cfg.alpha ? 1 : 0;
      } else if (method == "acr") {
        dta::RemlBivarFit fit = dta::fit_reml(rep.data);
        out->covered[m][0] = dta::acr_covers(fit, rep.mu, cfg.alpha) ? 1 : 0;
      } else {
        throw input_error("unknown method for dta generator: " + method);
      }
    } catch (const numerical_error&) {
      out->covered[m][0] = -1;
    }
  }
}

void run_nma_rep(const CoverageConfig& cfg, int r, RepOutcome* out) {
  std::uint64_t data_seed = mix_seed(cfg.seed, 2 * static_cast<unsigned>(r));
  std::uint64_t mc_seed = mix_seed(cfg.seed, 2 * static_cast<unsigned>(r) + 1);
  NmaReplicate rep = gen_network(cfg.k, cfg.tau, data_seed);

  for (std::size_t m = 0; m < cfg.methods.size(); ++m) {
    const std::string& method = cfg.methods[m];
    try {
      if (method == "mc") {
        for (int j = 0; j < 3; ++j) {
          Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
          c[j] = 1.0;
          mc::PValueResult pv = net::p_value_contrast(
              rep.model, c, rep.mu[j], cfg.B,
              mix_seed(mc_seed, static_cast<unsigned>(j)));
          out->covered[m][j] = pv.p >= cfg.alpha ? 1 : 0;
        }
      } else if (method == "reml") {
        auto res = net::reml_wald_net(rep.model, cfg.alpha);
        for (int j = 0; j < 3; ++j) {
          out->covered[m][j] =
              (res[j].lower <= rep.mu[j] && rep.mu[j] <= res[j].upper) ? 1 : 0;
          out->length[m][j] = res[j].upper - res[j].lower;
        }
      } else if (method == "lr") {
        for (int j = 0; j < 3; ++j) {
          Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
          c[j] = 1.0;
          net::NetMethodResult res = net::lr_interval_net(rep.model, c,
                                                          cfg.alpha);
          out->covered[m][j] =
              (res.lower <= rep.mu[j] && rep.mu[j] <= res.upper) ? 1 : 0;
          out->length[m][j] = res.upper - res.lower;
        }
      } else {
        throw input_error("unknown method for nma generator: " + method);
      }
    } catch (const numerical_error&) {
      for (int j = 0; j < 3; ++j) out->covered[m][j] = -1;
    }
  }
}

}  // namespace

ExperimentReport run_coverage(const CoverageConfig& cfg) {
  if (cfg.R < 1) throw input_error("run_coverage: R must be >= 1");
  if (cfg.B < 1) throw input_error("run_coverage: B must be >= 1");
  if (cfg.methods.empty()) throw input_error("run_coverage: no methods");

  auto t0 = std::chrono::steady_clock::now();
  const int n_targets = target_count(cfg.generator);
  const int n_methods = static_cast<int>(cfg.methods.size());

  std::vector<RepOutcome> outcomes(cfg.R);
  for (RepOutcome& o : outcomes) {
    o.covered.assign(n_methods, std::vector<int>(n_targets, -1));
    o.length.assign(
        n_methods,
        std::vector<double>(n_targets,
                            std::numeric_limits<double>::quiet_NaN()));
  }

  parallel_for(cfg.R, [&](int r) {
    if (cfg.generator == "uni")
      run_uni_rep(cfg, r, &outcomes[r]);
    else if (cfg.generator == "dta")
      run_dta_rep(cfg, r, &outcomes[r]);
    else if (cfg.generator == "nma")
      run_nma_rep(cfg, r, &outcomes[r]);
    else
      throw input_error("run_coverage: unknown generator " + cfg.generator);
  });

  ExperimentReport report;
  report.config = cfg;
  for (int m = 0; m < n_methods; ++m) {
    CellResult cell;
    cell.method = cfg.methods[m];
    for (int t = 0; t < n_targets; ++t) {
      int n_ok = 0, n_cov = 0, n_len = 0;
      double len_sum = 0.0;
      for (const RepOutcome& o : outcomes) {
        if (o.covered[m][t] < 0) continue;
        ++n_ok;
        n_cov += o.covered[m][t];
        if (std::isfinite(o.length[m][t])) {
          ++n_len;
          len_sum += o.length[m][t];
        }
      }
      double cov = n_ok > 0 ? static_cast<double>(n_cov) / n_ok : 0.0;
      cell.coverage.push_back(100.0 * cov);
      cell.mc_se.push_back(
          n_ok > 0 ? 100.0 * std::sqrt(cov * (1.0 - cov) / n_ok) : 0.0);
      cell.avg_length.push_back(
          n_len > 0 ? len_sum / n_len
                    : std::numeric_limits<double>::quiet_NaN());
      cell.n_failed = std::max(cell.n_failed, cfg.R - n_ok);
    }
    report.cells.push_back(std::move(cell));
  }
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

CoverageConfig preset_config(const std::string& experiment, int k, double tau2,
                             double rho, double tau, int r, int b,
                             std::uint64_t seed) {
  CoverageConfig cfg;
  cfg.seed = seed;
  if (experiment == "table1") {
    cfg.generator = "uni";
    cfg.k = k > 0 ? k : 3;
    cfg.tau2 = tau2 >= 0.0 ? tau2 : 0.10;
    cfg.methods = {"mc", "knha", "lr", "reml", "dl"};
    cfg.R = r > 0 ? r : 2000;
    cfg.B = b > 0 ? b : 1000;
  } else if (experiment == "table2") {
    cfg.generator = "dta";
    cfg.k = k > 0 ? k : 8;
    cfg.tau2 = tau2 >= 0.0 ? tau2 : 0.5;
    cfg.rho = rho >= 0.0 ? rho : 0.0;
    cfg.methods = {"mc", "acr"};
    cfg.R = r > 0 ? r : 1000;
    cfg.B = b > 0 ? b : 500;
  } else if (experiment == "table3") {
    cfg.generator = "nma";
    cfg.k = k > 0 ? k : 8;
    cfg.tau = tau >= 0.0 ? tau : 0.2;
    cfg.methods = {"mc", "reml", "lr"};
    cfg.R = r > 0 ? r : 2000;
    cfg.B = b > 0 ? b : 500;
  } else {
    throw input_error("unknown experiment preset: " + experiment);
  }
  return cfg;
}

}  // namespace exactmeta::sim
