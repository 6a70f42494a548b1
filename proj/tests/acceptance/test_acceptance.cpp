#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "exactmeta/bivariate.hpp"
#include "exactmeta/network.hpp"
#include "exactmeta/rng.hpp"
#include "exactmeta/simulate.hpp"
#include "exactmeta/univariate.hpp"

using namespace exactmeta;

namespace {

const sim::CellResult& cell_of(const sim::ExperimentReport& rep,
                               const std::string& method) {
  for (const auto& c : rep.cells)
    if (c.method == method) return c;
  throw std::runtime_error("method missing from report: " + method);
}

void print_cell(const std::string& label, const sim::CellResult& c) {
  std::cout << label << " " << c.method << ": cov";
  for (std::size_t t = 0; t < c.coverage.size(); ++t)
    std::cout << " " << c.coverage[t] << " (se " << c.mc_se[t] << ")";
  if (!c.avg_length.empty() && std::isfinite(c.avg_length[0])) {
    std::cout << " len";
    for (double l : c.avg_length) std::cout << " " << l;
  }
  std::cout << " failed " << c.n_failed << "\n";
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream out(path);
  out << body;
}

std::string cli_path() {
  const char* p = std::getenv("EXACTMETA_CLI");
  REQUIRE(p != nullptr);
  return p;
}

// runs the CLI, captures stdout bytes, requires a zero exit status
std::string run_cli(const std::string& args, const std::string& env = "") {
  static int counter = 0;
  std::string out = "/tmp/exactmeta_acc_out_" + std::to_string(counter++);
  std::string cmd =
      env + (env.empty() ? "" : " ") + cli_path() + " " + args + " > " + out +
      " 2>/dev/null";
  int rc = std::system(cmd.c_str());
  REQUIRE(rc == 0);
  std::string text = slurp(out);
  std::remove(out.c_str());
  return text;
}

}  // namespace

TEST_SUITE("criterion1") {
  TEST_CASE("univariate coverage grid at full scale") {
    const double cov_target[4] = {96.6, 96.1, 96.4, 95.3};
    const double len_target[4] = {2.032, 1.146, 0.861, 0.710};
    const int ks[4] = {3, 5, 7, 9};

    for (int i = 0; i < 4; ++i) {
      auto cfg = sim::preset_config("table1", ks[i], 0.10, -1.0, -1.0, 2000,
                                    1000, 42);
      auto rep = sim::run_coverage(cfg);
      const auto& mc = cell_of(rep, "mc");
      print_cell("k=" + std::to_string(ks[i]), mc);
      CHECK(std::fabs(mc.coverage[0] - cov_target[i]) <= 1.5);
      CHECK(std::fabs(mc.avg_length[0] - len_target[i]) <= 0.08);

      if (ks[i] == 3) {
        const auto& dl = cell_of(rep, "dl");
        const auto& knha = cell_of(rep, "knha");
        print_cell("k=3", dl);
        print_cell("k=3", knha);
        CHECK(std::fabs(dl.coverage[0] - 89.2) <= 2.0);
        CHECK(std::fabs(knha.coverage[0] - 93.6) <= 2.0);
      }
    }
  }
}

TEST_SUITE("criterion2") {
  TEST_CASE("paired-outcome coverage, scaled cell") {
    auto cfg = sim::preset_config("table2", 8, 0.5, 0.0, -1.0, 300, 300, 42);
    auto rep = sim::run_coverage(cfg);
    const auto& mc = cell_of(rep, "mc");
    const auto& acr = cell_of(rep, "acr");
    print_cell("table2", mc);
    print_cell("table2", acr);
    CHECK(std::fabs(mc.coverage[0] - 94.2) <= 3.5);
    CHECK(std::fabs(acr.coverage[0] - 77.4) <= 4.5);
  }
}

TEST_SUITE("criterion3") {
  TEST_CASE("network coverage, scaled cell") {
    const double mc_target[3] = {94.2, 95.8, 94.5};
    const double reml_target[3] = {93.7, 93.9, 92.5};
    const double lr_target[3] = {93.0, 92.6, 91.8};

    auto cfg = sim::preset_config("table3", 8, -1.0, -1.0, 0.2, 500, 500, 42);
    auto rep = sim::run_coverage(cfg);
    const auto& mc = cell_of(rep, "mc");
    const auto& reml = cell_of(rep, "reml");
    const auto& lr = cell_of(rep, "lr");
    print_cell("table3", mc);
    print_cell("table3", reml);
    print_cell("table3", lr);
    for (int j = 0; j < 3; ++j) {
      CHECK(std::fabs(mc.coverage[j] - mc_target[j]) <= 3.0);
      CHECK(std::fabs(reml.coverage[j] - reml_target[j]) <= 3.0);
      CHECK(std::fabs(lr.coverage[j] - lr_target[j]) <= 3.0);
    }
  }
}

TEST_SUITE("criterion4") {
  TEST_CASE("univariate pivot plug-back on 100 instances") {
    int checked = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      int k = 3 + static_cast<int>(s % 7);
      auto rep = sim::gen_univariate(k, -0.8, 0.05 + 0.01 * (s % 5), 9000 + s);
      double tau2_hat_c = uni::constrained_tau2(rep.data, -0.8);
      DrawMatrix draws = normal_draws(100 + s, 1, k);
      bool clamped = false;
      double ts = uni::pivot_tau2_star(draws.row(0), rep.data, tau2_hat_c,
                                       &clamped);
      if (clamped) continue;
      double g = 0.0;
      for (int i = 0; i < k; ++i) {
        double vc = tau2_hat_c + rep.data.sigma2[i];
        double u = draws.row(0)[i];
        g += 1.0 / vc - (ts + rep.data.sigma2[i]) * u * u / (vc * vc);
      }
      CHECK(std::fabs(g) < 1e-10);
      ++checked;
    }
    CHECK(checked >= 60);
  }

  TEST_CASE("paired-model score and pivot residuals on 100 instances") {
    int solved = 0;
    int interior_count = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      auto rep = sim::gen_bivariate(6 + static_cast<int>(s % 4), 0.5,
                                    (s % 2) ? 0.2 : 0.0, 5000 + s);
      auto cfit = dta::fit_constrained(rep.data, rep.mu);
      // the stationarity residual can only vanish at interior optima; fits
      // pinned to the correlation cap are counted but not asserted
      bool interior = std::fabs(cfit.psi.rho) < 0.9985;
      if (interior) {
        CHECK(cfit.score_residual < 1e-6);
        ++interior_count;
      }

      DrawMatrix draws =
          normal_draws(200 + s, 1, 2 * static_cast<int>(rep.data.size()));
      double residual = 1.0;
      auto psi =
          dta::pivot_psi_star(draws.row(0), rep.data, rep.mu, cfit.psi,
                              &residual);
      if (psi) {
        CHECK(residual < 1e-6);
        ++solved;
      }
    }
    CHECK(interior_count >= 80);
    CHECK(solved >= 80);
  }

  TEST_CASE("network constrained refit residuals on 100 instances") {
    int checked = 0;
    for (std::uint64_t s = 0; s < 100; ++s) {
      auto rep = sim::gen_network(8, 0.2 + 0.05 * (s % 3), 7000 + s);
      Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
      c[static_cast<int>(s % 3)] = 1.0;
      auto t = net::contrast_transform(rep.model, c);
      double beta10 = rep.mu[static_cast<int>(s % 3)];
      auto cfit = net::fit_constrained(t, beta10);
      CHECK(cfit.converged);
      Eigen::VectorXd eq =
          net::constrained_equations(t, beta10, cfit.omega, cfit.tau2);
      CHECK(eq.head(t.p - 1).lpNorm<Eigen::Infinity>() < 1e-7);
      if (cfit.tau2 > 0.0) CHECK(std::fabs(eq[t.p - 1]) < 1e-7);

      DrawMatrix draws = normal_draws(300 + s, 1, t.n_total);
      auto pivot = net::pivot_net(draws.row(0), t, beta10, cfit);
      if (!pivot || pivot->clamped) continue;
      Eigen::VectorXd uvec = Eigen::Map<const Eigen::VectorXd>(
          draws.row(0).data(), t.n_total);
      Eigen::VectorXd y_star = t.design.col(0) * beta10 +
                               t.design.rightCols(t.p - 1) * pivot->omega_star;
      Eigen::MatrixXd v = net::build_v(t, pivot->tau2_star);
      int off = 0;
      for (const auto& st : t.studies) {
        int pi = static_cast<int>(st.y.size());
        Eigen::MatrixXd l = v.block(off, off, pi, pi).llt().matrixL();
        y_star.segment(off, pi) += l * uvec.segment(off, pi);
        off += pi;
      }
      net::NetworkModel synth = t;
      off = 0;
      for (auto& st : synth.studies) {
        int pi = static_cast<int>(st.y.size());
        st.y = y_star.segment(off, pi);
        off += pi;
      }
      Eigen::VectorXd req =
          net::constrained_equations(synth, beta10, cfit.omega, cfit.tau2);
      CHECK(req.lpNorm<Eigen::Infinity>() < 1e-7);
      ++checked;
    }
    CHECK(checked >= 50);
  }

  TEST_CASE("single-contrast network matches the univariate p-value") {
    for (std::uint64_t s = 0; s < 10; ++s) {
      auto rep = sim::gen_univariate(6, -0.8, 0.2, 400 + s);
      std::vector<net::ContrastStudy> studies;
      for (int i = 0; i < 6; ++i) {
        net::ContrastStudy st;
        st.treatments = {1};
        st.y.resize(1);
        st.y << rep.data.y[i];
        st.S.resize(1, 1);
        st.S << rep.data.sigma2[i];
        studies.push_back(st);
      }
      auto m = net::NetworkModel::build(studies, 1);
      Eigen::VectorXd c(1);
      c << 1;
      auto pn = net::p_value_contrast(m, c, -0.8, 200, 17 + s);
      auto pu = uni::p_value_mu(rep.data, -0.8, 200, 17 + s);
      CHECK(std::fabs(pn.p - pu.p) < 1e-6);
    }
  }

  TEST_CASE("analytic coefficient blocks match numeric differentiation") {
    int checked = 0;
    for (std::uint64_t s = 0; s < 40 && checked < 20; ++s) {
      auto rep = sim::gen_network(8, 0.3, 8000 + s);
      Eigen::VectorXd c = Eigen::VectorXd::Zero(3);
      c[0] = 1.0;
      auto t = net::contrast_transform(rep.model, c);
      double beta10 = rep.mu[0];
      auto cfit = net::fit_constrained(t, beta10);
      if (!cfit.converged || cfit.tau2 <= 0.0) continue;

      DrawMatrix draws = normal_draws(500 + s, 1, t.n_total);
      auto pivot = net::pivot_net(draws.row(0), t, beta10, cfit);
      if (!pivot || pivot->clamped) continue;
      auto w = net::weight_net(draws.row(0), t, beta10, cfit, *pivot);
      if (!w) continue;

      Eigen::VectorXd uvec = Eigen::Map<const Eigen::VectorXd>(
          draws.row(0).data(), t.n_total);
      Eigen::MatrixXd w2 = t.design.rightCols(t.p - 1);

      auto synth_of = [&](const Eigen::VectorXd& omega,
                          double tau2) -> net::NetworkModel {
        Eigen::VectorXd y_star = t.design.col(0) * beta10 + w2 * omega;
        Eigen::MatrixXd v = net::build_v(t, tau2);
        int off = 0;
        for (const auto& st : t.studies) {
          int pi = static_cast<int>(st.y.size());
          Eigen::MatrixXd l = v.block(off, off, pi, pi).llt().matrixL();
          y_star.segment(off, pi) += l * uvec.segment(off, pi);
          off += pi;
        }
        net::NetworkModel synth = t;
        off = 0;
        for (auto& st : synth.studies) {
          int pi = static_cast<int>(st.y.size());
          st.y = y_star.segment(off, pi);
          off += pi;
        }
        return synth;
      };

      net::NetworkModel synth =
          synth_of(pivot->omega_star, pivot->tau2_star);

      // analytic blocks, built from dense Eigen pieces
      Eigen::MatrixXd vc = net::build_v(t, cfit.tau2);
      Eigen::LLT<Eigen::MatrixXd> vc_llt(vc);
      Eigen::MatrixXd xtvx = w2.transpose() * vc_llt.solve(w2);
      Eigen::MatrixXd q = Eigen::MatrixXd::Zero(t.n_total, t.n_total);
      int off = 0;
      for (const auto& st : t.studies) {
        int pi = static_cast<int>(st.y.size());
        q.block(off, off, pi, pi).setConstant(0.5);
        q.block(off, off, pi, pi).diagonal().setOnes();
        off += pi;
      }
      Eigen::VectorXd r(t.n_total);
      off = 0;
      for (const auto& st : synth.studies) {
        r.segment(off, st.y.size()) = st.y;
        off += static_cast<int>(st.y.size());
      }
      r -= t.design.col(0) * beta10 + w2 * cfit.omega;
      Eigen::VectorXd g2 =
          2.0 * (w2.transpose() * vc_llt.solve(q * vc_llt.solve(r)));

      // numeric columns of dG/d(omega) at the solution
      const double h = 1e-6;
      for (int j = 0; j < t.p - 1; ++j) {
        Eigen::VectorXd op = pivot->omega_star, om = pivot->omega_star;
        op[j] += h;
        om[j] -= h;
        Eigen::VectorXd col =
            (net::constrained_equations(synth_of(op, pivot->tau2_star),
                                        beta10, cfit.omega, cfit.tau2) -
             net::constrained_equations(synth_of(om, pivot->tau2_star),
                                        beta10, cfit.omega, cfit.tau2)) /
            (2 * h);
        for (int i = 0; i < t.p - 1; ++i)
          CHECK(col[i] == doctest::Approx(xtvx(i, j)).epsilon(1e-4));
        CHECK(col[t.p - 1] ==
              doctest::Approx(-g2[j]).scale(1.0).epsilon(1e-4));

        Eigen::VectorXd hp = cfit.omega, hm = cfit.omega;
        hp[j] += h;
        hm[j] -= h;
        Eigen::VectorXd hat_col =
            (net::constrained_equations(synth, beta10, hp, cfit.tau2) -
             net::constrained_equations(synth, beta10, hm, cfit.tau2)) /
            (2 * h);
        for (int i = 0; i < t.p - 1; ++i)
          CHECK(hat_col[i] == doctest::Approx(-xtvx(i, j)).epsilon(1e-4));
        CHECK(hat_col[t.p - 1] ==
              doctest::Approx(g2[j]).scale(1.0).epsilon(1e-4));
      }
      ++checked;
    }
    CHECK(checked >= 20);
  }
}

TEST_SUITE("criterion5") {
  TEST_CASE("equal-variance null calibration") {
    const int n_rep = 500;
    const int b = 500;
    const int k = 5;
    const double tau2 = 0.1, sigma2 = 0.25, mu0 = -0.8;

    std::vector<double> pvals;
    int reject = 0;
    for (int r = 0; r < n_rep; ++r) {
      std::uint64_t dseed = mix_seed(777, 2 * static_cast<unsigned>(r));
      std::uint64_t pseed = mix_seed(777, 2 * static_cast<unsigned>(r) + 1);
      Philox rng(dseed, 0);
      uni::UnivariateData data;
      for (int i = 0; i < k; ++i) {
        data.y.push_back(mu0 + std::sqrt(tau2 + sigma2) * rng.normal());
        data.sigma2.push_back(sigma2);
      }
      double p = uni::p_value_mu(data, mu0, b, pseed).p;
      pvals.push_back(p);
      if (p < 0.05) ++reject;
    }

    double rate = static_cast<double>(reject) / n_rep;
    std::sort(pvals.begin(), pvals.end());
    double ks = 0.0;
    for (int i = 0; i < n_rep; ++i) {
      double hi = static_cast<double>(i + 1) / n_rep - pvals[i];
      double lo = pvals[i] - static_cast<double>(i) / n_rep;
      ks = std::max({ks, hi, lo});
    }
    std::cout << "rejection " << rate << " ks " << ks << "\n";
    CHECK(std::fabs(rate - 0.05) <= 0.02);
    CHECK(ks < 1.628 / std::sqrt(static_cast<double>(n_rep)));
  }
}

TEST_SUITE("criterion6") {
  TEST_CASE("CLI output is byte-identical across runs and thread counts") {
    write_file("/tmp/exactmeta_acc_uni.csv",
               "y,variance\n-0.9,0.12\n-0.4,0.30\n-1.3,0.25\n-0.6,0.18\n"
               "-0.2,0.41\n");
    write_file("/tmp/exactmeta_acc_dta.csv",
               "yA,yB,vA,vB\n"
               "1.3471,-1.5277,0.0155,0.2519\n"
               "0.4074,-1.4535,0.0844,0.1312\n"
               "0.6525,0.5148,0.1070,0.1874\n"
               "0.4832,-1.7880,0.2118,0.1926\n"
               "0.0018,-0.8263,0.2874,0.0582\n"
               "-0.1014,-1.8010,0.5436,0.0608\n");
    write_file("/tmp/exactmeta_acc_nma.csv",
               "study,treatment,events,n\n"
               "1,0,12,50\n1,1,20,50\n"
               "2,0,8,40\n2,2,15,40\n"
               "3,1,10,45\n3,2,18,45\n"
               "4,0,9,55\n4,1,14,55\n"
               "5,0,11,60\n5,2,21,60\n");
    write_file("/tmp/exactmeta_acc_net1.csv",
               "study,treatments,y,S\n"
               "1,1,-0.9,0.12\n2,1,-0.4,0.30\n3,1,-1.3,0.25\n4,1,-0.6,0.18\n");

    std::vector<std::string> cmds = {
        "uni --input /tmp/exactmeta_acc_uni.csv --B 300 --seed 11 --null -0.8",
        "uni --input /tmp/exactmeta_acc_uni.csv --method dl",
        "uni --input /tmp/exactmeta_acc_uni.csv --method knha --format csv",
        "dta --input /tmp/exactmeta_acc_dta.csv --B 100 --seed 7",
        "dta --input /tmp/exactmeta_acc_dta.csv --method acr --region --M 16",
        "nma --input /tmp/exactmeta_acc_nma.csv --method reml --augment",
        "nma --input /tmp/exactmeta_acc_nma.csv --method lr --contrast 1,-1 "
        "--format csv --augment",
        "nma --input /tmp/exactmeta_acc_net1.csv --method mc --B 80 --seed 3",
        "simulate --experiment table1 --cell k=3,tau2=0.10 --R 10 --B 50 "
        "--seed 5",
    };
    for (const auto& cmd : cmds) {
      std::string a = run_cli(cmd);
      std::string b = run_cli(cmd);
      CHECK(!a.empty());
      CHECK(a == b);
    }

    // thread-count invariance of the simulation harness
    std::string sim_cmd =
        "simulate --experiment table1 --cell k=3,tau2=0.10 --R 12 --B 40 "
        "--seed 8";
    std::string t1 = run_cli(sim_cmd, "EXACTMETA_THREADS=1");
    std::string t3 = run_cli(sim_cmd, "EXACTMETA_THREADS=3");
    CHECK(t1 == t3);

    std::string mc_cmd =
        "uni --input /tmp/exactmeta_acc_uni.csv --B 200 --seed 2";
    CHECK(run_cli(mc_cmd, "EXACTMETA_THREADS=1") ==
          run_cli(mc_cmd, "EXACTMETA_THREADS=4"));
  }
}

TEST_SUITE("criterion7") {
  TEST_CASE("user-supplied data produces the documented table shapes") {
    write_file("/tmp/exactmeta_acc_uni7.csv",
               "y,variance\n-1.1,0.14\n-0.5,0.22\n-0.8,0.30\n-0.3,0.19\n");
    write_file("/tmp/exactmeta_acc_dta7.csv",
               "yA,yB,vA,vB\n"
               "0.0768,-0.8341,0.0185,0.0184\n"
               "0.6006,-2.2503,0.2084,0.2286\n"
               "2.3881,-0.6802,0.0401,0.0221\n"
               "2.4356,-1.3617,0.3936,0.3384\n"
               "1.6038,-1.9675,0.1399,0.0948\n"
               "0.8144,-1.7468,0.2132,0.1185\n");
    write_file("/tmp/exactmeta_acc_nma7.csv",
               "study,treatment,events,n\n"
               "1,0,12,50\n1,1,20,50\n"
               "2,0,8,40\n2,2,15,40\n"
               "3,1,10,45\n3,2,18,45\n"
               "4,0,9,55\n4,1,14,55\n");

    auto uni_out = nlohmann::json::parse(run_cli(
        "uni --input /tmp/exactmeta_acc_uni7.csv --B 200 --seed 1"));
    for (const char* key : {"method", "alpha", "seed", "estimate", "lower",
                            "upper", "tau2", "p_value_at_null", "ess"})
      CHECK(uni_out.contains(key));
    CHECK(uni_out["lower"].get<double>() < uni_out["upper"].get<double>());

    std::string region_csv = run_cli(
        "dta --input /tmp/exactmeta_acc_dta7.csv --method acr --region "
        "--M 16 --format csv");
    CHECK(region_csv.rfind("t,muA,muB,sens,fpr\n", 0) == 0);
    CHECK(std::count(region_csv.begin(), region_csv.end(), '\n') == 17);

    std::string nma_csv = run_cli(
        "nma --input /tmp/exactmeta_acc_nma7.csv --method reml --augment "
        "--format csv");
    CHECK(nma_csv.rfind("treatment,estimate,lower,upper\n", 0) == 0);
    CHECK(std::count(nma_csv.begin(), nma_csv.end(), '\n') == 3);

    auto dta_out = nlohmann::json::parse(run_cli(
        "dta --input /tmp/exactmeta_acc_dta7.csv --B 100 --seed 1"));
    for (const char* key : {"muA", "muB", "sigmaA2", "sigmaB2", "rho",
                            "p_value_at_estimate"})
      CHECK(dta_out.contains(key));
  }

  TEST_CASE("reference heterogeneity values are documented") {
    const char* readme = std::getenv("EXACTMETA_README");
    REQUIRE(readme != nullptr);
    std::string text = slurp(readme);
    CHECK(text.find("0.28") != std::string::npos);
    CHECK(text.find("0.52") != std::string::npos);
    CHECK(text.find("REML") != std::string::npos);
  }
}
