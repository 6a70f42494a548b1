#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include "exactmeta/comparators.hpp"
#include "exactmeta/errors.hpp"
#include "exactmeta/io.hpp"
#include "exactmeta/simulate.hpp"

using json = nlohmann::ordered_json;
using namespace exactmeta;

namespace {

struct CommonOpts {
  std::string input;
  std::string out;
  std::string format = "json";
  std::string method = "mc";
  double alpha = 0.05;
  int B = 1000;
  std::uint64_t seed = 1;
};

void add_common(CLI::App* cmd, CommonOpts* o, bool needs_input) {
  auto* in = cmd->add_option("--input", o->input, "input CSV path");
  if (needs_input) in->required();
  cmd->add_option("--alpha", o->alpha, "nominal level")->default_val(0.05);
  cmd->add_option("--B", o->B, "Monte Carlo replicates")->default_val(1000);
  cmd->add_option("--seed", o->seed, "RNG seed")->default_val(1);
  cmd->add_option("--method", o->method, "mc|dl|reml|knha|lr|acr")
      ->default_val("mc");
  cmd->add_option("--out", o->out, "output path (default stdout)");
  cmd->add_option("--format", o->format, "json|csv")
      ->default_val("json")
      ->check(CLI::IsMember({"json", "csv"}));
}

void emit(const CommonOpts& o, const std::string& text) {
  if (o.out.empty()) {
    std::cout << text;
    if (!text.empty() && text.back() != '\n') std::cout << "\n";
  } else {
    std::ofstream f(o.out);
    if (!f) throw input_error("cannot write " + o.out);
    f << text;
    if (!text.empty() && text.back() != '\n') f << "\n";
  }
}

std::string csv_row(const json& j) {
  std::ostringstream head, row;
  bool first = true;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (it->is_structured()) continue;
    head << (first ? "" : ",") << it.key();
    row << (first ? "" : ",")
        << (it->is_string() ? it->get<std::string>() : it->dump());
    first = false;
  }
  return head.str() + "\n" + row.str() + "\n";
}

void emit_record(const CommonOpts& o, const json& j) {
  emit(o, o.format == "json" ? j.dump(2) : csv_row(j));
}

int run_uni(const CommonOpts& o, double null_mu, bool have_null) {
  uni::UnivariateData data = io::read_uni_csv(o.input);
  json out;
  out["method"] = o.method;
  out["alpha"] = o.alpha;
  out["seed"] = o.seed;
  if (o.method == "mc") {
    mc::ConfidenceInterval ci = uni::ci_mu(data, o.alpha, o.B, o.seed);
    uni::UniFit fit = uni::fit_ml(data);
    out["estimate"] = ci.point_estimate;
    out["lower"] = ci.lower;
    out["upper"] = ci.upper;
    out["tau2"] = fit.tau2;
    out["B"] = o.B;
    mc::PValueResult pv =
        uni::p_value_mu(data, have_null ? null_mu : 0.0, o.B, o.seed);
    out["p_value_at_null"] = pv.p;
    out["null_mu"] = have_null ? null_mu : 0.0;
    out["ess"] = pv.ess;
    out["n_degenerate"] = pv.n_degenerate;
  } else {
    cmp::MethodResult res;
    if (o.method == "dl")
      res = cmp::dl_interval(data, o.alpha);
    else if (o.method == "reml")
      res = cmp::reml_interval_uni(data, o.alpha);
    else if (o.method == "knha")
      res = cmp::knha_interval(data, o.alpha);
    else if (o.method == "lr")
      res = cmp::lr_interval_uni(data, o.alpha);
    else
      throw input_error("unknown method for uni: " + o.method);
    out["estimate"] = res.estimate;
    out["lower"] = res.lower;
    out["upper"] = res.upper;
    out["tau2"] = res.tau2;
  }
  emit_record(o, out);
  return 0;
}

json region_to_json(const dta::ConfidenceRegion& region) {
  json rows = json::array();
  for (std::size_t i = 0; i < region.boundary.size(); ++i) {
    auto [sens, fpr] =
        dta::to_roc(region.boundary[i][0], region.boundary[i][1]);
    rows.push_back({{"t", region.angles[i]},
                    {"muA", region.boundary[i][0]},
                    {"muB", region.boundary[i][1]},
                    {"sens", sens},
                    {"fpr", fpr}});
  }
  return rows;
}

std::string region_to_csv(const dta::ConfidenceRegion& region) {
  std::ostringstream out;
  out << "t,muA,muB,sens,fpr\n";
  for (std::size_t i = 0; i < region.boundary.size(); ++i) {
    auto [sens, fpr] =
        dta::to_roc(region.boundary[i][0], region.boundary[i][1]);
    out << json(region.angles[i]).dump() << ","
        << json(region.boundary[i][0]).dump() << ","
        << json(region.boundary[i][1]).dump() << "," << json(sens).dump()
        << "," << json(fpr).dump() << "\n";
  }
  return out.str();
}

int run_dta(const CommonOpts& o, bool want_region, int m) {
  dta::Data data = io::read_dta_csv(o.input);
  if (o.method == "acr") {
    dta::RemlBivarFit fit = dta::fit_reml(data);
    if (want_region) {
      dta::ConfidenceRegion region = dta::approx_region(data, o.alpha, m);
      if (o.format == "csv") {
        emit(o, region_to_csv(region));
        return 0;
      }
      json out;
      out["method"] = "acr";
      out["alpha"] = o.alpha;
      out["muA"] = fit.mu[0];
      out["muB"] = fit.mu[1];
      out["sigmaA2"] = fit.psi.sA2;
      out["sigmaB2"] = fit.psi.sB2;
      out["rho"] = fit.psi.rho;
      out["region"] = region_to_json(region);
      emit(o, out.dump(2));
      return 0;
    }
    json out;
    out["method"] = "acr";
    out["alpha"] = o.alpha;
    out["muA"] = fit.mu[0];
    out["muB"] = fit.mu[1];
    out["seA"] = fit.sA;
    out["seB"] = fit.sB;
    out["sigmaA2"] = fit.psi.sA2;
    out["sigmaB2"] = fit.psi.sB2;
    out["rho"] = fit.psi.rho;
    emit_record(o, out);
    return 0;
  }
  if (o.method != "mc") throw input_error("unknown method for dta: " + o.method);

  dta::BivarFit fit = dta::fit_ml(data);
  if (want_region) {
    dta::ConfidenceRegion region =
        dta::confidence_region(data, o.alpha, m, o.B, o.seed);
    if (o.format == "csv") {
      emit(o, region_to_csv(region));
      return 0;
    }
    json out;
    out["method"] = "mc";
    out["alpha"] = o.alpha;
    out["seed"] = o.seed;
    out["B"] = o.B;
    out["muA"] = fit.mu[0];
    out["muB"] = fit.mu[1];
    out["partial"] = region.partial;
    out["region"] = region_to_json(region);
    emit(o, out.dump(2));
    return 0;
  }
  mc::PValueResult pv = dta::p_value(data, fit.mu, o.B, o.seed);
  json out;
  out["method"] = "mc";
  out["alpha"] = o.alpha;
  out["seed"] = o.seed;
  out["B"] = o.B;
  out["muA"] = fit.mu[0];
  out["muB"] = fit.mu[1];
  out["sigmaA2"] = fit.psi.sA2;
  out["sigmaB2"] = fit.psi.sB2;
  out["rho"] = fit.psi.rho;
  out["p_value_at_estimate"] = pv.p;
  out["ess"] = pv.ess;
  out["n_degenerate"] = pv.n_degenerate;
  emit_record(o, out);
  return 0;
}

Eigen::VectorXd parse_contrast(const std::string& text, int p) {
  std::vector<double> vals;
  std::stringstream ss(text);
  std::string cell;
  while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
  // a p+1 vector includes the reference coordinate, which must be the
  // negative sum of the rest; drop it
  if (static_cast<int>(vals.size()) == p + 1) {
    double sum = 0.0;
    for (double v : vals) sum += v;
    if (std::fabs(sum) > 1e-12)
      throw input_error("contrast over all arms must sum to zero");
    vals.erase(vals.begin());
  }
  if (static_cast<int>(vals.size()) != p)
    throw input_error("contrast must have " + std::to_string(p) +
                      " entries (or " + std::to_string(p + 1) +
                      " including the reference)");
  return Eigen::Map<Eigen::VectorXd>(vals.data(), p);
}

int run_nma(const CommonOpts& o, const std::string& contrast_text,
            bool augment) {
  io::NmaInput input = io::read_nma_csv(o.input);
  std::vector<net::ContrastStudy> studies =
      input.arm_level ? net::contrasts_from_arms(input.arms, augment)
                      : input.studies;
  net::NetworkModel model = net::NetworkModel::build(studies, input.p);

  auto one = [&](const Eigen::VectorXd& c) -> json {
    json row;
    if (o.method == "mc") {
      mc::ConfidenceInterval ci = net::ci_contrast(model, c, o.alpha, o.B,
                                                   o.seed);
      row["estimate"] = ci.point_estimate;
      row["lower"] = ci.lower;
      row["upper"] = ci.upper;
    } else if (o.method == "reml") {
      net::RemlFit fit = net::fit_reml(model);
      double est = c.dot(fit.beta);
      double se = std::sqrt(c.dot(fit.cov_beta * c));
      boost::math::normal norm;
      double z = boost::math::quantile(norm, 1.0 - o.alpha / 2.0);
      row["estimate"] = est;
      row["lower"] = est - z * se;
      row["upper"] = est + z * se;
      row["tau2"] = fit.tau2;
    } else if (o.method == "lr") {
      net::NetMethodResult res = net::lr_interval_net(model, c, o.alpha);
      row["estimate"] = res.estimate;
      row["lower"] = res.lower;
      row["upper"] = res.upper;
      row["tau2"] = res.tau2;
    } else {
      throw input_error("unknown method for nma: " + o.method);
    }
    return row;
  };

  json out;
  out["method"] = o.method;
  out["alpha"] = o.alpha;
  out["seed"] = o.seed;
  if (o.method == "mc") out["B"] = o.B;
  if (!contrast_text.empty()) {
    Eigen::VectorXd c = parse_contrast(contrast_text, input.p);
    json row = one(c);
    row["contrast"] = contrast_text;
    out["result"] = row;
  } else {
    json rows = json::array();
    for (int j = 0; j < input.p; ++j) {
      Eigen::VectorXd c = Eigen::VectorXd::Zero(input.p);
      c[j] = 1.0;
      json row = one(c);
      row["treatment"] = j + 1;
      rows.push_back(row);
    }
    out["treatments"] = rows;
  }
  if (o.format == "csv" && out.contains("treatments")) {
    std::ostringstream csv;
    csv << "treatment,estimate,lower,upper\n";
    for (const auto& row : out["treatments"])
      csv << row["treatment"].dump() << "," << row["estimate"].dump() << ","
          << row["lower"].dump() << "," << row["upper"].dump() << "\n";
    emit(o, csv.str());
  } else {
    emit(o, out.dump(2));
  }
  return 0;
}

void parse_cell(const std::string& text, int* k, double* tau2, double* rho,
                double* tau) {
  if (text.empty()) return;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    auto eq = item.find('=');
    if (eq == std::string::npos)
      throw input_error("cell entries must look like key=value: " + item);
    std::string key = item.substr(0, eq);
    std::string val = item.substr(eq + 1);
    if (key == "k")
      *k = std::stoi(val);
    else if (key == "tau2")
      *tau2 = std::stod(val);
    else if (key == "rho")
      *rho = std::stod(val);
    else if (key == "tau")
      *tau = std::stod(val);
    else
      throw input_error("unknown cell key: " + key);
  }
}

int run_simulate(const CommonOpts& o, const std::string& experiment,
                 const std::string& cell, int r) {
  int k = -1;
  double tau2 = -1.0, rho = -1.0, tau = -1.0;
  parse_cell(cell, &k, &tau2, &rho, &tau);
  sim::CoverageConfig cfg =
      sim::preset_config(experiment, k, tau2, rho, tau, r, o.B, o.seed);
  cfg.alpha = o.alpha;
  sim::ExperimentReport report = sim::run_coverage(cfg);
  std::cerr << "wall seconds: " << report.wall_seconds << "\n";

  json out;
  out["experiment"] = experiment;
  out["generator"] = cfg.generator;
  out["k"] = cfg.k;
  if (cfg.generator == "nma")
    out["tau"] = cfg.tau;
  else
    out["tau2"] = cfg.tau2;
  if (cfg.generator == "dta") out["rho"] = cfg.rho;
  out["R"] = cfg.R;
  out["B"] = cfg.B;
  out["alpha"] = cfg.alpha;
  out["seed"] = cfg.seed;
  json rows = json::array();
  for (const auto& c : report.cells) {
    json row;
    row["method"] = c.method;
    row["coverage"] = c.coverage;
    row["mc_se"] = c.mc_se;
    json lengths = json::array();
    for (double v : c.avg_length)
      lengths.push_back(std::isfinite(v) ? json(v) : json(nullptr));
    row["avg_length"] = lengths;
    row["n_failed"] = c.n_failed;
    rows.push_back(row);
  }
  out["methods"] = rows;

  if (o.format == "csv") {
    std::ostringstream csv;
    csv << "method,target,coverage,mc_se,avg_length,n_failed\n";
    for (const auto& c : report.cells)
      for (std::size_t t = 0; t < c.coverage.size(); ++t) {
        csv << c.method << "," << t + 1 << "," << json(c.coverage[t]).dump()
            << "," << json(c.mc_se[t]).dump() << ",";
        if (std::isfinite(c.avg_length[t])) csv << json(c.avg_length[t]).dump();
        csv << "," << c.n_failed << "\n";
      }
    emit(o, csv.str());
  } else {
    emit(o, out.dump(2));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo conditional inference for random-effects "
               "meta-analysis"};
  app.require_subcommand(1);

  CommonOpts uni_opts, dta_opts, nma_opts, sim_opts;
  double null_mu = 0.0;
  bool want_region = false, augment = false;
  int region_m = 200, sim_r = 0;
  std::string contrast_text, experiment, cell;

  auto* uni_cmd = app.add_subcommand("uni", "univariate effect interval");
  add_common(uni_cmd, &uni_opts, true);
  auto* null_opt =
      uni_cmd->add_option("--null", null_mu, "null value for the p-value");

  auto* dta_cmd =
      app.add_subcommand("dta", "bivariate sensitivity/specificity model");
  add_common(dta_cmd, &dta_opts, true);
  dta_cmd->add_flag("--region", want_region, "emit a confidence region");
  dta_cmd->add_option("--M", region_m, "boundary directions")->default_val(200);

  auto* nma_cmd = app.add_subcommand("nma", "network meta-analysis");
  add_common(nma_cmd, &nma_opts, true);
  nma_cmd->add_option("--contrast", contrast_text,
                      "comma-separated contrast coefficients");
  nma_cmd->add_flag("--augment", augment,
                    "add a quasi reference arm where it is missing");

  auto* sim_cmd = app.add_subcommand("simulate", "coverage experiments");
  add_common(sim_cmd, &sim_opts, false);
  sim_cmd->add_option("--experiment", experiment, "table1|table2|table3")
      ->required();
  sim_cmd->add_option("--cell", cell, "e.g. k=3,tau2=0.10");
  sim_cmd->add_option("--R", sim_r, "replication count");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (uni_cmd->parsed())
      return run_uni(uni_opts, null_mu, null_opt->count() > 0);
    if (dta_cmd->parsed()) return run_dta(dta_opts, want_region, region_m);
    if (nma_cmd->parsed()) return run_nma(nma_opts, contrast_text, augment);
    if (sim_cmd->parsed())
      return run_simulate(sim_opts, experiment, cell, sim_r);
  } catch (const input_error& e) {
    std::cerr << "input error: " << e.what() << "\n";
    return 2;
  } catch (const numerical_error& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
