#include "hte/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "hte/cluster.hpp"
#include "hte/graph.hpp"

namespace hte {

Metrics metrics(const Eigen::VectorXd& tau_hat, const Eigen::VectorXd& tau_true) {
  if (tau_hat.size() != tau_true.size() || tau_hat.size() == 0)
    throw std::invalid_argument("metrics: length mismatch " +
                                std::to_string(tau_hat.size()) + " vs " +
                                std::to_string(tau_true.size()));
  Eigen::ArrayXd err = (tau_hat - tau_true).array();
  return {err.mean(), err.square().mean(), err.abs().mean()};
}

Eigen::VectorXd run_proposed(const Dataset& ds, const PipelineConfig& cfg, uint64_t seed) {
  ConfounderGraph g = build_graph(ds, cfg.graph_threshold, cfg.graph_max_degree);

  TrainConfig tc = cfg.train;
  tc.seed = seed;
  TrainResult tr = train(ds, g, tc, cfg.embed_dim, cfg.hidden_dim, cfg.latent_dim);

  RngState root(seed);
  std::vector<int> outliers = detect_outliers(tr.codes, cfg.outlier_multiplier);
  std::vector<char> is_out(ds.n(), 0);
  for (int i : outliers) is_out[i] = 1;
  std::vector<int> inliers;
  for (int i = 0; i < ds.n(); ++i)
    if (!is_out[i]) inliers.push_back(i);
  Eigen::MatrixXd in_codes(inliers.size(), tr.codes.cols());
  for (size_t t = 0; t < inliers.size(); ++t) in_codes.row(t) = tr.codes.row(inliers[t]);

  int k_max = std::min<int>(cfg.k_max, static_cast<int>(inliers.size()) - 1);
  int k = 2;
  if (k_max >= 2) {
    RngState sel = root.split("select-k");
    k = select_k(in_codes, 2, k_max, sel);
  }

  RngState cl = root.split("cluster");
  Clustering clustering = cluster_with_outliers(tr.codes, k, cfg.outlier_multiplier, cl);

  EstimateConfig ec = cfg.est;
  ec.seed = root.split("estimate").next_u64();
  EstimateResult est = estimate_all(ds, clustering, tr.codes, ec);
  return est.per_sample_tau;
}

namespace {

std::string ratio_tag(double r) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", r);
  return buf;
}

// Comparators run on the raw covariates with a single whole-sample cluster.
Eigen::VectorXd run_comparator(const std::string& method, const Dataset& ds,
                               const EstimateConfig& ec, uint64_t seed) {
  Eigen::MatrixXd x = ds.covariates();
  Eigen::VectorXd y = ds.outcomes();
  Eigen::VectorXi d = ds.treatments();
  std::vector<int> all(ds.n());
  for (int i = 0; i < ds.n(); ++i) all[i] = i;
  RngState rng(seed);

  ClusterEffect eff;
  if (method == "plain_aipw") {
    PropensityModel pm = fit_propensity(x, d, ec.trim);
    OutcomeModel om = fit_outcome(x, y, d, ec.ridge_lambda, kNoClip);
    eff = tau_plain_aipw(x, y, d, pm, om, all, rng, 0);
  } else if (method == "ipw") {
    PropensityModel pm = fit_propensity(x, d, ec.trim);
    eff = tau_ipw(y, d, pm, x, all, rng, 0);
  } else if (method == "or") {
    OutcomeModel om = fit_outcome(x, y, d, ec.ridge_lambda, kNoClip);
    eff = tau_or(x, d, om, all, rng, 0);
  } else {
    throw std::invalid_argument("unknown method: " + method);
  }
  return Eigen::VectorXd::Constant(ds.n(), eff.tau_hat);
}

}  // namespace

BenchReport run_sweep(const SweepConfig& cfg) {
  if (cfg.replications < 1) throw std::invalid_argument("run_sweep: replications must be >= 1");
  if (cfg.n_grid.empty() || cfg.contamination_grid.empty())
    throw std::invalid_argument("run_sweep: empty grid");

  BenchReport report;
  report.seed = cfg.seed;
  report.config_hash = config_hash(cfg);
  RngState root(cfg.seed);

  for (double ratio : cfg.contamination_grid) {
    for (int n : cfg.n_grid) {
      std::cerr << "bench: cell n=" << n << " ratio=" << ratio << "\n";
      std::map<std::string, std::vector<Metrics>> results;
      std::map<std::string, int> failures;
      for (const auto& m : cfg.methods) failures[m] = 0;

      for (int r = 0; r < cfg.replications; ++r) {
        std::string tag = "n" + std::to_string(n) + "-ratio" + ratio_tag(ratio) + "-rep" +
                          std::to_string(r);
        SimConfig sim = cfg.sim;
        sim.n = n;
        sim.contamination_ratio = ratio;
        sim.seed = root.split("sim-" + tag).next_u64();
        Dataset ds = gen_dataset(sim);
        Eigen::VectorXd truth =
            Eigen::Map<const Eigen::VectorXd>(ds.truth->data(), ds.n());

        for (const auto& method : cfg.methods) {
          uint64_t seed = root.split(method + "-" + tag).next_u64();
          try {
            Eigen::VectorXd tau_hat;
            if (method == "proposed")
              tau_hat = run_proposed(ds, cfg.pipeline, seed);
            else if (method == "oracle")  // test hook
              tau_hat = truth;
            else
              tau_hat = run_comparator(method, ds, cfg.pipeline.est, seed);
            results[method].push_back(metrics(tau_hat, truth));
          } catch (const std::exception&) {
            failures[method] += 1;
          }
        }
      }

      for (const auto& method : cfg.methods) {
        CellResult cell;
        cell.n = n;
        cell.ratio = ratio;
        cell.method = method;
        cell.failures = failures[method];
        const auto& reps = results[method];
        cell.replications = static_cast<int>(reps.size());
        cell.valid = cell.failures <= cfg.replications / 10;
        if (!cell.valid) report.invalid_cells += 1;
        if (!reps.empty()) {
          double R = static_cast<double>(reps.size());
          for (const auto& m : reps) {
            cell.mean.bias += m.bias;
            cell.mean.mse += m.mse;
            cell.mean.mae += m.mae;
          }
          cell.mean.bias /= R;
          cell.mean.mse /= R;
          cell.mean.mae /= R;
          cell.abs_bias = std::abs(cell.mean.bias);
          if (reps.size() > 1) {
            double vb = 0.0, vm = 0.0, va = 0.0;
            for (const auto& m : reps) {
              vb += std::pow(m.bias - cell.mean.bias, 2);
              vm += std::pow(m.mse - cell.mean.mse, 2);
              va += std::pow(m.mae - cell.mean.mae, 2);
            }
            cell.mc_se.bias = std::sqrt(vb / (R - 1) / R);
            cell.mc_se.mse = std::sqrt(vm / (R - 1) / R);
            cell.mc_se.mae = std::sqrt(va / (R - 1) / R);
          }
        }
        report.cells.push_back(cell);
      }
    }
  }

  std::stable_sort(report.cells.begin(), report.cells.end(),
                   [&](const CellResult& a, const CellResult& b) {
                     if (a.ratio != b.ratio) return a.ratio < b.ratio;
                     if (a.n != b.n) return a.n < b.n;
                     // methods in the configured order, proposed first by default
                     auto pos = [&](const std::string& m) {
                       return std::find(cfg.methods.begin(), cfg.methods.end(), m) -
                              cfg.methods.begin();
                     };
                     return pos(a.method) < pos(b.method);
                   });
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

}  // namespace

std::string render_tables(const BenchReport& report, TableFormat format) {
  if (report.cells.empty()) throw std::invalid_argument("render_tables: empty report");
  std::ostringstream out;
  if (format == TableFormat::kCsv) {
    out << "contamination,n,method,bias,mse,mae,bias_se,mse_se,mae_se,replications,failures\n";
    for (const auto& c : report.cells)
      out << ratio_tag(c.ratio) << ',' << c.n << ',' << c.method << ',' << fmt(c.abs_bias)
          << ',' << fmt(c.mean.mse) << ',' << fmt(c.mean.mae) << ',' << fmt(c.mc_se.bias)
          << ',' << fmt(c.mc_se.mse) << ',' << fmt(c.mc_se.mae) << ',' << c.replications
          << ',' << c.failures << '\n';
    return out.str();
  }

  double last_ratio = -1.0;
  bool first = true;
  for (const auto& c : report.cells) {
    if (first || c.ratio != last_ratio) {
      if (!first) out << '\n';
      out << "### Contamination ratio " << ratio_tag(c.ratio) << "\n\n";
      out << "| Sample Size | Method | Bias | MSE | MAE |\n";
      out << "|---|---|---|---|---|\n";
      last_ratio = c.ratio;
      first = false;
    }
    out << "| " << c.n << " | " << c.method << " | " << fmt(c.abs_bias) << " | "
        << fmt(c.mean.mse) << " | " << fmt(c.mean.mae) << " |\n";
  }
  return out.str();
}

std::string report_json(const BenchReport& report) {
  nlohmann::ordered_json j;
  j["seed"] = report.seed;
  j["config_hash"] = report.config_hash;
  j["invalid_cells"] = report.invalid_cells;
  j["cells"] = nlohmann::ordered_json::array();
  for (const auto& c : report.cells) {
    nlohmann::ordered_json jc;
    jc["contamination"] = c.ratio;
    jc["n"] = c.n;
    jc["method"] = c.method;
    jc["bias"] = c.mean.bias;
    jc["abs_bias"] = c.abs_bias;
    jc["mse"] = c.mean.mse;
    jc["mae"] = c.mean.mae;
    jc["bias_se"] = c.mc_se.bias;
    jc["mse_se"] = c.mc_se.mse;
    jc["mae_se"] = c.mc_se.mae;
    jc["replications"] = c.replications;
    jc["failures"] = c.failures;
    jc["valid"] = c.valid;
    j["cells"].push_back(jc);
  }
  return j.dump(2) + "\n";
}

std::string config_hash(const SweepConfig& cfg) {
  std::ostringstream s;
  s << "n:";
  for (int n : cfg.n_grid) s << n << ',';
  s << "|ratio:";
  for (double r : cfg.contamination_grid) s << ratio_tag(r) << ',';
  s << "|R:" << cfg.replications << "|seed:" << cfg.seed << "|methods:";
  for (const auto& m : cfg.methods) s << m << ',';
  s << "|p:" << cfg.sim.p << "|rho:" << cfg.sim.rho << "|noise:" << cfg.sim.noise_scale
    << "|censor:" << cfg.sim.censor_rate << "|epochs:" << cfg.pipeline.train.epochs
    << "|lr:" << cfg.pipeline.train.learning_rate << "|beta:" << cfg.pipeline.train.kl_weight
    << "|embed:" << cfg.pipeline.embed_dim << "|hidden:" << cfg.pipeline.hidden_dim
    << "|latent:" << cfg.pipeline.latent_dim << "|thresh:" << cfg.pipeline.graph_threshold
    << "|deg:" << cfg.pipeline.graph_max_degree << "|mult:" << cfg.pipeline.outlier_multiplier
    << "|kmax:" << cfg.pipeline.k_max << "|trim:" << cfg.pipeline.est.trim
    << "|lambda:" << cfg.pipeline.est.ridge_lambda << "|c:" << cfg.pipeline.est.huber_c
    << "|boot:" << cfg.pipeline.est.bootstrap;
  std::string text = s.str();
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : text) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hte
