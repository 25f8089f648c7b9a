#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hte/bench.hpp"
#include "hte/cluster.hpp"
#include "hte/cvae.hpp"
#include "hte/estimate.hpp"
#include "hte/graph.hpp"
#include "hte/simgen.hpp"

namespace {

using namespace hte;

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    // skip a non-numeric header row
    if (first && line.find_first_not_of("0123456789+-.eE, \r") != std::string::npos) {
      first = false;
      continue;
    }
    first = false;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("no data rows in " + path);
  Eigen::MatrixXd m(rows.size(), rows[0].size());
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows[0].size())
      throw std::runtime_error("ragged rows in " + path);
    for (size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
  }
  return m;
}

void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  char buf[40];
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << (j ? "," : "") << buf;
    }
    out << "\n";
  }
}

int cmd_simulate(const SimConfig& cfg, const std::string& out_path) {
  save_csv(gen_dataset(cfg), out_path);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_fit(const std::string& in_path, int latent_dim, int epochs, double lr,
            double kl_weight, uint64_t seed, const std::string& out_codes,
            const std::string& out_trace) {
  Dataset ds = load_csv(in_path);
  ConfounderGraph g = build_graph(ds, 0.3, 10);
  TrainConfig tc;
  tc.epochs = epochs;
  tc.learning_rate = lr;
  tc.kl_weight = kl_weight;
  tc.seed = seed;
  TrainResult tr = train(ds, g, tc, 8, 16, latent_dim);
  save_matrix_csv(tr.codes, out_codes);
  if (!out_trace.empty()) {
    Eigen::MatrixXd trace(tr.loss_trace.size(), 1);
    for (size_t i = 0; i < tr.loss_trace.size(); ++i) trace(i, 0) = tr.loss_trace[i];
    save_matrix_csv(trace, out_trace);
  }
  std::cout << "final loss " << tr.loss_trace.back() << ", codes -> " << out_codes << "\n";
  return 0;
}

int cmd_cluster(const std::string& codes_path, const std::string& k_arg, double multiplier,
                uint64_t seed, const std::string& out_path) {
  Eigen::MatrixXd codes = load_matrix_csv(codes_path);
  RngState root(seed);
  int k;
  if (k_arg == "auto") {
    std::vector<int> outliers = detect_outliers(codes, multiplier);
    std::vector<char> is_out(codes.rows(), 0);
    for (int i : outliers) is_out[i] = 1;
    std::vector<int> inliers;
    for (int i = 0; i < codes.rows(); ++i)
      if (!is_out[i]) inliers.push_back(i);
    Eigen::MatrixXd in_codes(inliers.size(), codes.cols());
    for (size_t t = 0; t < inliers.size(); ++t) in_codes.row(t) = codes.row(inliers[t]);
    int k_max = std::min<int>(6, static_cast<int>(inliers.size()) - 1);
    RngState sel = root.split("select-k");
    k = k_max >= 2 ? select_k(in_codes, 2, k_max, sel) : 2;
  } else {
    k = std::stoi(k_arg);
  }
  RngState cl = root.split("cluster");
  Clustering c = cluster_with_outliers(codes, k, multiplier, cl);

  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << "index,label,is_outlier_cluster\n";
  for (int i = 0; i < c.labels.size(); ++i)
    out << i << ',' << c.labels(i) << ',' << (c.outlier_clusters.count(c.labels(i)) ? 1 : 0)
        << "\n";
  std::cout << "k=" << c.k << " (" << c.outlier_clusters.size() << " outlier clusters) -> "
            << out_path << "\n";
  return 0;
}

int cmd_estimate(const std::string& in_path, const std::string& codes_path,
                 const std::string& labels_path, const EstimateConfig& ec,
                 const std::string& out_path) {
  Dataset ds = load_csv(in_path);
  Eigen::MatrixXd codes = load_matrix_csv(codes_path);

  Eigen::MatrixXd label_mat = load_matrix_csv(labels_path);
  Clustering c;
  c.labels.resize(label_mat.rows());
  std::set<int> outlier_labels;
  for (int i = 0; i < label_mat.rows(); ++i) {
    c.labels(i) = static_cast<int>(label_mat(i, 1));
    if (label_mat.cols() > 2 && label_mat(i, 2) != 0.0) outlier_labels.insert(c.labels(i));
  }
  c.k = c.labels.maxCoeff() + 1;
  c.outlier_clusters = outlier_labels;
  c.centroids = Eigen::MatrixXd::Zero(c.k, codes.cols());
  Eigen::VectorXi counts = Eigen::VectorXi::Zero(c.k);
  for (int i = 0; i < c.labels.size(); ++i) {
    c.centroids.row(c.labels(i)) += codes.row(i);
    counts(c.labels(i)) += 1;
  }
  for (int j = 0; j < c.k; ++j)
    if (counts(j) > 0) c.centroids.row(j) /= counts(j);

  EstimateResult res = estimate_all(ds, c, codes, ec);

  nlohmann::ordered_json j;
  j["clusters"] = nlohmann::ordered_json::array();
  for (const auto& e : res.clusters) {
    j["clusters"].push_back({{"id", e.id},
                             {"tau_hat", e.tau_hat},
                             {"se", e.se_hat},
                             {"n", e.n_k},
                             {"n_treated", e.n_treated},
                             {"n_control", e.n_control},
                             {"outlier", e.is_outlier_cluster}});
  }
  j["overall"] = {{"tau_hat", res.overall_tau}, {"se", res.overall_se}};
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << j.dump(2) << "\n";
  std::cout << "overall tau " << res.overall_tau << " (se " << res.overall_se << ") -> "
            << out_path << "\n";
  return 0;
}

int cmd_bench(const std::string& config_path, uint64_t seed, bool seed_set,
              const std::string& out_dir) {
  SweepConfig cfg;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open " + config_path);
    nlohmann::json j = nlohmann::json::parse(in);
    if (j.contains("n_grid")) cfg.n_grid = j["n_grid"].get<std::vector<int>>();
    if (j.contains("contamination_grid"))
      cfg.contamination_grid = j["contamination_grid"].get<std::vector<double>>();
    if (j.contains("replications")) cfg.replications = j["replications"];
    if (j.contains("methods")) cfg.methods = j["methods"].get<std::vector<std::string>>();
    if (j.contains("seed")) cfg.seed = j["seed"];
    if (j.contains("p")) cfg.sim.p = j["p"];
    if (j.contains("rho")) cfg.sim.rho = j["rho"];
    if (j.contains("noise_scale")) cfg.sim.noise_scale = j["noise_scale"];
    if (j.contains("censor_rate")) cfg.sim.censor_rate = j["censor_rate"];
    if (j.contains("epochs")) cfg.pipeline.train.epochs = j["epochs"];
    if (j.contains("learning_rate")) cfg.pipeline.train.learning_rate = j["learning_rate"];
    if (j.contains("kl_weight")) cfg.pipeline.train.kl_weight = j["kl_weight"];
    if (j.contains("bootstrap")) cfg.pipeline.est.bootstrap = j["bootstrap"];
  }
  if (seed_set) cfg.seed = seed;

  std::filesystem::create_directories(out_dir);
  BenchReport report = run_sweep(cfg);

  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream out(out_dir + "/" + name, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_dir + "/" + name);
    out << text;
  };
  write("report.json", report_json(report));
  write("tables.md", render_tables(report, TableFormat::kMarkdown));
  write("tables.csv", render_tables(report, TableFormat::kCsv));

  nlohmann::ordered_json manifest;
  manifest["config_hash"] = report.config_hash;
  manifest["seed"] = report.seed;
  manifest["version"] = "1.0.0";
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char ts[64];
  std::strftime(ts, sizeof(ts), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  manifest["timestamp"] = ts;
  write("manifest.json", manifest.dump(2) + "\n");

  std::cout << "report -> " << out_dir << "/report.json"
            << (report.invalid_cells ? " (invalid cells present)" : "") << "\n";
  return report.invalid_cells > 0 ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust heterogeneous treatment effect pipeline"};
  app.require_subcommand(1);

  // simulate
  SimConfig sim;
  std::string sim_out = "data.csv";
  auto* s = app.add_subcommand("simulate", "Generate a simulated dataset");
  s->add_option("--n", sim.n, "sample size");
  s->add_option("--p", sim.p, "covariate dimension");
  s->add_option("--rho", sim.rho, "covariate equicorrelation");
  s->add_option("--contamination", sim.contamination_ratio, "contaminated row fraction");
  s->add_option("--noise-scale", sim.noise_scale, "contamination noise sd");
  s->add_option("--censor-rate", sim.censor_rate, "exponential censoring rate (<=0 disables)");
  s->add_option("--seed", sim.seed, "rng seed");
  s->add_option("--out", sim_out, "output csv")->required();

  // fit
  std::string fit_in, fit_codes = "codes.csv", fit_trace;
  int fit_latent = 2, fit_epochs = 500;
  double fit_lr = 1e-2, fit_kl = 1e-3;  // matches PipelineConfig's scale-matched default
  uint64_t fit_seed = 0;
  auto* f = app.add_subcommand("fit", "Train the GAT+CVAE and emit latent codes");
  f->add_option("--in", fit_in, "input dataset csv")->required();
  f->add_option("--latent-dim", fit_latent);
  f->add_option("--epochs", fit_epochs);
  f->add_option("--lr", fit_lr);
  f->add_option("--kl-weight", fit_kl);
  f->add_option("--seed", fit_seed);
  f->add_option("--out-codes", fit_codes, "latent means csv")->required();
  f->add_option("--out-trace", fit_trace, "per-epoch loss csv");

  // cluster
  std::string cl_codes, cl_k = "auto", cl_out = "labels.csv";
  double cl_mult = 3.0;
  uint64_t cl_seed = 0;
  auto* c = app.add_subcommand("cluster", "Cluster latent codes with outlier promotion");
  c->add_option("--codes", cl_codes, "latent codes csv")->required();
  c->add_option("--k", cl_k, "cluster count or 'auto'");
  c->add_option("--outlier-multiplier", cl_mult);
  c->add_option("--seed", cl_seed);
  c->add_option("--out", cl_out, "index,label,is_outlier_cluster csv")->required();

  // estimate
  std::string est_in, est_codes, est_labels, est_out = "effects.json";
  EstimateConfig ec;
  auto* e = app.add_subcommand("estimate", "Clusterwise doubly robust effect estimation");
  e->add_option("--in", est_in, "input dataset csv")->required();
  e->add_option("--codes", est_codes, "latent codes csv")->required();
  e->add_option("--labels", est_labels, "cluster labels csv")->required();
  e->add_option("--trim", ec.trim);
  e->add_option("--huber-c", ec.huber_c);
  e->add_option("--ridge-lambda", ec.ridge_lambda);
  e->add_option("--bootstrap", ec.bootstrap);
  e->add_option("--seed", ec.seed);
  e->add_option("--out", est_out, "output json")->required();

  // bench
  std::string bench_config, bench_out = "bench_out";
  uint64_t bench_seed = 0;
  auto* b = app.add_subcommand("bench", "Run the contamination x sample-size sweep");
  b->add_option("--config", bench_config, "json config");
  auto* seed_opt = b->add_option("--seed", bench_seed, "rng seed (overrides config)");
  b->add_option("--out-dir", bench_out, "output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (s->parsed()) return cmd_simulate(sim, sim_out);
    if (f->parsed())
      return cmd_fit(fit_in, fit_latent, fit_epochs, fit_lr, fit_kl, fit_seed, fit_codes,
                     fit_trace);
    if (c->parsed()) return cmd_cluster(cl_codes, cl_k, cl_mult, cl_seed, cl_out);
    if (e->parsed()) return cmd_estimate(est_in, est_codes, est_labels, ec, est_out);
    if (b->parsed()) return cmd_bench(bench_config, bench_seed, seed_opt->count() > 0, bench_out);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
