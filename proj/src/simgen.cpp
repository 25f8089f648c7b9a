#include "hte/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hte {

namespace {

void check_config(const SimConfig& cfg) {
  if (cfg.n < 1) throw std::invalid_argument("simgen: n must be positive");
  if (cfg.p < 5) throw std::invalid_argument("simgen: p must be >= 5");
  if (cfg.rho < 0.0 || cfg.rho >= 1.0)
    throw std::invalid_argument("simgen: rho must lie in [0, 1)");
  if (cfg.contamination_ratio < 0.0 || cfg.contamination_ratio >= 1.0)
    throw std::invalid_argument("simgen: contamination_ratio must lie in [0, 1)");
}

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

}  // namespace

Eigen::MatrixXd gen_covariates(const SimConfig& cfg, RngState& rng) {
  check_config(cfg);
  Eigen::MatrixXd x(cfg.n, cfg.p);
  const double a = std::sqrt(cfg.rho);
  const double b = std::sqrt(1.0 - cfg.rho);
  for (int i = 0; i < cfg.n; ++i) {
    double g = rng.normal();
    for (int j = 0; j < cfg.p; ++j) x(i, j) = a * g + b * rng.normal();
  }
  return x;
}

Eigen::VectorXi gen_treatment(const Eigen::MatrixXd& x, const DgpCoefficients& coef,
                              RngState& rng) {
  if (x.cols() < 5) throw std::invalid_argument("gen_treatment: needs p >= 5");
  Eigen::VectorXi d(x.rows());
  for (int i = 0; i < x.rows(); ++i) {
    double eta = coef.treat_x1 * x(i, 0) + coef.treat_x2 * x(i, 1) +
                 coef.treat_x1x2 * x(i, 0) * x(i, 1) +
                 coef.treat_x3sq * x(i, 2) * x(i, 2) + coef.treat_offset;
    d(i) = rng.bernoulli(logistic(eta)) ? 1 : 0;
  }
  return d;
}

std::vector<PotentialOutcomes> gen_outcomes(const Eigen::MatrixXd& x,
                                            const DgpCoefficients& coef, RngState& rng) {
  if (x.cols() < 5) throw std::invalid_argument("gen_outcomes: needs p >= 5");
  std::vector<PotentialOutcomes> out(x.rows());
  for (int i = 0; i < x.rows(); ++i) {
    double mu0 = coef.base_c + coef.base_x1 * x(i, 0) +
                 coef.base_sin_x2 * std::sin(x(i, 1)) + coef.base_x3x4 * x(i, 2) * x(i, 3);
    double tau = coef.eff_c + coef.eff_x1 * x(i, 0) + (x(i, 1) > 0.0 ? coef.eff_ind_x2 : 0.0);
    double e0 = coef.outcome_noise_sd * rng.normal();
    double e1 = coef.outcome_noise_sd * rng.normal();
    out[i] = {mu0 + e0, mu0 + tau + e1, tau};
  }
  return out;
}

Eigen::VectorXd gen_censoring(int n, double rate, RngState& rng) {
  if (rate <= 0.0) throw std::invalid_argument("gen_censoring: rate must be > 0");
  Eigen::VectorXd c(n);
  for (int i = 0; i < n; ++i) c(i) = rng.exponential(rate);
  return c;
}

std::pair<Eigen::MatrixXd, std::vector<int>> contaminate(const Eigen::MatrixXd& x,
                                                         double ratio, double scale,
                                                         RngState& rng) {
  if (ratio < 0.0 || ratio >= 1.0)
    throw std::invalid_argument("contaminate: ratio must lie in [0, 1)");
  const int n = static_cast<int>(x.rows());
  const int m = static_cast<int>(std::floor(ratio * n));
  Eigen::MatrixXd out = x;
  if (m == 0) return {out, {}};

  // Partial Fisher-Yates: first m slots of a shuffled index vector.
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  for (int i = 0; i < m; ++i) {
    int j = i + static_cast<int>(rng.uniform_index(n - i));
    std::swap(idx[i], idx[j]);
  }
  std::vector<int> chosen(idx.begin(), idx.begin() + m);
  std::sort(chosen.begin(), chosen.end());

  for (int r : chosen)
    for (int j = 0; j < x.cols(); ++j) out(r, j) += scale * rng.normal();
  return {out, chosen};
}

SimResult gen_dataset_full(const SimConfig& cfg) {
  check_config(cfg);
  RngState root(cfg.seed);

  RngState rng_x = root.split("covariates");
  Eigen::MatrixXd clean = gen_covariates(cfg, rng_x);

  RngState rng_c = root.split("contamination");
  auto [dirty, chosen] = contaminate(clean, cfg.contamination_ratio, cfg.noise_scale, rng_c);

  // Treatment and outcomes follow the clean covariates; contamination is
  // observation noise on the recorded X only, so truth stays tau(clean x).
  RngState rng_d = root.split("treatment");
  Eigen::VectorXi d = gen_treatment(clean, cfg.coef, rng_d);

  RngState rng_y = root.split("outcomes");
  std::vector<PotentialOutcomes> po = gen_outcomes(clean, cfg.coef, rng_y);

  Eigen::VectorXd censor;
  if (cfg.censor_rate > 0.0) {
    RngState rng_cens = root.split("censoring");
    censor = gen_censoring(cfg.n, cfg.censor_rate, rng_cens);
  }

  SimResult res;
  res.contaminated = chosen;
  res.data.p = cfg.p;
  res.data.truth.emplace();
  for (int i = 0; i < cfg.n; ++i) {
    ObservedSample s;
    double t = d(i) == 1 ? po[i].t1 : po[i].t0;
    if (cfg.censor_rate > 0.0) {
      s.y = std::min(t, censor(i));
      s.delta = t <= censor(i) ? 1 : 0;
    } else {
      s.y = t;
      s.delta = 1;
    }
    s.d = d(i);
    s.x = dirty.row(i).transpose();
    res.data.samples.push_back(std::move(s));
    res.data.truth->push_back(po[i].tau);
  }
  return res;
}

Dataset gen_dataset(const SimConfig& cfg) { return gen_dataset_full(cfg).data; }

}  // namespace hte
