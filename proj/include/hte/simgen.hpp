#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/rng.hpp"

namespace hte {

// Coefficients of the data-generating process. The defaults keep overlap
// healthy and treatment prevalence near 50%; they are tunable, not sacred.
struct DgpCoefficients {
  // treatment logit: b1*x1 + b2*x2 + b12*x1*x2 + b3*x3^2 + offset
  double treat_x1 = 0.4;
  double treat_x2 = -0.4;
  double treat_x1x2 = 0.5;
  double treat_x3sq = 0.3;
  double treat_offset = -0.3;
  // baseline: mu0 = base_c + base_x1*x1 + base_sin_x2*sin(x2) + base_x3x4*x3*x4
  double base_c = 1.0;
  double base_x1 = 0.5;
  double base_sin_x2 = 0.5;
  double base_x3x4 = 0.25;
  // effect: tau = eff_c + eff_x1*x1 + eff_ind_x2*I(x2 > 0)
  double eff_c = 1.0;
  double eff_x1 = 0.8;
  double eff_ind_x2 = 0.6;
  double outcome_noise_sd = 0.5;
};

struct SimConfig {
  int n = 100;
  int p = 100;
  double rho = 0.3;                  // equicorrelation of covariates
  double contamination_ratio = 0.0;  // fraction of rows receiving gross noise
  double noise_scale = 5.0;          // sd of the additive contamination
  double censor_rate = 0.1;          // exponential rate; <= 0 disables censoring
  uint64_t seed = 0;
  DgpCoefficients coef;
};

struct PotentialOutcomes {
  double t0 = 0.0;
  double t1 = 0.0;
  double tau = 0.0;  // expected treated-minus-control contrast for the unit
};

// Rows i.i.d. N(0, Sigma) with unit variances and equicorrelation rho,
// via the one-factor form x = sqrt(rho)*g*1 + sqrt(1-rho)*e.
Eigen::MatrixXd gen_covariates(const SimConfig& cfg, RngState& rng);

Eigen::VectorXi gen_treatment(const Eigen::MatrixXd& x, const DgpCoefficients& coef,
                              RngState& rng);

std::vector<PotentialOutcomes> gen_outcomes(const Eigen::MatrixXd& x,
                                            const DgpCoefficients& coef, RngState& rng);

Eigen::VectorXd gen_censoring(int n, double rate, RngState& rng);

// Adds N(0, scale^2) noise to every covariate of floor(ratio*n) rows chosen
// uniformly at random. Returns the contaminated matrix and the chosen rows.
std::pair<Eigen::MatrixXd, std::vector<int>> contaminate(const Eigen::MatrixXd& x,
                                                         double ratio, double scale,
                                                         RngState& rng);

struct SimResult {
  Dataset data;
  std::vector<int> contaminated;  // ground-truth outlier rows
};

SimResult gen_dataset_full(const SimConfig& cfg);
Dataset gen_dataset(const SimConfig& cfg);

}  // namespace hte
