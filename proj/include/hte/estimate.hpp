#pragma once

#include <Eigen/Dense>
#include <limits>
#include <vector>

#include "hte/cluster.hpp"
#include "hte/dataset.hpp"
#include "hte/rng.hpp"

namespace hte {

// Logistic propensity model fit by the covariate-balancing estimating
// equations sum_i (d_i - e_i) [1, x_i] = 0.
struct PropensityModel {
  Eigen::VectorXd beta;  // intercept first
  double trim = 0.05;

  double score(const Eigen::VectorXd& features) const;
  Eigen::VectorXd scores(const Eigen::MatrixXd& features) const;
};

PropensityModel fit_propensity(const Eigen::MatrixXd& features, const Eigen::VectorXi& d,
                               double trim = 0.05);

// Per-arm ridge regression with Huber IRLS; c = +inf disables the
// robustness weights and reduces to plain ridge.
struct OutcomeModel {
  Eigen::VectorXd beta0, beta1;  // intercept first
  double lambda = 1e-3;
  double huber_c = 1.345;
  double scale0 = 1.0, scale1 = 1.0;  // robust residual scales per arm

  double predict(int arm, const Eigen::VectorXd& features) const;
};

OutcomeModel fit_outcome(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                         const Eigen::VectorXi& d, double lambda = 1e-3,
                         double c = 1.345);

struct ClusterEffect {
  int id = 0;
  double tau_hat = 0.0;
  int n_k = 0, n_treated = 0, n_control = 0;
  double se_hat = 0.0;
  bool is_outlier_cluster = false;
};

constexpr double kNoClip = std::numeric_limits<double>::infinity();

// AIPW over the cluster with Huber-clipped residuals; se by nonparametric
// bootstrap within the cluster (models held fixed).
ClusterEffect tau_dr(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                     const Eigen::VectorXi& d, const PropensityModel& pm,
                     const OutcomeModel& om, const std::vector<int>& idx, RngState& rng,
                     int bootstrap = 500);

ClusterEffect tau_plain_aipw(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                             const Eigen::VectorXi& d, const PropensityModel& pm,
                             const OutcomeModel& om_plain, const std::vector<int>& idx,
                             RngState& rng, int bootstrap = 500);

ClusterEffect tau_ipw(const Eigen::VectorXd& y, const Eigen::VectorXi& d,
                      const PropensityModel& pm, const Eigen::MatrixXd& features,
                      const std::vector<int>& idx, RngState& rng, int bootstrap = 500);

ClusterEffect tau_or(const Eigen::MatrixXd& features, const Eigen::VectorXi& d,
                     const OutcomeModel& om, const std::vector<int>& idx, RngState& rng,
                     int bootstrap = 500);

struct EstimateConfig {
  double trim = 0.05;
  double ridge_lambda = 1e-3;
  double huber_c = 1.345;
  int bootstrap = 500;
  int min_arm_size = 4;
  uint64_t seed = 0;
};

struct EstimateResult {
  std::vector<ClusterEffect> clusters;
  double overall_tau = 0.0;
  double overall_se = 0.0;
  Eigen::VectorXd per_sample_tau;  // tau of each unit's cluster
};

// Fits propensity and outcome models globally on the latent codes, merges
// clusters below the minimum per-arm size into the nearest eligible one,
// and applies tau_dr per cluster.
EstimateResult estimate_all(const Dataset& ds, const Clustering& clustering,
                            const Eigen::MatrixXd& codes, const EstimateConfig& cfg);

}  // namespace hte
