#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/graph.hpp"
#include "hte/rng.hpp"

namespace hte {

// Encoder: [x_tilde; t] -> hidden (tanh) -> (mu, logvar), logvar clamped to
// [-10, 10]. Decoder: [z; t] -> hidden (tanh) -> reconstruction mean.
struct CvaeModel {
  Eigen::MatrixXd enc_w1;   // m x (q+1)
  Eigen::VectorXd enc_b1;
  Eigen::MatrixXd enc_wmu;  // l x m
  Eigen::VectorXd enc_bmu;
  Eigen::MatrixXd enc_wlv;  // l x m
  Eigen::VectorXd enc_blv;
  Eigen::MatrixXd dec_w1;   // m x (l+1)
  Eigen::VectorXd dec_b1;
  Eigen::MatrixXd dec_w2;   // q x m
  Eigen::VectorXd dec_b2;

  int input_dim = 0;   // q
  int hidden_dim = 0;  // m
  int latent_dim = 0;  // l

  static CvaeModel init(int input_dim, int hidden_dim, int latent_dim, RngState& rng);
  static CvaeModel zeros(int input_dim, int hidden_dim, int latent_dim);
};

struct LatentCode {
  Eigen::VectorXd mu;
  Eigen::VectorXd logvar;
  Eigen::VectorXd z;
};

struct TrainConfig {
  int epochs = 500;
  double learning_rate = 1e-2;
  double kl_weight = 1.0;  // beta on the KL term
  uint64_t seed = 0;
};

LatentCode encode(const CvaeModel& m, const Eigen::VectorXd& x, double t, RngState& rng);

Eigen::VectorXd decode(const CvaeModel& m, const Eigen::VectorXd& z, double t);

// KL( N(mu, diag(exp(logvar))) || N(0, I) ) in closed form.
double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar);

struct ElboTerms {
  double loss = 0.0;   // negative ELBO (minimized)
  double recon = 0.0;  // 0.5 * ||x - xrec||^2
  double kl = 0.0;
};

// Single-sample negative ELBO with the given reparameterization noise.
ElboTerms elbo(const CvaeModel& m, const Eigen::VectorXd& x, double t,
               const Eigen::VectorXd& x_target, const Eigen::VectorXd& eps,
               double kl_weight);

struct CvaeGrads {
  Eigen::MatrixXd enc_w1, enc_wmu, enc_wlv, dec_w1, dec_w2;
  Eigen::VectorXd enc_b1, enc_bmu, enc_blv, dec_b1, dec_b2;
};

// Mean negative ELBO of the full GAT -> embed -> CVAE chain over all
// samples, with frozen per-sample noise eps (n x l).
double pipeline_loss(const Eigen::MatrixXd& x, const Eigen::VectorXi& t,
                     const ConfounderGraph& g, const GatLayer& layer, const CvaeModel& m,
                     const Eigen::MatrixXd& eps, double kl_weight);

struct PipelineGrads {
  GatGrad gat;
  CvaeGrads cvae;
};

std::pair<double, PipelineGrads> pipeline_loss_grad(const Eigen::MatrixXd& x,
                                                    const Eigen::VectorXi& t,
                                                    const ConfounderGraph& g,
                                                    const GatLayer& layer,
                                                    const CvaeModel& m,
                                                    const Eigen::MatrixXd& eps,
                                                    double kl_weight);

struct TrainResult {
  CvaeModel model;
  GatLayer layer;
  Eigen::MatrixXd codes;  // n x l noise-free latent means
  std::vector<double> loss_trace;
};

// Full-batch gradient descent on the joint objective, starting from the
// given parameters.
TrainResult train(const Dataset& ds, const ConfounderGraph& g, GatLayer layer,
                  CvaeModel model, const TrainConfig& cfg);

// Convenience overload with default-initialized parameters.
TrainResult train(const Dataset& ds, const ConfounderGraph& g, const TrainConfig& cfg,
                  int embed_dim = 8, int hidden_dim = 16, int latent_dim = 2);

// Max relative error between analytic and central-difference gradients of
// the joint objective on the given instance.
double grad_check(const Eigen::MatrixXd& x, const Eigen::VectorXi& t,
                  const ConfounderGraph& g, const GatLayer& layer, const CvaeModel& m,
                  const Eigen::MatrixXd& eps, double kl_weight, double step = 1e-5);

}  // namespace hte
