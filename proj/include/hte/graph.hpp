#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "hte/dataset.hpp"
#include "hte/rng.hpp"

namespace hte {

// Graph over the p confounders: one node per covariate, edges where the
// empirical correlation is strong, self-loop at every node.
struct ConfounderGraph {
  int p = 0;
  std::vector<std::vector<int>> neighbors;  // sorted, self included
  Eigen::MatrixXd node_features;            // p x f, rows of the correlation matrix
  Eigen::MatrixXd corr;                     // kept for the edge dump
};

enum class Activation { kElu, kIdentity };

// Single-head attention layer: e_ij = LeakyReLU(a^T [W h_i || W h_j]),
// alpha = softmax over the neighborhood, h_i' = act(sum_j alpha_ij W h_j).
struct GatLayer {
  Eigen::MatrixXd w;  // f' x f
  Eigen::VectorXd a;  // 2 f'
  double leaky_slope = 0.2;
  Activation activation = Activation::kElu;

  int out_dim() const { return static_cast<int>(w.rows()); }

  static GatLayer init(int out_dim, int in_dim, RngState& rng);
};

ConfounderGraph build_graph(const Dataset& ds, double threshold, int max_degree);

// One "i j corr" line per undirected edge (i < j), for debugging.
std::string edge_list(const ConfounderGraph& g);

Eigen::MatrixXd gat_forward(const ConfounderGraph& g, const GatLayer& layer);

// Dense attention matrix alpha (zero outside the neighborhood); each row
// sums to one over N(i).
Eigen::MatrixXd gat_attention(const ConfounderGraph& g, const GatLayer& layer);

struct GatGrad {
  Eigen::MatrixXd dw;
  Eigen::VectorXd da;
};

// Gradients of <upstream, h'> w.r.t. W and a.
GatGrad gat_grad(const ConfounderGraph& g, const GatLayer& layer,
                 const Eigen::MatrixXd& upstream);

// Per-sample handoff: project each covariate row through the node
// embeddings, x_tilde = X * H' / p.
Eigen::MatrixXd embed_samples(const Eigen::MatrixXd& x, const Eigen::MatrixXd& node_emb);

}  // namespace hte
