#include "hte/graph.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace hte {

GatLayer GatLayer::init(int out_dim, int in_dim, RngState& rng) {
  GatLayer l;
  double s = std::sqrt(6.0 / (in_dim + out_dim));
  l.w.resize(out_dim, in_dim);
  for (int i = 0; i < out_dim; ++i)
    for (int j = 0; j < in_dim; ++j) l.w(i, j) = s * (2.0 * rng.uniform() - 1.0);
  double sa = std::sqrt(6.0 / (2 * out_dim + 1));
  l.a.resize(2 * out_dim);
  for (int i = 0; i < 2 * out_dim; ++i) l.a(i) = sa * (2.0 * rng.uniform() - 1.0);
  return l;
}

ConfounderGraph build_graph(const Dataset& ds, double threshold, int max_degree) {
  if (ds.n() < 3) throw std::invalid_argument("build_graph: need n >= 3");
  if (max_degree < 1) throw std::invalid_argument("build_graph: max_degree must be >= 1");
  const int p = ds.p;
  Eigen::MatrixXd x = ds.covariates();
  Eigen::RowVectorXd mean = x.colwise().mean();
  Eigen::MatrixXd c = x.rowwise() - mean;
  Eigen::VectorXd sd = (c.array().square().colwise().sum() / (ds.n() - 1)).sqrt();

  Eigen::MatrixXd corr = Eigen::MatrixXd::Zero(p, p);
  bool warned = false;
  for (int j = 0; j < p; ++j) {
    if (sd(j) <= 0.0) {
      if (!warned) {
        std::cerr << "build_graph: zero-variance covariate x" << j + 1
                  << ", correlations set to 0\n";
        warned = true;
      }
      continue;
    }
    corr(j, j) = 1.0;
    for (int k = j + 1; k < p; ++k) {
      if (sd(k) <= 0.0) continue;
      double r = c.col(j).dot(c.col(k)) / ((ds.n() - 1) * sd(j) * sd(k));
      corr(j, k) = corr(k, j) = r;
    }
  }

  // Keep at most max_degree strongest neighbors above threshold, then
  // symmetrize by union.
  std::set<std::pair<int, int>> edges;
  for (int j = 0; j < p; ++j) {
    std::vector<std::pair<double, int>> cand;
    for (int k = 0; k < p; ++k) {
      if (k == j) continue;
      double r = std::abs(corr(j, k));
      if (r >= threshold) cand.emplace_back(r, k);
    }
    std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    int keep = std::min<int>(max_degree, static_cast<int>(cand.size()));
    for (int t = 0; t < keep; ++t) {
      int k = cand[t].second;
      edges.insert({std::min(j, k), std::max(j, k)});
    }
  }

  ConfounderGraph g;
  g.p = p;
  g.corr = corr;
  g.node_features = corr;
  g.neighbors.assign(p, {});
  for (int j = 0; j < p; ++j) g.neighbors[j].push_back(j);  // self-loops
  for (auto [j, k] : edges) {
    g.neighbors[j].push_back(k);
    g.neighbors[k].push_back(j);
  }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  return g;
}

std::string edge_list(const ConfounderGraph& g) {
  std::ostringstream out;
  for (int j = 0; j < g.p; ++j)
    for (int k : g.neighbors[j])
      if (k >= j) out << j << ' ' << k << ' ' << g.corr(j, k) << '\n';
  return out.str();
}

namespace {

double leaky(double v, double slope) { return v > 0.0 ? v : slope * v; }
double leaky_grad(double v, double slope) { return v > 0.0 ? 1.0 : slope; }

double act(double v, Activation a) {
  if (a == Activation::kIdentity) return v;
  return v > 0.0 ? v : std::expm1(v);  // ELU
}
double act_grad(double v, Activation a) {
  if (a == Activation::kIdentity) return 1.0;
  return v > 0.0 ? 1.0 : std::exp(v);
}

void check_dims(const ConfounderGraph& g, const GatLayer& layer) {
  if (layer.w.cols() != g.node_features.cols())
    throw std::invalid_argument("gat: W has " + std::to_string(layer.w.cols()) +
                                " input columns but node features have " +
                                std::to_string(g.node_features.cols()));
  if (layer.a.size() != 2 * layer.w.rows())
    throw std::invalid_argument("gat: attention vector length " +
                                std::to_string(layer.a.size()) + " != 2*" +
                                std::to_string(layer.w.rows()));
}

struct ForwardCache {
  Eigen::MatrixXd z;                         // p x f', W h_j
  std::vector<std::vector<double>> logits;   // per node, per neighbor
  std::vector<std::vector<double>> alpha;
  Eigen::MatrixXd pre;                       // p x f', pre-activation sums
};

ForwardCache run_forward(const ConfounderGraph& g, const GatLayer& layer) {
  check_dims(g, layer);
  const int fp = layer.out_dim();
  ForwardCache c;
  c.z = g.node_features * layer.w.transpose();  // p x f'
  Eigen::VectorXd a1 = layer.a.head(fp), a2 = layer.a.tail(fp);
  Eigen::VectorXd s1 = c.z * a1, s2 = c.z * a2;  // per-node attention halves

  c.logits.resize(g.p);
  c.alpha.resize(g.p);
  c.pre = Eigen::MatrixXd::Zero(g.p, fp);
  for (int i = 0; i < g.p; ++i) {
    const auto& nb = g.neighbors[i];
    auto& lg = c.logits[i];
    lg.resize(nb.size());
    double mx = -1e300;
    for (size_t t = 0; t < nb.size(); ++t) {
      lg[t] = leaky(s1(i) + s2(nb[t]), layer.leaky_slope);
      mx = std::max(mx, lg[t]);
    }
    auto& al = c.alpha[i];
    al.resize(nb.size());
    double denom = 0.0;
    for (size_t t = 0; t < nb.size(); ++t) {
      al[t] = std::exp(lg[t] - mx);
      denom += al[t];
    }
    for (size_t t = 0; t < nb.size(); ++t) {
      al[t] /= denom;
      c.pre.row(i) += al[t] * c.z.row(nb[t]);
    }
  }
  return c;
}

}  // namespace

Eigen::MatrixXd gat_forward(const ConfounderGraph& g, const GatLayer& layer) {
  ForwardCache c = run_forward(g, layer);
  Eigen::MatrixXd h(g.p, layer.out_dim());
  for (int i = 0; i < g.p; ++i)
    for (int k = 0; k < layer.out_dim(); ++k) h(i, k) = act(c.pre(i, k), layer.activation);
  return h;
}

Eigen::MatrixXd gat_attention(const ConfounderGraph& g, const GatLayer& layer) {
  ForwardCache c = run_forward(g, layer);
  Eigen::MatrixXd alpha = Eigen::MatrixXd::Zero(g.p, g.p);
  for (int i = 0; i < g.p; ++i)
    for (size_t t = 0; t < g.neighbors[i].size(); ++t)
      alpha(i, g.neighbors[i][t]) = c.alpha[i][t];
  return alpha;
}

GatGrad gat_grad(const ConfounderGraph& g, const GatLayer& layer,
                 const Eigen::MatrixXd& upstream) {
  check_dims(g, layer);
  if (upstream.rows() != g.p || upstream.cols() != layer.out_dim())
    throw std::invalid_argument("gat_grad: upstream is " + std::to_string(upstream.rows()) +
                                "x" + std::to_string(upstream.cols()) + ", expected " +
                                std::to_string(g.p) + "x" + std::to_string(layer.out_dim()));
  const int fp = layer.out_dim();
  ForwardCache c = run_forward(g, layer);
  Eigen::VectorXd a1 = layer.a.head(fp), a2 = layer.a.tail(fp);

  Eigen::MatrixXd dz = Eigen::MatrixXd::Zero(g.p, fp);
  Eigen::VectorXd da1 = Eigen::VectorXd::Zero(fp), da2 = Eigen::VectorXd::Zero(fp);

  for (int i = 0; i < g.p; ++i) {
    const auto& nb = g.neighbors[i];
    const auto& al = c.alpha[i];
    Eigen::VectorXd du(fp);
    for (int k = 0; k < fp; ++k)
      du(k) = upstream(i, k) * act_grad(c.pre(i, k), layer.activation);

    // softmax backward over the neighborhood
    std::vector<double> dalpha(nb.size());
    double inner = 0.0;
    for (size_t t = 0; t < nb.size(); ++t) {
      dalpha[t] = du.dot(c.z.row(nb[t]));
      inner += al[t] * dalpha[t];
    }
    for (size_t t = 0; t < nb.size(); ++t) {
      int j = nb[t];
      dz.row(j) += al[t] * du.transpose();
      double de = al[t] * (dalpha[t] - inner);
      double raw = c.z.row(i).dot(a1) + c.z.row(j).dot(a2);
      double ds = de * leaky_grad(raw, layer.leaky_slope);
      da1 += ds * c.z.row(i).transpose();
      da2 += ds * c.z.row(j).transpose();
      dz.row(i) += ds * a1.transpose();
      dz.row(j) += ds * a2.transpose();
    }
  }

  GatGrad grad;
  grad.dw = dz.transpose() * g.node_features;  // f' x f
  grad.da.resize(2 * fp);
  grad.da << da1, da2;
  return grad;
}

Eigen::MatrixXd embed_samples(const Eigen::MatrixXd& x, const Eigen::MatrixXd& node_emb) {
  if (x.cols() != node_emb.rows())
    throw std::invalid_argument("embed_samples: X has " + std::to_string(x.cols()) +
                                " columns but embeddings have " +
                                std::to_string(node_emb.rows()) + " rows");
  return x * node_emb / static_cast<double>(x.cols());
}

}  // namespace hte
