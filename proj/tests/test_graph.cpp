#include <doctest.h>

#include <cmath>

#include "hte/graph.hpp"
#include "hte/simgen.hpp"

using namespace hte;

namespace {

Dataset from_matrix(const Eigen::MatrixXd& x) {
  Dataset ds;
  ds.p = static_cast<int>(x.cols());
  for (int i = 0; i < x.rows(); ++i) {
    ObservedSample s;
    s.x = x.row(i).transpose();
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

ConfounderGraph random_graph(int p, int f, RngState& rng, double edge_prob = 0.4) {
  ConfounderGraph g;
  g.p = p;
  g.node_features.resize(p, f);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < f; ++j) g.node_features(i, j) = rng.normal();
  g.corr = Eigen::MatrixXd::Zero(p, p);
  g.neighbors.assign(p, {});
  for (int i = 0; i < p; ++i) g.neighbors[i].push_back(i);
  for (int i = 0; i < p; ++i)
    for (int j = i + 1; j < p; ++j)
      if (rng.bernoulli(edge_prob)) {
        g.neighbors[i].push_back(j);
        g.neighbors[j].push_back(i);
      }
  for (auto& nb : g.neighbors) std::sort(nb.begin(), nb.end());
  return g;
}

}  // namespace

TEST_CASE("build_graph forced edges") {
  Eigen::MatrixXd x(4, 2);
  x << 0, 0, 1, 2, 2, 4, 3, 6;  // x2 = 2*x1, |corr| = 1
  ConfounderGraph g = build_graph(from_matrix(x), 0.5, 5);
  CHECK(g.neighbors[0] == std::vector<int>{0, 1});
  CHECK(g.neighbors[1] == std::vector<int>{0, 1});

  // unsatisfiable threshold: self-loops only
  ConfounderGraph g2 = build_graph(from_matrix(x), 1.01, 5);
  CHECK(g2.neighbors[0] == std::vector<int>{0});
  CHECK(g2.neighbors[1] == std::vector<int>{1});
}

TEST_CASE("build_graph near-duplicate covariates") {
  RngState rng(21);
  Eigen::MatrixXd x(200, 5);
  for (int i = 0; i < 200; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = rng.normal();
  for (int i = 0; i < 200; ++i) x(i, 4) = x(i, 0) + 0.05 * rng.normal();
  ConfounderGraph g = build_graph(from_matrix(x), 0.8, 5);
  auto& nb = g.neighbors[0];
  CHECK(std::find(nb.begin(), nb.end(), 4) != nb.end());
}

TEST_CASE("build_graph zero-variance column") {
  Eigen::MatrixXd x(5, 3);
  x << 1, 7, 1, 2, 7, 2, 3, 7, 3, 4, 7, 4, 5, 7, 5;
  ConfounderGraph g = build_graph(from_matrix(x), 0.5, 5);
  CHECK(g.neighbors[1] == std::vector<int>{1});  // isolated plus self-loop
  CHECK(g.corr(1, 1) == 0.0);
}

TEST_CASE("gat_forward single-neighbor softmax") {
  RngState rng(1);
  ConfounderGraph g = random_graph(3, 2, rng, 0.0);  // self-loops only
  GatLayer layer = GatLayer::init(2, 2, rng);
  Eigen::MatrixXd h = gat_forward(g, layer);
  for (int i = 0; i < 3; ++i) {
    Eigen::VectorXd u = layer.w * g.node_features.row(i).transpose();
    for (int k = 0; k < 2; ++k) {
      double expect = u(k) > 0 ? u(k) : std::expm1(u(k));
      CHECK(h(i, k) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("gat_forward zero attention is neighborhood mean") {
  RngState rng(2);
  // 3-node path: 0-1-2
  ConfounderGraph g = random_graph(3, 3, rng, 0.0);
  g.neighbors = {{0, 1}, {0, 1, 2}, {1, 2}};
  GatLayer layer;
  layer.w = Eigen::MatrixXd::Identity(3, 3);
  layer.a = Eigen::VectorXd::Zero(6);
  layer.activation = Activation::kIdentity;
  Eigen::MatrixXd h = gat_forward(g, layer);
  Eigen::VectorXd mean01 = 0.5 * (g.node_features.row(0) + g.node_features.row(1));
  CHECK((h.row(0).transpose() - mean01).norm() < 1e-12);
  Eigen::VectorXd mean012 = (g.node_features.row(0) + g.node_features.row(1) +
                             g.node_features.row(2)) / 3.0;
  CHECK((h.row(1).transpose() - mean012).norm() < 1e-12);
}

TEST_CASE("attention rows sum to one") {
  // With identity activation and W, a as given, recover alpha by probing:
  // use sigma = identity and compare h' to sums; instead verify through the
  // softmax identity sum_j alpha_ij = 1 via h' of constant features.
  RngState rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    int p = 2 + static_cast<int>(rng.uniform_index(6));
    int f = 1 + static_cast<int>(rng.uniform_index(4));
    ConfounderGraph g = random_graph(p, f, rng);
    GatLayer layer = GatLayer::init(3, f, rng);
    layer.activation = Activation::kIdentity;
    // Constant node features under W: h'_i = (sum_j alpha_ij) * W c
    Eigen::VectorXd c(f);
    for (int j = 0; j < f; ++j) c(j) = rng.normal();
    ConfounderGraph gc = g;
    for (int i = 0; i < p; ++i) gc.node_features.row(i) = c.transpose();
    Eigen::MatrixXd h = gat_forward(gc, layer);
    Eigen::VectorXd wc = layer.w * c;
    for (int i = 0; i < p; ++i)
      for (int k = 0; k < 3; ++k) CHECK(h(i, k) == doctest::Approx(wc(k)).epsilon(1e-12));
  }
}

TEST_CASE("gat permutation equivariance") {
  RngState rng(4);
  ConfounderGraph g = random_graph(5, 3, rng);
  GatLayer layer = GatLayer::init(2, 3, rng);
  Eigen::MatrixXd h = gat_forward(g, layer);

  // reverse permutation
  std::vector<int> perm = {4, 3, 2, 1, 0};
  ConfounderGraph gp = g;
  for (int i = 0; i < 5; ++i) gp.node_features.row(perm[i]) = g.node_features.row(i);
  gp.neighbors.assign(5, {});
  for (int i = 0; i < 5; ++i)
    for (int j : g.neighbors[i]) gp.neighbors[perm[i]].push_back(perm[j]);
  for (auto& nb : gp.neighbors) std::sort(nb.begin(), nb.end());
  Eigen::MatrixXd hp = gat_forward(gp, layer);
  for (int i = 0; i < 5; ++i) CHECK((hp.row(perm[i]) - h.row(i)).norm() < 1e-12);
}

TEST_CASE("isolated extra node leaves others unchanged") {
  RngState rng(5);
  ConfounderGraph g = random_graph(4, 3, rng);
  GatLayer layer = GatLayer::init(2, 3, rng);
  Eigen::MatrixXd h = gat_forward(g, layer);

  ConfounderGraph g2 = g;
  g2.p = 5;
  g2.node_features.conservativeResize(5, 3);
  for (int j = 0; j < 3; ++j) g2.node_features(4, j) = rng.normal();
  g2.neighbors.push_back({4});
  Eigen::MatrixXd h2 = gat_forward(g2, layer);
  CHECK((h2.topRows(4) - h).norm() < 1e-12);
}

TEST_CASE("gat_grad matches finite differences") {
  RngState rng(6);
  for (int rep = 0; rep < 20; ++rep) {
    ConfounderGraph g = random_graph(4, 3, rng);
    GatLayer layer = GatLayer::init(2, 3, rng);
    Eigen::MatrixXd upstream(4, 2);
    for (int i = 0; i < 4; ++i)
      for (int k = 0; k < 2; ++k) upstream(i, k) = rng.normal();

    GatGrad grad = gat_grad(g, layer, upstream);
    auto loss = [&](const GatLayer& l) {
      return (upstream.array() * gat_forward(g, l).array()).sum();
    };
    const double step = 1e-5;
    double worst = 0.0;
    for (int i = 0; i < layer.w.rows(); ++i)
      for (int j = 0; j < layer.w.cols(); ++j) {
        GatLayer lp = layer, lm = layer;
        lp.w(i, j) += step;
        lm.w(i, j) -= step;
        double fd = (loss(lp) - loss(lm)) / (2 * step);
        // The 1e-6 floor keeps central-difference rounding noise (~1e-11 at
        // step 1e-5 with O(1) losses) from dominating exact-zero gradients.
        double denom = std::max({std::abs(fd), std::abs(grad.dw(i, j)), 1e-6});
        worst = std::max(worst, std::abs(fd - grad.dw(i, j)) / denom);
      }
    for (int i = 0; i < layer.a.size(); ++i) {
      GatLayer lp = layer, lm = layer;
      lp.a(i) += step;
      lm.a(i) -= step;
      double fd = (loss(lp) - loss(lm)) / (2 * step);
      double denom = std::max({std::abs(fd), std::abs(grad.da(i)), 1e-6});
      worst = std::max(worst, std::abs(fd - grad.da(i)) / denom);
    }
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("gat_grad edge cases") {
  RngState rng(7);
  ConfounderGraph g = random_graph(4, 3, rng);
  GatLayer layer = GatLayer::init(2, 3, rng);
  GatGrad zero = gat_grad(g, layer, Eigen::MatrixXd::Zero(4, 2));
  CHECK(zero.dw.norm() == 0.0);
  CHECK(zero.da.norm() == 0.0);

  // single-neighbor nodes with a = 0: attention stuck at 1, da = 0
  ConfounderGraph iso = random_graph(3, 3, rng, 0.0);
  GatLayer l2 = GatLayer::init(2, 3, rng);
  l2.a.setZero();
  Eigen::MatrixXd up = Eigen::MatrixXd::Ones(3, 2);
  GatGrad grad = gat_grad(iso, l2, up);
  CHECK(grad.da.norm() == 0.0);
}

TEST_CASE("embed_samples") {
  RngState rng(8);
  Eigen::MatrixXd x(6, 4);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = rng.normal();

  // identity projection
  Eigen::MatrixXd xe = embed_samples(x, Eigen::MatrixXd::Identity(4, 4));
  CHECK((xe - x / 4.0).norm() < 1e-15);

  // duplicate rows map to duplicate rows
  Eigen::MatrixXd h(4, 2);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 2; ++j) h(i, j) = rng.normal();
  Eigen::MatrixXd xd = x;
  xd.row(3) = xd.row(0);
  Eigen::MatrixXd xde = embed_samples(xd, h);
  CHECK((xde.row(3) - xde.row(0)).norm() == 0.0);

  // matches the dense product
  Eigen::MatrixXd expect = x * h / 4.0;
  CHECK((embed_samples(x, h) - expect).norm() < 1e-15);
}
