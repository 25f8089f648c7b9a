#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hte/cluster.hpp"
#include "hte/cvae.hpp"
#include "hte/graph.hpp"
#include "hte/simgen.hpp"

using namespace hte;

namespace {

Eigen::MatrixXd blobs(const std::vector<Eigen::Vector2d>& centers, int per, double sd,
                      RngState& rng) {
  Eigen::MatrixXd x(centers.size() * per, 2);
  int r = 0;
  for (const auto& c : centers)
    for (int i = 0; i < per; ++i, ++r) {
      x(r, 0) = c(0) + sd * rng.normal();
      x(r, 1) = c(1) + sd * rng.normal();
    }
  return x;
}

}  // namespace

TEST_CASE("kmeans well-separated pairs") {
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 0.1, 10.0, 10.1;
  RngState rng(1);
  Clustering c = kmeans(x, 2, rng);
  CHECK(c.labels(0) == c.labels(1));
  CHECK(c.labels(2) == c.labels(3));
  CHECK(c.labels(0) != c.labels(2));
  std::vector<double> cents = {c.centroids(0, 0), c.centroids(1, 0)};
  std::sort(cents.begin(), cents.end());
  CHECK(cents[0] == doctest::Approx(0.05));
  CHECK(cents[1] == doctest::Approx(10.05));
}

TEST_CASE("kmeans degenerate k") {
  RngState rng(2);
  Eigen::MatrixXd x(6, 2);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 2; ++j) x(i, j) = rng.normal();

  Clustering all = kmeans(x, 6, rng);
  CHECK(wcss(x, all) == doctest::Approx(0.0));
  std::set<int> labels(all.labels.data(), all.labels.data() + 6);
  CHECK(labels.size() == 6);

  Clustering one = kmeans(x, 1, rng);
  CHECK((one.centroids.row(0) - x.colwise().mean()).norm() < 1e-12);

  CHECK_THROWS_AS(kmeans(x, 7, rng), std::invalid_argument);
}

TEST_CASE("kmeans objective monotone, sizes sum to n") {
  RngState rng(3);
  for (int rep = 0; rep < 100; ++rep) {
    int n = 8 + static_cast<int>(rng.uniform_index(40));
    int dim = 1 + static_cast<int>(rng.uniform_index(4));
    int k = 1 + static_cast<int>(rng.uniform_index(std::min(n, 6)));
    Eigen::MatrixXd x(n, dim);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < dim; ++j) x(i, j) = rng.normal();
    std::vector<double> trace;
    Clustering c = kmeans(x, k, rng, &trace);  // throws internally on an increase
    for (size_t t = 1; t < trace.size(); ++t)
      CHECK(trace[t] <= trace[t - 1] + 1e-9 * (1.0 + trace[t - 1]));
    std::vector<int> sizes(k, 0);
    for (int i = 0; i < n; ++i) {
      CHECK(c.labels(i) >= 0);
      CHECK(c.labels(i) < k);
      sizes[c.labels(i)] += 1;
    }
    CHECK(std::accumulate(sizes.begin(), sizes.end(), 0) == n);
    for (int s : sizes) CHECK(s > 0);  // every cluster non-empty
  }
}

TEST_CASE("detect_outliers") {
  RngState rng(4);
  Eigen::MatrixXd x(21, 2);
  for (int i = 0; i < 20; ++i) {
    x(i, 0) = 0.1 * rng.normal();
    x(i, 1) = 0.1 * rng.normal();
  }
  x(20, 0) = 100.0;
  x(20, 1) = 0.0;
  CHECK(detect_outliers(x, 3.0) == std::vector<int>{20});

  // identical points: MAD = 0 rule gives the empty set
  Eigen::MatrixXd same = Eigen::MatrixXd::Ones(10, 2);
  CHECK(detect_outliers(same, 3.0).empty());

  CHECK_THROWS_AS(detect_outliers(Eigen::MatrixXd::Zero(3, 2), 3.0), std::invalid_argument);
}

TEST_CASE("cluster_with_outliers") {
  RngState rng(5);
  // No outliers: identical to plain kmeans. Two exact duplicate groups give
  // every point the same distance to the coordinate-wise median, so the
  // MAD = 0 convention yields an empty outlier set.
  Eigen::MatrixXd dup(20, 2);
  for (int i = 0; i < 10; ++i) dup.row(i) << 0.0, 0.0;
  for (int i = 10; i < 20; ++i) dup.row(i) << 5.0, 5.0;
  REQUIRE(detect_outliers(dup, 3.0).empty());
  RngState ra(9), rb(9);
  Clustering plain = kmeans(dup, 2, ra);
  Clustering withp = cluster_with_outliers(dup, 2, 3.0, rb);
  CHECK(withp.outlier_clusters.empty());
  CHECK((withp.labels - plain.labels).cwiseAbs().maxCoeff() == 0);

  Eigen::MatrixXd x = blobs({{0, 0}, {5, 5}}, 10, 0.3, rng);

  // one extreme point becomes a singleton extra cluster
  Eigen::MatrixXd x2 = x;
  x2.conservativeResize(21, 2);
  x2(20, 0) = 500.0;
  x2(20, 1) = 500.0;
  RngState rc(10);
  Clustering c = cluster_with_outliers(x2, 2, 3.0, rc);
  CHECK(c.k == 3);
  CHECK(c.outlier_clusters == std::set<int>{2});
  CHECK(c.labels(20) == 2);
  int in_outlier = 0;
  for (int i = 0; i < 21; ++i) in_outlier += c.labels(i) == 2 ? 1 : 0;
  CHECK(in_outlier == 1);

  // outlier promotion does not move inlier assignments
  RngState rd(10);
  Eigen::MatrixXd inliers_only = x2.topRows(20);
  Clustering base = kmeans(inliers_only, 2, rd);
  for (int i = 0; i < 20; ++i) CHECK(c.labels(i) == base.labels(i));
}

TEST_CASE("outlier recovery on a contaminated run") {
  SimConfig cfg;
  cfg.n = 100;
  cfg.p = 100;
  cfg.contamination_ratio = 0.2;
  cfg.noise_scale = 5.0;
  cfg.seed = 31;
  SimResult sim = gen_dataset_full(cfg);
  ConfounderGraph g = build_graph(sim.data, 0.3, 10);
  TrainConfig tc;
  tc.epochs = 300;
  tc.seed = 31;
  TrainResult tr = train(sim.data, g, tc, 8, 16, 2);
  std::vector<int> flagged = detect_outliers(tr.codes, 3.0);
  int hits = 0;
  for (int i : flagged)
    if (std::binary_search(sim.contaminated.begin(), sim.contaminated.end(), i)) ++hits;
  CHECK(hits >= static_cast<int>(0.6 * sim.contaminated.size()));

  // and the promoted clusters are label-disjoint from inlier clusters
  RngState rc(32);
  Clustering c = cluster_with_outliers(tr.codes, 2, 3.0, rc);
  CHECK_FALSE(c.outlier_clusters.empty());
  for (int i = 0; i < c.labels.size(); ++i) {
    bool in_out = c.outlier_clusters.count(c.labels(i)) > 0;
    bool flagged_i = std::find(flagged.begin(), flagged.end(), i) != flagged.end();
    CHECK(in_out == flagged_i);
  }
}

TEST_CASE("select_k") {
  RngState rng(6);
  Eigen::MatrixXd four = blobs({{0, 0}, {8, 0}, {0, 8}, {8, 8}}, 12, 0.4, rng);
  RngState rs(7);
  CHECK(select_k(four, 2, 6, rs) == 4);

  Eigen::MatrixXd two = blobs({{0, 0}, {8, 8}}, 15, 0.4, rng);
  RngState rs2(8);
  CHECK(select_k(two, 2, 6, rs2) == 2);

  // brute-force silhouette argmax agrees
  RngState rs3(9);
  int best = -1;
  double best_s = -2.0;
  for (int k = 2; k <= 6; ++k) {
    RngState r = rs3.split("select-k-" + std::to_string(k));
    Clustering c = kmeans(four, k, r);
    double s = silhouette(four, c.labels, k);
    if (s > best_s + 1e-12) {
      best_s = s;
      best = k;
    }
  }
  RngState rs4(9);
  CHECK(select_k(four, 2, 6, rs4) == best);

  // single blob: flat scores, tie-break toward the smaller k
  RngState rb(10);
  Eigen::MatrixXd one = blobs({{0, 0}}, 12, 1.0, rb);
  RngState rs5(11);
  int k1 = select_k(one, 2, 3, rs5);
  CHECK(k1 >= 2);
  CHECK(k1 <= 3);
}

TEST_CASE("relabeling invariance of downstream partition") {
  RngState rng(12);
  Eigen::MatrixXd x = blobs({{0, 0}, {6, 6}, {0, 6}}, 8, 0.3, rng);
  RngState ra(13), rb(14);
  Clustering c1 = kmeans(x, 3, ra);
  Clustering c2 = kmeans(x, 3, rb);
  // same partition regardless of label ids
  auto partition_sig = [&](const Clustering& c) {
    std::vector<std::vector<int>> groups(3);
    for (int i = 0; i < x.rows(); ++i) groups[c.labels(i)].push_back(i);
    std::sort(groups.begin(), groups.end());
    return groups;
  };
  CHECK(partition_sig(c1) == partition_sig(c2));
}
