#pragma once

#include <Eigen/Dense>
#include <set>
#include <vector>

#include "hte/rng.hpp"

namespace hte {

struct Clustering {
  Eigen::VectorXi labels;          // length n, values in [0, k)
  Eigen::MatrixXd centroids;       // k x dim
  std::set<int> outlier_clusters;  // ids of clusters formed from outliers
  int k = 0;
};

// k-means++ seeding followed by Lloyd iterations until the assignment is a
// fixpoint or 300 iterations. Nearest-centroid ties break toward the lower
// cluster id. An empty cluster is reseeded at the point farthest from its
// current centroid. The within-cluster sum of squares per iteration is
// appended to objective_trace when given.
Clustering kmeans(const Eigen::MatrixXd& codes, int k, RngState& rng,
                  std::vector<double>* objective_trace = nullptr);

double wcss(const Eigen::MatrixXd& codes, const Clustering& c);

// Point i is an outlier iff its distance to the coordinate-wise median
// exceeds median(distances) + multiplier * MAD(distances).
std::vector<int> detect_outliers(const Eigen::MatrixXd& codes, double multiplier = 3.0);

// k-means on inliers, plus max(1, floor(sqrt(count))) extra clusters formed
// from the detected outliers.
Clustering cluster_with_outliers(const Eigen::MatrixXd& codes, int k, double multiplier,
                                 RngState& rng);

double silhouette(const Eigen::MatrixXd& codes, const Eigen::VectorXi& labels, int k);

// Mean-silhouette argmax over [k_min, k_max] on inliers; ties toward
// smaller k.
int select_k(const Eigen::MatrixXd& codes, int k_min, int k_max, RngState& rng);

}  // namespace hte
