#include "hte/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <stdexcept>

namespace hte {

namespace {

constexpr int kMaxLloyd = 300;

int nearest(const Eigen::MatrixXd& centroids, const Eigen::VectorXd& point, int k) {
  int best = 0;
  double best_d = (centroids.row(0).transpose() - point).squaredNorm();
  for (int c = 1; c < k; ++c) {
    double d = (centroids.row(c).transpose() - point).squaredNorm();
    if (d < best_d) {  // strict: ties stay with the lower id
      best_d = d;
      best = c;
    }
  }
  return best;
}

double median_of(std::vector<double> v) {
  size_t n = v.size();
  std::nth_element(v.begin(), v.begin() + n / 2, v.end());
  double hi = v[n / 2];
  if (n % 2 == 1) return hi;
  std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
  return 0.5 * (v[n / 2 - 1] + hi);
}

}  // namespace

double wcss(const Eigen::MatrixXd& codes, const Clustering& c) {
  double total = 0.0;
  for (int i = 0; i < codes.rows(); ++i)
    total += (codes.row(i) - c.centroids.row(c.labels(i))).squaredNorm();
  return total;
}

Clustering kmeans(const Eigen::MatrixXd& codes, int k, RngState& rng,
                  std::vector<double>* objective_trace) {
  const int n = static_cast<int>(codes.rows());
  if (k < 1 || k > n)
    throw std::invalid_argument("kmeans: k = " + std::to_string(k) +
                                " outside [1, n = " + std::to_string(n) + "]");

  Clustering c;
  c.k = k;
  c.centroids.resize(k, codes.cols());
  c.labels = Eigen::VectorXi::Constant(n, -1);

  // k-means++ seeding
  int first = static_cast<int>(rng.uniform_index(n));
  c.centroids.row(0) = codes.row(first);
  Eigen::VectorXd dist2(n);
  for (int i = 0; i < n; ++i) dist2(i) = (codes.row(i) - c.centroids.row(0)).squaredNorm();
  for (int c_id = 1; c_id < k; ++c_id) {
    double total = dist2.sum();
    int pick;
    if (total <= 0.0) {
      pick = static_cast<int>(rng.uniform_index(n));
    } else {
      double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist2(i);
        if (acc >= r) {
          pick = i;
          break;
        }
      }
    }
    c.centroids.row(c_id) = codes.row(pick);
    for (int i = 0; i < n; ++i)
      dist2(i) = std::min(dist2(i), (codes.row(i) - c.centroids.row(c_id)).squaredNorm());
  }

  double prev_obj = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < kMaxLloyd; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int a = nearest(c.centroids, codes.row(i).transpose(), k);
      if (a != c.labels(i)) {
        c.labels(i) = a;
        changed = true;
      }
    }

    // recenter; reseed any empty cluster at the worst-fit point
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, codes.cols());
    Eigen::VectorXi counts = Eigen::VectorXi::Zero(k);
    for (int i = 0; i < n; ++i) {
      sums.row(c.labels(i)) += codes.row(i);
      counts(c.labels(i)) += 1;
    }
    for (int c_id = 0; c_id < k; ++c_id) {
      if (counts(c_id) > 0) {
        c.centroids.row(c_id) = sums.row(c_id) / counts(c_id);
      } else {
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          double d = (codes.row(i) - c.centroids.row(c.labels(i))).squaredNorm();
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        c.centroids.row(c_id) = codes.row(far);
        c.labels(far) = c_id;
        changed = true;
      }
    }

    double obj = wcss(codes, c);
    if (objective_trace) objective_trace->push_back(obj);
    if (obj > prev_obj + 1e-9 * (1.0 + prev_obj))
      throw std::logic_error("kmeans: objective increased across a Lloyd iteration");
    prev_obj = obj;
    if (!changed) break;
  }
  return c;
}

std::vector<int> detect_outliers(const Eigen::MatrixXd& codes, double multiplier) {
  const int n = static_cast<int>(codes.rows());
  if (n < 4) throw std::invalid_argument("detect_outliers: need n >= 4");

  Eigen::VectorXd center(codes.cols());
  for (int j = 0; j < codes.cols(); ++j) {
    std::vector<double> col(codes.col(j).data(), codes.col(j).data() + n);
    center(j) = median_of(std::move(col));
  }
  std::vector<double> dist(n);
  for (int i = 0; i < n; ++i) dist[i] = (codes.row(i).transpose() - center).norm();

  double med = median_of(dist);
  std::vector<double> dev(n);
  for (int i = 0; i < n; ++i) dev[i] = std::abs(dist[i] - med);
  double mad = median_of(dev);
  if (mad <= 0.0) return {};

  double cut = med + multiplier * mad;
  std::vector<int> out;
  for (int i = 0; i < n; ++i)
    if (dist[i] > cut) out.push_back(i);
  return out;
}

Clustering cluster_with_outliers(const Eigen::MatrixXd& codes, int k, double multiplier,
                                 RngState& rng) {
  const int n = static_cast<int>(codes.rows());
  std::vector<int> outliers = detect_outliers(codes, multiplier);
  if (outliers.empty()) return kmeans(codes, k, rng);

  std::vector<char> is_out(n, 0);
  for (int i : outliers) is_out[i] = 1;
  std::vector<int> inliers;
  for (int i = 0; i < n; ++i)
    if (!is_out[i]) inliers.push_back(i);

  int k_in = k;
  if (static_cast<int>(inliers.size()) < k_in) {
    k_in = static_cast<int>(inliers.size());
    std::cerr << "cluster_with_outliers: only " << inliers.size()
              << " inliers, reducing k to " << k_in << "\n";
  }

  Eigen::MatrixXd in_codes(inliers.size(), codes.cols());
  for (size_t t = 0; t < inliers.size(); ++t) in_codes.row(t) = codes.row(inliers[t]);
  Clustering in_c = kmeans(in_codes, k_in, rng);

  int k_out = std::max(1, static_cast<int>(std::floor(std::sqrt(outliers.size()))));
  k_out = std::min<int>(k_out, static_cast<int>(outliers.size()));
  Eigen::MatrixXd out_codes(outliers.size(), codes.cols());
  for (size_t t = 0; t < outliers.size(); ++t) out_codes.row(t) = codes.row(outliers[t]);
  Clustering out_c = kmeans(out_codes, k_out, rng);

  Clustering c;
  c.k = k_in + k_out;
  c.labels.resize(n);
  c.centroids.resize(c.k, codes.cols());
  c.centroids.topRows(k_in) = in_c.centroids;
  c.centroids.bottomRows(k_out) = out_c.centroids;
  for (size_t t = 0; t < inliers.size(); ++t) c.labels(inliers[t]) = in_c.labels(t);
  for (size_t t = 0; t < outliers.size(); ++t) c.labels(outliers[t]) = k_in + out_c.labels(t);
  for (int c_id = k_in; c_id < c.k; ++c_id) c.outlier_clusters.insert(c_id);
  return c;
}

double silhouette(const Eigen::MatrixXd& codes, const Eigen::VectorXi& labels, int k) {
  const int n = static_cast<int>(codes.rows());
  std::vector<int> size(k, 0);
  for (int i = 0; i < n; ++i) size[labels(i)] += 1;

  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    if (size[labels(i)] <= 1) continue;  // s(i) = 0 for singletons
    std::vector<double> mean_d(k, 0.0);
    for (int j = 0; j < n; ++j) {
      if (j == i) continue;
      mean_d[labels(j)] += (codes.row(i) - codes.row(j)).norm();
    }
    double a = mean_d[labels(i)] / (size[labels(i)] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c = 0; c < k; ++c) {
      if (c == labels(i) || size[c] == 0) continue;
      b = std::min(b, mean_d[c] / size[c]);
    }
    double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  return total / n;
}

int select_k(const Eigen::MatrixXd& codes, int k_min, int k_max, RngState& rng) {
  const int n = static_cast<int>(codes.rows());
  if (k_min > k_max || k_min < 2 || k_max > n - 1)
    throw std::invalid_argument("select_k: range must satisfy 2 <= k_min <= k_max <= n-1");

  int best_k = k_min;
  double best_s = -std::numeric_limits<double>::infinity();
  for (int k = k_min; k <= k_max; ++k) {
    RngState r = rng.split("select-k-" + std::to_string(k));
    Clustering c = kmeans(codes, k, r);
    double s = silhouette(codes, c.labels, k);
    if (s > best_s + 1e-12) {
      best_s = s;
      best_k = k;
    }
  }
  return best_k;
}

}  // namespace hte
