#include "hte/estimate.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <stdexcept>

namespace hte {

namespace {

double logistic(double eta) { return 1.0 / (1.0 + std::exp(-eta)); }

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& features) {
  Eigen::MatrixXd x(features.rows(), features.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(features.cols()) = features;
  return x;
}

double mad_scale(const Eigen::VectorXd& r) {
  std::vector<double> a(r.data(), r.data() + r.size());
  auto med = [](std::vector<double> v) {
    size_t n = v.size();
    std::nth_element(v.begin(), v.begin() + n / 2, v.end());
    double hi = v[n / 2];
    if (n % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + n / 2 - 1, v.end());
    return 0.5 * (v[n / 2 - 1] + hi);
  };
  double m = med(a);
  for (double& v : a) v = std::abs(v - m);
  return 1.4826 * med(std::move(a));
}

// Damped Newton for the logistic score, optionally ridge-penalized.
bool newton_logistic(const Eigen::MatrixXd& x, const Eigen::VectorXd& dv, double penalty,
                     Eigen::VectorXd& beta) {
  const int r = static_cast<int>(x.cols());
  beta = Eigen::VectorXd::Zero(r);
  for (int it = 0; it < 100; ++it) {
    Eigen::VectorXd e = (x * beta).unaryExpr([](double v) { return logistic(v); });
    Eigen::VectorXd grad = x.transpose() * (dv - e) - penalty * beta;
    if (grad.norm() < 1e-8) return true;
    Eigen::VectorXd w = e.array() * (1.0 - e.array());
    Eigen::MatrixXd hess = x.transpose() * w.asDiagonal() * x +
                           (penalty + 1e-12) * Eigen::MatrixXd::Identity(r, r);
    Eigen::VectorXd step = hess.ldlt().solve(grad);
    if (!step.allFinite()) return false;

    auto loglik = [&](const Eigen::VectorXd& b) {
      Eigen::VectorXd eta = x * b;
      double ll = 0.0;
      for (int i = 0; i < eta.size(); ++i)
        ll += dv(i) * eta(i) - std::log1p(std::exp(eta(i)));
      return ll - 0.5 * penalty * b.squaredNorm();
    };
    double base = loglik(beta);
    double t = 1.0;
    bool moved = false;
    for (int h = 0; h < 30; ++h) {
      Eigen::VectorXd cand = beta + t * step;
      double ll = loglik(cand);
      if (std::isfinite(ll) && ll >= base) {
        beta = cand;
        moved = true;
        break;
      }
      t *= 0.5;
    }
    if (!moved) return false;
    if (beta.norm() > 1e4) return false;  // heading to separation
  }
  Eigen::VectorXd e = (x * beta).unaryExpr([](double v) { return logistic(v); });
  return (x.transpose() * (dv - e) - penalty * beta).norm() < 1e-8;
}

}  // namespace

double PropensityModel::score(const Eigen::VectorXd& features) const {
  double eta = beta(0) + beta.tail(beta.size() - 1).dot(features);
  return std::clamp(logistic(eta), trim, 1.0 - trim);
}

Eigen::VectorXd PropensityModel::scores(const Eigen::MatrixXd& features) const {
  Eigen::VectorXd out(features.rows());
  for (int i = 0; i < features.rows(); ++i) out(i) = score(features.row(i).transpose());
  return out;
}

PropensityModel fit_propensity(const Eigen::MatrixXd& features, const Eigen::VectorXi& d,
                               double trim) {
  const int n = static_cast<int>(features.rows());
  int treated = d.sum();
  if (treated == 0 || treated == n)
    throw std::invalid_argument("fit_propensity: one arm is empty");

  // Standardize internally for conditioning (latent-code features can have
  // arbitrary scale); the fit is mapped back, so scores are unchanged.
  const int r = static_cast<int>(features.cols());
  Eigen::RowVectorXd mean = features.colwise().mean();
  Eigen::RowVectorXd sd(r);
  for (int j = 0; j < r; ++j) {
    double v = (features.col(j).array() - mean(j)).square().sum() / std::max(1, n - 1);
    sd(j) = v > 0.0 ? std::sqrt(v) : 1.0;
  }
  Eigen::MatrixXd std_features =
      (features.rowwise() - mean).array().rowwise() / sd.array();

  Eigen::MatrixXd x = with_intercept(std_features);
  Eigen::VectorXd dv = d.cast<double>();

  PropensityModel pm;
  pm.trim = trim;
  if (!newton_logistic(x, dv, 0.0, pm.beta)) {
    std::cerr << "fit_propensity: Newton failed, falling back to penalized fit\n";
    bool done = false;
    for (double penalty = 1e-2; penalty <= 1e2 && !done; penalty *= 10.0)
      done = newton_logistic(x, dv, penalty, pm.beta);
    if (!done)
      throw std::runtime_error("fit_propensity: penalized fit did not converge");
  }

  // Undo the standardization: beta_j -> beta_j / sd_j, intercept absorbs the
  // centering.
  for (int j = 0; j < r; ++j) {
    pm.beta(j + 1) /= sd(j);
    pm.beta(0) -= pm.beta(j + 1) * mean(j);
  }
  return pm;
}

double OutcomeModel::predict(int arm, const Eigen::VectorXd& features) const {
  const Eigen::VectorXd& b = arm == 1 ? beta1 : beta0;
  return b(0) + b.tail(b.size() - 1).dot(features);
}

namespace {

Eigen::VectorXd fit_arm(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, double lambda,
                        double c, double& scale_out) {
  const int r = static_cast<int>(x.cols());
  Eigen::MatrixXd pen = lambda * Eigen::MatrixXd::Identity(r, r);
  pen(0, 0) = 0.0;  // intercept unpenalized

  auto solve = [&](const Eigen::VectorXd& w, double lam_mult,
                   Eigen::VectorXd& beta) -> bool {
    Eigen::MatrixXd a = x.transpose() * w.asDiagonal() * x + lam_mult * pen;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(a);
    beta = ldlt.solve(x.transpose() * w.cwiseProduct(y));
    return ldlt.info() == Eigen::Success && beta.allFinite() &&
           (a * beta - x.transpose() * w.cwiseProduct(y)).norm() <
               1e-6 * (1.0 + y.norm());
  };
  auto solve_retry = [&](const Eigen::VectorXd& w, Eigen::VectorXd& beta) {
    double mult = 1.0;
    for (int attempt = 0; attempt < 4; ++attempt) {
      if (solve(w, mult, beta)) return;
      mult *= 10.0;
      std::cerr << "fit_outcome: singular normal equations, lambda x" << mult << "\n";
    }
    throw std::runtime_error("fit_outcome: normal equations remain singular");
  };

  Eigen::VectorXd w = Eigen::VectorXd::Ones(x.rows());
  Eigen::VectorXd beta;
  solve_retry(w, beta);
  scale_out = 1.0;

  if (!std::isfinite(c)) {
    Eigen::VectorXd res = y - x * beta;
    double s = mad_scale(res);
    scale_out = s > 0.0 ? s : std::max(1e-8, std::sqrt(res.squaredNorm() / res.size()));
    return beta;
  }

  for (int it = 0; it < 50; ++it) {
    Eigen::VectorXd res = y - x * beta;
    double s = mad_scale(res);
    if (s <= 0.0) s = std::max(1e-8, std::sqrt(res.squaredNorm() / res.size()));
    scale_out = s;
    for (int i = 0; i < x.rows(); ++i) {
      double u = std::abs(res(i)) / s;
      w(i) = u <= c ? 1.0 : c / u;
    }
    Eigen::VectorXd prev = beta;
    solve_retry(w, beta);
    if ((beta - prev).norm() < 1e-8) break;
  }
  return beta;
}

}  // namespace

OutcomeModel fit_outcome(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                         const Eigen::VectorXi& d, double lambda, double c) {
  const int n = static_cast<int>(features.rows());
  std::vector<int> arm0, arm1;
  for (int i = 0; i < n; ++i) (d(i) == 1 ? arm1 : arm0).push_back(i);
  if (arm0.size() < 2 || arm1.size() < 2)
    throw std::invalid_argument("fit_outcome: each arm needs >= 2 samples");

  OutcomeModel om;
  om.lambda = lambda;
  om.huber_c = c;
  auto fit = [&](const std::vector<int>& rows, double& scale) {
    Eigen::MatrixXd xa(rows.size(), features.cols() + 1);
    Eigen::VectorXd ya(rows.size());
    for (size_t t = 0; t < rows.size(); ++t) {
      xa(t, 0) = 1.0;
      xa.row(t).tail(features.cols()) = features.row(rows[t]);
      ya(t) = y(rows[t]);
    }
    return fit_arm(xa, ya, lambda, c, scale);
  };
  om.beta0 = fit(arm0, om.scale0);
  om.beta1 = fit(arm1, om.scale1);
  return om;
}

namespace {

// DR score per unit; psi clips residuals at c * arm scale.
Eigen::VectorXd dr_scores(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                          const Eigen::VectorXi& d, const PropensityModel& pm,
                          const OutcomeModel& om, const std::vector<int>& idx) {
  Eigen::VectorXd out(idx.size());
  for (size_t t = 0; t < idx.size(); ++t) {
    int i = idx[t];
    Eigen::VectorXd f = features.row(i).transpose();
    double e = pm.score(f);
    double m0 = om.predict(0, f);
    double m1 = om.predict(1, f);
    double val = m1 - m0;
    if (d(i) == 1) {
      double r = y(i) - m1;
      if (std::isfinite(om.huber_c)) {
        double cl = om.huber_c * om.scale1;
        r = std::clamp(r, -cl, cl);
      }
      val += r / e;
    } else {
      double r = y(i) - m0;
      if (std::isfinite(om.huber_c)) {
        double cl = om.huber_c * om.scale0;
        r = std::clamp(r, -cl, cl);
      }
      val -= r / (1.0 - e);
    }
    out(t) = val;
  }
  return out;
}

ClusterEffect summarize(const Eigen::VectorXd& scores, const Eigen::VectorXi& d,
                        const std::vector<int>& idx, RngState& rng, int bootstrap) {
  ClusterEffect eff;
  eff.n_k = static_cast<int>(idx.size());
  for (int i : idx) (d(i) == 1 ? eff.n_treated : eff.n_control) += 1;
  eff.tau_hat = scores.mean();

  if (bootstrap > 0 && eff.n_k > 1) {
    Eigen::VectorXd draws(bootstrap);
    for (int b = 0; b < bootstrap; ++b) {
      double s = 0.0;
      for (int t = 0; t < eff.n_k; ++t)
        s += scores(static_cast<int>(rng.uniform_index(eff.n_k)));
      draws(b) = s / eff.n_k;
    }
    double mean = draws.mean();
    eff.se_hat = std::sqrt((draws.array() - mean).square().sum() / (bootstrap - 1));
  }
  return eff;
}

void check_size(const Eigen::VectorXi& d, const std::vector<int>& idx, int min_arm) {
  int t1 = 0, t0 = 0;
  for (int i : idx) (d(i) == 1 ? t1 : t0) += 1;
  if (t1 < min_arm || t0 < min_arm)
    throw std::invalid_argument("cluster too small: " + std::to_string(t1) + " treated / " +
                                std::to_string(t0) + " control, need >= " +
                                std::to_string(min_arm) + " each");
}

}  // namespace

ClusterEffect tau_dr(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                     const Eigen::VectorXi& d, const PropensityModel& pm,
                     const OutcomeModel& om, const std::vector<int>& idx, RngState& rng,
                     int bootstrap) {
  check_size(d, idx, 4);
  Eigen::VectorXd scores = dr_scores(features, y, d, pm, om, idx);
  return summarize(scores, d, idx, rng, bootstrap);
}

ClusterEffect tau_plain_aipw(const Eigen::MatrixXd& features, const Eigen::VectorXd& y,
                             const Eigen::VectorXi& d, const PropensityModel& pm,
                             const OutcomeModel& om_plain, const std::vector<int>& idx,
                             RngState& rng, int bootstrap) {
  return tau_dr(features, y, d, pm, om_plain, idx, rng, bootstrap);
}

ClusterEffect tau_ipw(const Eigen::VectorXd& y, const Eigen::VectorXi& d,
                      const PropensityModel& pm, const Eigen::MatrixXd& features,
                      const std::vector<int>& idx, RngState& rng, int bootstrap) {
  check_size(d, idx, 4);
  Eigen::VectorXd scores(idx.size());
  for (size_t t = 0; t < idx.size(); ++t) {
    int i = idx[t];
    double e = pm.score(features.row(i).transpose());
    scores(t) = d(i) == 1 ? y(i) / e : -y(i) / (1.0 - e);
  }
  return summarize(scores, d, idx, rng, bootstrap);
}

ClusterEffect tau_or(const Eigen::MatrixXd& features, const Eigen::VectorXi& d,
                     const OutcomeModel& om, const std::vector<int>& idx, RngState& rng,
                     int bootstrap) {
  check_size(d, idx, 4);
  Eigen::VectorXd scores(idx.size());
  for (size_t t = 0; t < idx.size(); ++t) {
    Eigen::VectorXd f = features.row(idx[t]).transpose();
    scores(t) = om.predict(1, f) - om.predict(0, f);
  }
  return summarize(scores, d, idx, rng, bootstrap);
}

EstimateResult estimate_all(const Dataset& ds, const Clustering& clustering,
                            const Eigen::MatrixXd& codes, const EstimateConfig& cfg) {
  const int n = ds.n();
  if (clustering.labels.size() != n)
    throw std::invalid_argument("estimate_all: clustering does not match dataset");
  Eigen::VectorXd y = ds.outcomes();
  Eigen::VectorXi d = ds.treatments();

  PropensityModel pm = fit_propensity(codes, d, cfg.trim);
  OutcomeModel om = fit_outcome(codes, y, d, cfg.ridge_lambda, cfg.huber_c);

  // Collect members, then merge clusters below the per-arm minimum into the
  // nearest eligible cluster by centroid distance.
  std::vector<std::vector<int>> members(clustering.k);
  for (int i = 0; i < n; ++i) members[clustering.labels(i)].push_back(i);

  auto eligible = [&](const std::vector<int>& idx) {
    int t1 = 0, t0 = 0;
    for (int i : idx) (d(i) == 1 ? t1 : t0) += 1;
    return t1 >= cfg.min_arm_size && t0 >= cfg.min_arm_size;
  };

  std::vector<int> owner(clustering.k);  // cluster id -> merged group id
  for (int c = 0; c < clustering.k; ++c) owner[c] = c;
  std::vector<char> ok(clustering.k, 0);
  for (int c = 0; c < clustering.k; ++c) ok[c] = eligible(members[c]) ? 1 : 0;

  bool any_ok = std::any_of(ok.begin(), ok.end(), [](char v) { return v != 0; });
  if (!any_ok) {
    // No cluster stands alone; estimate once over everything.
    for (int c = 0; c < clustering.k; ++c) owner[c] = 0;
  } else {
    for (int c = 0; c < clustering.k; ++c) {
      if (ok[c]) continue;
      int best = -1;
      double best_d = 0.0;
      for (int c2 = 0; c2 < clustering.k; ++c2) {
        if (!ok[c2]) continue;
        double dist = (clustering.centroids.row(c) - clustering.centroids.row(c2)).norm();
        if (best < 0 || dist < best_d) {
          best = c2;
          best_d = dist;
        }
      }
      owner[c] = best;
    }
  }

  std::vector<std::vector<int>> merged(clustering.k);
  std::vector<char> merged_outlier(clustering.k, 0);
  for (int c = 0; c < clustering.k; ++c) {
    for (int i : members[c]) merged[owner[c]].push_back(i);
    if (clustering.outlier_clusters.count(c)) merged_outlier[owner[c]] = 1;
  }

  RngState root(cfg.seed);
  EstimateResult res;
  res.per_sample_tau.resize(n);
  double weighted = 0.0, var = 0.0;
  for (int c = 0; c < clustering.k; ++c) {
    if (merged[c].empty()) continue;
    std::sort(merged[c].begin(), merged[c].end());
    RngState rng = root.split("bootstrap-" + std::to_string(c));
    ClusterEffect eff = tau_dr(codes, y, d, pm, om, merged[c], rng, cfg.bootstrap);
    eff.id = c;
    eff.is_outlier_cluster = merged_outlier[c] != 0;
    for (int i : merged[c]) res.per_sample_tau(i) = eff.tau_hat;
    weighted += static_cast<double>(eff.n_k) * eff.tau_hat;
    var += std::pow(static_cast<double>(eff.n_k) / n * eff.se_hat, 2);
    res.clusters.push_back(eff);
  }
  res.overall_tau = weighted / n;
  res.overall_se = std::sqrt(var);
  return res;
}

}  // namespace hte
