#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace hte {

// One observed unit: y = min(event time, censoring time), delta = event
// indicator, d = treatment arm, x = covariate vector.
struct ObservedSample {
  double y = 0.0;
  int delta = 1;
  int d = 0;
  Eigen::VectorXd x;
};

struct Dataset {
  std::vector<ObservedSample> samples;
  int p = 0;
  std::optional<std::vector<double>> truth;  // per-unit true effect, simulation only

  int n() const { return static_cast<int>(samples.size()); }

  Eigen::MatrixXd covariates() const;
  Eigen::VectorXd outcomes() const;
  Eigen::VectorXi treatments() const;
  Eigen::VectorXi events() const;
};

// CSV layout: header y,delta,d,x1,...,xp[,tau_true]; numeric payload only,
// reals written with 17 significant digits so files round-trip exactly.
Dataset load_csv(const std::string& path);
void save_csv(const Dataset& ds, const std::string& path);

}  // namespace hte
