#include <doctest.h>

#include <cmath>
#include <fstream>

#include "hte/dataset.hpp"
#include "hte/simgen.hpp"

using namespace hte;

TEST_CASE("gen_covariates correlation structure") {
  SimConfig cfg;
  cfg.n = 10000;
  cfg.p = 5;
  auto corr_of = [](const Eigen::MatrixXd& x, int a, int b) {
    Eigen::VectorXd ca = x.col(a).array() - x.col(a).mean();
    Eigen::VectorXd cb = x.col(b).array() - x.col(b).mean();
    return ca.dot(cb) / std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  };

  cfg.rho = 0.0;
  RngState r0(11);
  Eigen::MatrixXd x0 = gen_covariates(cfg, r0);
  CHECK(std::abs(corr_of(x0, 0, 1)) < 0.05);

  cfg.rho = 0.3;
  RngState r1(12);
  Eigen::MatrixXd x1 = gen_covariates(cfg, r1);
  CHECK(corr_of(x1, 0, 1) == doctest::Approx(0.3).epsilon(0.1));
  CHECK(std::abs(x1.col(0).mean()) < 0.05);
  CHECK(std::abs(x1.col(0).squaredNorm() / cfg.n - 1.0) < 0.05);

  RngState r2(12);
  Eigen::MatrixXd x2 = gen_covariates(cfg, r2);
  CHECK((x1 - x2).cwiseAbs().maxCoeff() == 0.0);  // determinism
}

TEST_CASE("gen_treatment logistic model") {
  DgpCoefficients coef;
  // all-zero row: P = logistic(-0.3)
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(100000, 5);
  RngState rng(3);
  Eigen::VectorXi d = gen_treatment(z, coef, rng);
  double frac = d.cast<double>().mean();
  CHECK(frac == doctest::Approx(1.0 / (1.0 + std::exp(0.3))).epsilon(0.02));

  // zero coefficients -> exactly symmetric
  DgpCoefficients flat;
  flat.treat_x1 = flat.treat_x2 = flat.treat_x1x2 = flat.treat_x3sq = flat.treat_offset = 0.0;
  SimConfig cfg;
  cfg.n = 10000;
  cfg.p = 5;
  RngState rx(4);
  Eigen::MatrixXd x = gen_covariates(cfg, rx);
  RngState rd(5);
  Eigen::VectorXi d2 = gen_treatment(x, flat, rd);
  CHECK(d2.cast<double>().mean() == doctest::Approx(0.5).epsilon(0.05));

  // defaults keep prevalence sane and overlap healthy
  RngState rd2(6);
  Eigen::VectorXi d3 = gen_treatment(x, coef, rd2);
  double prev = d3.cast<double>().mean();
  CHECK(prev > 0.3);
  CHECK(prev < 0.7);
  for (int i = 0; i < x.rows(); ++i) {
    double eta = 0.4 * x(i, 0) - 0.4 * x(i, 1) + 0.5 * x(i, 0) * x(i, 1) +
                 0.3 * x(i, 2) * x(i, 2) - 0.3;
    double pr = 1.0 / (1.0 + std::exp(-eta));
    CHECK(pr > 0.002);
    CHECK(pr < 0.998);
  }
}

TEST_CASE("gen_outcomes forms") {
  DgpCoefficients coef;
  coef.outcome_noise_sd = 0.0;  // noiseless
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 5);
  RngState rng(1);
  auto po = gen_outcomes(z, coef, rng);
  CHECK(po[0].t0 == doctest::Approx(1.0));
  CHECK(po[0].t1 == doctest::Approx(2.0));
  CHECK(po[0].tau == doctest::Approx(1.0));

  // E[tau] = 1 + 0.6 * P(x2 > 0) = 1.3 under the covariate law
  SimConfig cfg;
  cfg.n = 100000;
  cfg.p = 5;
  RngState rx(2);
  Eigen::MatrixXd x = gen_covariates(cfg, rx);
  DgpCoefficients def;
  RngState ro(3);
  auto po2 = gen_outcomes(x, def, ro);
  double mean_tau = 0.0;
  for (const auto& o : po2) mean_tau += o.tau;
  mean_tau /= cfg.n;
  CHECK(mean_tau == doctest::Approx(1.3).epsilon(0.01));

  // tau depends only on x, not on the noise stream
  RngState ra(10), rb(11);
  auto pa = gen_outcomes(x.topRows(100), def, ra);
  auto pb = gen_outcomes(x.topRows(100), def, rb);
  for (int i = 0; i < 100; ++i) CHECK(pa[i].tau == pb[i].tau);
}

TEST_CASE("gen_censoring") {
  RngState rng(5);
  Eigen::VectorXd c = gen_censoring(100000, 1.0, rng);
  CHECK(c.mean() == doctest::Approx(1.0).epsilon(0.02));
  CHECK(c.minCoeff() > 0.0);
  CHECK_THROWS_AS(gen_censoring(10, 0.0, rng), std::invalid_argument);

  // Huge rate: censoring times collapse toward 0, so nearly everything is
  // censored. Units whose outcome falls below zero still satisfy T <= C for
  // any positive C and stay events; under the default coefficients that is
  // roughly 10% of units, so allow up to 15%.
  SimConfig cfg;
  cfg.n = 200;
  cfg.p = 5;
  cfg.censor_rate = 1e6;
  Dataset ds = gen_dataset(cfg);
  int events = 0;
  for (const auto& s : ds.samples) events += s.delta;
  CHECK(events <= 30);
}

TEST_CASE("censoring fraction moderate under defaults") {
  SimConfig cfg;
  cfg.n = 5000;
  cfg.p = 5;
  cfg.censor_rate = 0.1;
  Dataset ds = gen_dataset(cfg);
  double censored = 0.0;
  for (const auto& s : ds.samples) censored += 1 - s.delta;
  censored /= cfg.n;
  CHECK(censored > 0.03);
  CHECK(censored < 0.35);
}

TEST_CASE("contaminate") {
  RngState rx(8);
  SimConfig cfg;
  cfg.n = 100;
  cfg.p = 5;
  Eigen::MatrixXd x = gen_covariates(cfg, rx);

  RngState rc(9);
  auto [same, none] = contaminate(x, 0.0, 5.0, rc);
  CHECK(none.empty());
  CHECK((same - x).cwiseAbs().maxCoeff() == 0.0);

  RngState rc2(9);
  auto [dirty, idx] = contaminate(x, 0.2, 5.0, rc2);
  CHECK(idx.size() == 20);
  std::vector<char> hit(100, 0);
  for (int i : idx) hit[i] = 1;
  for (int i = 0; i < 100; ++i) {
    if (hit[i])
      CHECK((dirty.row(i) - x.row(i)).cwiseAbs().maxCoeff() > 0.0);
    else
      CHECK((dirty.row(i) - x.row(i)).cwiseAbs().maxCoeff() == 0.0);  // untouched rows bit-identical
  }
}

TEST_CASE("gen_dataset composition") {
  SimConfig cfg;
  cfg.n = 20;
  cfg.p = 100;
  cfg.contamination_ratio = 0.0;
  cfg.seed = 77;
  Dataset ds = gen_dataset(cfg);
  CHECK(ds.n() == 20);
  CHECK(ds.p == 100);
  REQUIRE(ds.truth.has_value());
  CHECK(ds.truth->size() == 20);

  // identical bytes on re-run
  Dataset ds2 = gen_dataset(cfg);
  std::string a = "/tmp/simgen_a.csv", b = "/tmp/simgen_b.csv";
  save_csv(ds, a);
  save_csv(ds2, b);
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);

  // no-censoring flag
  SimConfig nc = cfg;
  nc.censor_rate = 0.0;
  Dataset dn = gen_dataset(nc);
  for (const auto& s : dn.samples) CHECK(s.delta == 1);
}

TEST_CASE("contamination never changes truth") {
  SimConfig clean;
  clean.n = 50;
  clean.p = 10;
  clean.seed = 5;
  SimConfig dirty = clean;
  dirty.contamination_ratio = 0.2;
  Dataset a = gen_dataset(clean);
  Dataset b = gen_dataset(dirty);
  CHECK(*a.truth == *b.truth);
  // outcomes and treatment equally untouched
  for (int i = 0; i < a.n(); ++i) {
    CHECK(a.samples[i].y == b.samples[i].y);
    CHECK(a.samples[i].d == b.samples[i].d);
  }
}
