#include "hte/cvae.hpp"

#include <cmath>
#include <stdexcept>

namespace hte {

namespace {

constexpr double kLogvarClamp = 10.0;

Eigen::MatrixXd glorot(int rows, int cols, RngState& rng) {
  double s = std::sqrt(6.0 / (rows + cols));
  Eigen::MatrixXd w(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) w(i, j) = s * (2.0 * rng.uniform() - 1.0);
  return w;
}

struct SampleCache {
  Eigen::VectorXd v;       // [x; t]
  Eigen::VectorXd h1;      // encoder hidden
  Eigen::VectorXd mu, lv_raw, lv, z;
  Eigen::VectorXd u;       // [z; t]
  Eigen::VectorXd h2;      // decoder hidden
  Eigen::VectorXd xrec;
};

SampleCache run_sample(const CvaeModel& m, const Eigen::VectorXd& x, double t,
                       const Eigen::VectorXd& eps) {
  if (x.size() != m.input_dim)
    throw std::invalid_argument("cvae: input length " + std::to_string(x.size()) +
                                " != model input_dim " + std::to_string(m.input_dim));
  if (eps.size() != m.latent_dim)
    throw std::invalid_argument("cvae: eps length " + std::to_string(eps.size()) +
                                " != latent_dim " + std::to_string(m.latent_dim));
  SampleCache c;
  c.v.resize(m.input_dim + 1);
  c.v << x, t;
  c.h1 = (m.enc_w1 * c.v + m.enc_b1).array().tanh();
  c.mu = m.enc_wmu * c.h1 + m.enc_bmu;
  c.lv_raw = m.enc_wlv * c.h1 + m.enc_blv;
  c.lv = c.lv_raw.cwiseMax(-kLogvarClamp).cwiseMin(kLogvarClamp);
  c.z = c.mu + (c.lv / 2.0).array().exp().matrix().cwiseProduct(eps);
  c.u.resize(m.latent_dim + 1);
  c.u << c.z, t;
  c.h2 = (m.dec_w1 * c.u + m.dec_b1).array().tanh();
  c.xrec = m.dec_w2 * c.h2 + m.dec_b2;
  return c;
}

CvaeGrads zero_grads(const CvaeModel& m) {
  CvaeGrads g;
  g.enc_w1 = Eigen::MatrixXd::Zero(m.enc_w1.rows(), m.enc_w1.cols());
  g.enc_b1 = Eigen::VectorXd::Zero(m.enc_b1.size());
  g.enc_wmu = Eigen::MatrixXd::Zero(m.enc_wmu.rows(), m.enc_wmu.cols());
  g.enc_bmu = Eigen::VectorXd::Zero(m.enc_bmu.size());
  g.enc_wlv = Eigen::MatrixXd::Zero(m.enc_wlv.rows(), m.enc_wlv.cols());
  g.enc_blv = Eigen::VectorXd::Zero(m.enc_blv.size());
  g.dec_w1 = Eigen::MatrixXd::Zero(m.dec_w1.rows(), m.dec_w1.cols());
  g.dec_b1 = Eigen::VectorXd::Zero(m.dec_b1.size());
  g.dec_w2 = Eigen::MatrixXd::Zero(m.dec_w2.rows(), m.dec_w2.cols());
  g.dec_b2 = Eigen::VectorXd::Zero(m.dec_b2.size());
  return g;
}

// Backprop one sample; accumulates parameter grads and returns dL/dx_tilde
// counting both the encoder-input and reconstruction-target paths.
Eigen::VectorXd backward_sample(const CvaeModel& m, const SampleCache& c,
                                const Eigen::VectorXd& eps, double kl_weight,
                                CvaeGrads& acc) {
  Eigen::VectorXd dxrec = c.xrec - c.v.head(m.input_dim);
  Eigen::VectorXd dxe = -dxrec;  // target path: d recon / d x = x - xrec

  acc.dec_w2 += dxrec * c.h2.transpose();
  acc.dec_b2 += dxrec;
  Eigen::VectorXd dh2 = m.dec_w2.transpose() * dxrec;
  Eigen::VectorXd dpre2 = dh2.cwiseProduct((1.0 - c.h2.array().square()).matrix());
  acc.dec_w1 += dpre2 * c.u.transpose();
  acc.dec_b1 += dpre2;
  Eigen::VectorXd dz = (m.dec_w1.transpose() * dpre2).head(m.latent_dim);

  Eigen::VectorXd dmu = dz + kl_weight * c.mu;
  Eigen::VectorXd sig = (c.lv / 2.0).array().exp();
  Eigen::VectorXd dlv = dz.cwiseProduct(eps).cwiseProduct(sig) * 0.5 +
                        kl_weight * 0.5 * (c.lv.array().exp() - 1.0).matrix();
  // clamp: zero gradient outside the active range
  Eigen::VectorXd dlv_raw = dlv;
  for (int k = 0; k < m.latent_dim; ++k)
    if (std::abs(c.lv_raw(k)) >= kLogvarClamp) dlv_raw(k) = 0.0;

  acc.enc_wmu += dmu * c.h1.transpose();
  acc.enc_bmu += dmu;
  acc.enc_wlv += dlv_raw * c.h1.transpose();
  acc.enc_blv += dlv_raw;
  Eigen::VectorXd dh1 = m.enc_wmu.transpose() * dmu + m.enc_wlv.transpose() * dlv_raw;
  Eigen::VectorXd dpre1 = dh1.cwiseProduct((1.0 - c.h1.array().square()).matrix());
  acc.enc_w1 += dpre1 * c.v.transpose();
  acc.enc_b1 += dpre1;
  dxe += (m.enc_w1.transpose() * dpre1).head(m.input_dim);
  return dxe;
}

}  // namespace

CvaeModel CvaeModel::init(int input_dim, int hidden_dim, int latent_dim, RngState& rng) {
  CvaeModel m = zeros(input_dim, hidden_dim, latent_dim);
  m.enc_w1 = glorot(hidden_dim, input_dim + 1, rng);
  m.enc_wmu = glorot(latent_dim, hidden_dim, rng);
  m.enc_wlv = glorot(latent_dim, hidden_dim, rng);
  m.dec_w1 = glorot(hidden_dim, latent_dim + 1, rng);
  m.dec_w2 = glorot(input_dim, hidden_dim, rng);
  return m;
}

CvaeModel CvaeModel::zeros(int input_dim, int hidden_dim, int latent_dim) {
  CvaeModel m;
  m.input_dim = input_dim;
  m.hidden_dim = hidden_dim;
  m.latent_dim = latent_dim;
  m.enc_w1 = Eigen::MatrixXd::Zero(hidden_dim, input_dim + 1);
  m.enc_b1 = Eigen::VectorXd::Zero(hidden_dim);
  m.enc_wmu = Eigen::MatrixXd::Zero(latent_dim, hidden_dim);
  m.enc_bmu = Eigen::VectorXd::Zero(latent_dim);
  m.enc_wlv = Eigen::MatrixXd::Zero(latent_dim, hidden_dim);
  m.enc_blv = Eigen::VectorXd::Zero(latent_dim);
  m.dec_w1 = Eigen::MatrixXd::Zero(hidden_dim, latent_dim + 1);
  m.dec_b1 = Eigen::VectorXd::Zero(hidden_dim);
  m.dec_w2 = Eigen::MatrixXd::Zero(input_dim, hidden_dim);
  m.dec_b2 = Eigen::VectorXd::Zero(input_dim);
  return m;
}

LatentCode encode(const CvaeModel& m, const Eigen::VectorXd& x, double t, RngState& rng) {
  Eigen::VectorXd eps(m.latent_dim);
  for (int k = 0; k < m.latent_dim; ++k) eps(k) = rng.normal();
  SampleCache c = run_sample(m, x, t, eps);
  return {c.mu, c.lv, c.z};
}

Eigen::VectorXd decode(const CvaeModel& m, const Eigen::VectorXd& z, double t) {
  if (z.size() != m.latent_dim)
    throw std::invalid_argument("decode: z length " + std::to_string(z.size()) +
                                " != latent_dim " + std::to_string(m.latent_dim));
  Eigen::VectorXd u(m.latent_dim + 1);
  u << z, t;
  Eigen::VectorXd h = (m.dec_w1 * u + m.dec_b1).array().tanh();
  return m.dec_w2 * h + m.dec_b2;
}

double gaussian_kl(const Eigen::VectorXd& mu, const Eigen::VectorXd& logvar) {
  return 0.5 * (logvar.array().exp() + mu.array().square() - 1.0 - logvar.array()).sum();
}

ElboTerms elbo(const CvaeModel& m, const Eigen::VectorXd& x, double t,
               const Eigen::VectorXd& x_target, const Eigen::VectorXd& eps,
               double kl_weight) {
  SampleCache c = run_sample(m, x, t, eps);
  ElboTerms out;
  out.recon = 0.5 * (x_target - c.xrec).squaredNorm();
  out.kl = gaussian_kl(c.mu, c.lv);
  out.loss = out.recon + kl_weight * out.kl;
  return out;
}

double pipeline_loss(const Eigen::MatrixXd& x, const Eigen::VectorXi& t,
                     const ConfounderGraph& g, const GatLayer& layer, const CvaeModel& m,
                     const Eigen::MatrixXd& eps, double kl_weight) {
  Eigen::MatrixXd h = gat_forward(g, layer);
  Eigen::MatrixXd xe = embed_samples(x, h);
  double total = 0.0;
  for (int i = 0; i < x.rows(); ++i) {
    Eigen::VectorXd xi = xe.row(i).transpose();
    total += elbo(m, xi, t(i), xi, eps.row(i).transpose(), kl_weight).loss;
  }
  return total / x.rows();
}

std::pair<double, PipelineGrads> pipeline_loss_grad(const Eigen::MatrixXd& x,
                                                    const Eigen::VectorXi& t,
                                                    const ConfounderGraph& g,
                                                    const GatLayer& layer,
                                                    const CvaeModel& m,
                                                    const Eigen::MatrixXd& eps,
                                                    double kl_weight) {
  const int n = static_cast<int>(x.rows());
  Eigen::MatrixXd h = gat_forward(g, layer);
  Eigen::MatrixXd xe = embed_samples(x, h);

  CvaeGrads acc = zero_grads(m);
  Eigen::MatrixXd dxe = Eigen::MatrixXd::Zero(n, m.input_dim);
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd xi = xe.row(i).transpose();
    Eigen::VectorXd ei = eps.row(i).transpose();
    SampleCache c = run_sample(m, xi, t(i), ei);
    total += 0.5 * (xi - c.xrec).squaredNorm() + kl_weight * gaussian_kl(c.mu, c.lv);
    dxe.row(i) = backward_sample(m, c, ei, kl_weight, acc).transpose();
  }

  double inv_n = 1.0 / n;
  acc.enc_w1 *= inv_n; acc.enc_b1 *= inv_n;
  acc.enc_wmu *= inv_n; acc.enc_bmu *= inv_n;
  acc.enc_wlv *= inv_n; acc.enc_blv *= inv_n;
  acc.dec_w1 *= inv_n; acc.dec_b1 *= inv_n;
  acc.dec_w2 *= inv_n; acc.dec_b2 *= inv_n;

  // x_tilde = X H' / p, so dH' = X^T dX_tilde / p
  Eigen::MatrixXd dh = x.transpose() * dxe * (inv_n / x.cols());
  PipelineGrads grads;
  grads.gat = gat_grad(g, layer, dh);
  grads.cvae = std::move(acc);
  return {total * inv_n, grads};
}

TrainResult train(const Dataset& ds, const ConfounderGraph& g, GatLayer layer,
                  CvaeModel model, const TrainConfig& cfg) {
  if (ds.n() < 2) throw std::invalid_argument("train: need n >= 2");
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.learning_rate <= 0.0) throw std::invalid_argument("train: learning_rate must be > 0");

  const int n = ds.n();
  Eigen::MatrixXd x = ds.covariates();
  Eigen::VectorXi t = ds.treatments();
  RngState rng = RngState(cfg.seed).split("cvae-train");

  TrainResult res;
  res.loss_trace.reserve(cfg.epochs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Eigen::MatrixXd eps(n, model.latent_dim);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < model.latent_dim; ++k) eps(i, k) = rng.normal();

    auto [loss, grads] = pipeline_loss_grad(x, t, g, layer, model, eps, cfg.kl_weight);
    if (!std::isfinite(loss))
      throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch));
    res.loss_trace.push_back(loss);

    double lr = cfg.learning_rate;
    layer.w -= lr * grads.gat.dw;
    layer.a -= lr * grads.gat.da;
    model.enc_w1 -= lr * grads.cvae.enc_w1;
    model.enc_b1 -= lr * grads.cvae.enc_b1;
    model.enc_wmu -= lr * grads.cvae.enc_wmu;
    model.enc_bmu -= lr * grads.cvae.enc_bmu;
    model.enc_wlv -= lr * grads.cvae.enc_wlv;
    model.enc_blv -= lr * grads.cvae.enc_blv;
    model.dec_w1 -= lr * grads.cvae.dec_w1;
    model.dec_b1 -= lr * grads.cvae.dec_b1;
    model.dec_w2 -= lr * grads.cvae.dec_w2;
    model.dec_b2 -= lr * grads.cvae.dec_b2;
  }

  // Noise-free codes for clustering and estimation: z = mu, encoded at a
  // fixed reference treatment of 0 for every unit. Encoding at each unit's
  // own treatment would leak treatment into the codes, splitting the latent
  // space by arm; downstream per-arm outcome models would then extrapolate
  // across disjoint regions and propensity fits would separate.
  Eigen::MatrixXd h = gat_forward(g, layer);
  Eigen::MatrixXd xe = embed_samples(x, h);
  res.codes.resize(n, model.latent_dim);
  Eigen::VectorXd zero_eps = Eigen::VectorXd::Zero(model.latent_dim);
  for (int i = 0; i < n; ++i) {
    SampleCache c = run_sample(model, xe.row(i).transpose(), 0.0, zero_eps);
    res.codes.row(i) = c.mu.transpose();
  }
  res.model = std::move(model);
  res.layer = std::move(layer);
  return res;
}

TrainResult train(const Dataset& ds, const ConfounderGraph& g, const TrainConfig& cfg,
                  int embed_dim, int hidden_dim, int latent_dim) {
  RngState rng = RngState(cfg.seed).split("cvae-init");
  GatLayer layer = GatLayer::init(embed_dim, static_cast<int>(g.node_features.cols()), rng);
  CvaeModel model = CvaeModel::init(embed_dim, hidden_dim, latent_dim, rng);
  return train(ds, g, std::move(layer), std::move(model), cfg);
}

namespace {

// Flat parameter view over GAT + CVAE for finite differencing.
std::vector<double*> param_view(GatLayer& l, CvaeModel& m) {
  std::vector<double*> v;
  auto add_m = [&](Eigen::MatrixXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) v.push_back(a.data() + i);
  };
  auto add_v = [&](Eigen::VectorXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) v.push_back(a.data() + i);
  };
  add_m(l.w); add_v(l.a);
  add_m(m.enc_w1); add_v(m.enc_b1);
  add_m(m.enc_wmu); add_v(m.enc_bmu);
  add_m(m.enc_wlv); add_v(m.enc_blv);
  add_m(m.dec_w1); add_v(m.dec_b1);
  add_m(m.dec_w2); add_v(m.dec_b2);
  return v;
}

std::vector<double> flatten_grads(const PipelineGrads& g) {
  std::vector<double> v;
  auto add_m = [&](const Eigen::MatrixXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) v.push_back(a.data()[i]);
  };
  auto add_v = [&](const Eigen::VectorXd& a) {
    for (Eigen::Index i = 0; i < a.size(); ++i) v.push_back(a.data()[i]);
  };
  add_m(g.gat.dw); add_v(g.gat.da);
  add_m(g.cvae.enc_w1); add_v(g.cvae.enc_b1);
  add_m(g.cvae.enc_wmu); add_v(g.cvae.enc_bmu);
  add_m(g.cvae.enc_wlv); add_v(g.cvae.enc_blv);
  add_m(g.cvae.dec_w1); add_v(g.cvae.dec_b1);
  add_m(g.cvae.dec_w2); add_v(g.cvae.dec_b2);
  return v;
}

}  // namespace

double grad_check(const Eigen::MatrixXd& x, const Eigen::VectorXi& t,
                  const ConfounderGraph& g, const GatLayer& layer, const CvaeModel& m,
                  const Eigen::MatrixXd& eps, double kl_weight, double step) {
  GatLayer lc = layer;
  CvaeModel mc = m;
  auto params = param_view(lc, mc);
  auto [loss, grads] = pipeline_loss_grad(x, t, g, lc, mc, eps, kl_weight);
  (void)loss;
  std::vector<double> analytic = flatten_grads(grads);

  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    double orig = *params[i];
    *params[i] = orig + step;
    double up = pipeline_loss(x, t, g, lc, mc, eps, kl_weight);
    *params[i] = orig - step;
    double dn = pipeline_loss(x, t, g, lc, mc, eps, kl_weight);
    *params[i] = orig;
    double fd = (up - dn) / (2.0 * step);
    // Floor at 1e-6 so central-difference rounding noise on exact-zero
    // gradients does not register as a relative error.
    double denom = std::max({std::abs(fd), std::abs(analytic[i]), 1e-6});
    worst = std::max(worst, std::abs(fd - analytic[i]) / denom);
  }
  return worst;
}

}  // namespace hte
