#include "bnr/model.hpp"

#include <cmath>
#include <numbers>

#include "bnr/error.hpp"

namespace bnr {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

double sign_of(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

void require_finite(double value, const std::string& block) {
  if (!std::isfinite(value)) throw NumericalError("non-finite log density in block '" + block + "'", block);
}

}  // namespace

Standardized standardize(const BoldDataset& data) {
  const int S = data.subjects(), V = data.voxels(), T = data.scans();
  if (T < 2) throw DataError("standardize: need at least two scans");
  Standardized out{data, std::vector<double>(static_cast<std::size_t>(S) * V),
                   std::vector<double>(static_cast<std::size_t>(S) * V)};
  for (int s = 0; s < S; ++s) {
    for (int v = 0; v < V; ++v) {
      auto x = out.data.series(s, v);
      double mean = 0.0;
      for (double y : x) mean += y;
      mean /= T;
      double ss = 0.0;
      for (double y : x) ss += (y - mean) * (y - mean);
      const double sd = std::sqrt(ss / (T - 1));
      if (!(sd > 0.0) || !std::isfinite(sd)) {
        throw DataError("standardize: constant series at subject " + std::to_string(s) + ", voxel " +
                        std::to_string(v));
      }
      for (double& y : x) y = (y - mean) / sd;
      out.mean[static_cast<std::size_t>(s) * V + v] = mean;
      out.sd[static_cast<std::size_t>(s) * V + v] = sd;
    }
  }
  return out;
}

RoiData RoiData::from_dataset(const BoldDataset& data) {
  RoiData r;
  r.subjects = data.subjects();
  r.voxels = data.voxels();
  r.scans = data.scans();
  r.times = data.scan_times();
  r.sum_y = Eigen::MatrixXd::Zero(r.voxels, r.scans);
  r.sum_sq = Eigen::VectorXd::Zero(r.voxels);
  for (int s = 0; s < r.subjects; ++s) {
    for (int v = 0; v < r.voxels; ++v) {
      auto x = data.series(s, v);
      for (int t = 0; t < r.scans; ++t) {
        r.sum_y(v, t) += x[t];
        r.sum_sq[v] += x[t] * x[t];
      }
    }
  }
  return r;
}

double bnr_loglik(const RoiData& data, const Eigen::VectorXd& beta, const Eigen::VectorXd& f, double sigma) {
  const double ff = f.squaredNorm();
  const Eigen::VectorXd c = data.sum_y * f;
  double q = 0.0;
  for (int v = 0; v < data.voxels; ++v) {
    q += data.sum_sq[v] - 2.0 * beta[v] * c[v] + data.subjects * beta[v] * beta[v] * ff;
  }
  const double n = data.observations();
  return -n * kHalfLog2Pi - n * std::log(sigma) - 0.5 * q / (sigma * sigma);
}

double glm_loglik(const RoiData& data, const Eigen::MatrixXd& predictors, const Eigen::MatrixXd& coefs,
                  double sigma) {
  const Eigen::MatrixXd mean = coefs * predictors.transpose();  // V x T
  double q = 0.0;
  for (int v = 0; v < data.voxels; ++v) {
    q += data.sum_sq[v] - 2.0 * data.sum_y.row(v).dot(mean.row(v)) + data.subjects * mean.row(v).squaredNorm();
  }
  const double n = data.observations();
  return -n * kHalfLog2Pi - n * std::log(sigma) - 0.5 * q / (sigma * sigma);
}

void BnrConfig::validate() const {
  prior.validate();
  if (neighbors < 1) throw ConfigError("kernel.neighbors must be at least 1");
  if (!(rho_median > 0.0 && rho_log_sd > 0.0)) throw ConfigError("kernel lengthscale prior must be positive");
  if (!(sigma_df > 0.0 && sigma_scale > 0.0)) throw ConfigError("noise prior parameters must be positive");
}

std::vector<std::string> BnrLayout::names() const {
  std::vector<std::string> out;
  out.reserve(size());
  for (int t = 0; t < scans; ++t) out.push_back("z[" + std::to_string(t) + "]");
  out.emplace_back("log_rho");
  out.emplace_back("log_tau");
  for (int v = 0; v < voxels; ++v) out.push_back("log_lambda[" + std::to_string(v) + "]");
  for (int v = 0; v < voxels; ++v) out.push_back("eta[" + std::to_string(v) + "]");
  for (int v = 0; v < voxels; ++v) out.push_back("alpha[" + std::to_string(v) + "]");
  out.emplace_back("log_sigma");
  return out;
}

std::string BnrLayout::block_of(int i) const {
  if (i < log_rho()) return "z";
  if (i == log_rho()) return "log_rho";
  if (i == log_tau()) return "log_tau";
  if (i < eta()) return "log_lambda";
  if (i < alpha()) return "eta";
  if (i < log_sigma()) return "alpha";
  return "log_sigma";
}

BnrParams decode(const BnrLayout& l, const Eigen::VectorXd& x) {
  if (x.size() != l.size()) throw DataError("bnr parameter vector has the wrong length");
  BnrParams p;
  p.z = x.segment(l.z(), l.scans);
  p.log_rho = x[l.log_rho()];
  p.log_tau = x[l.log_tau()];
  p.log_lambda = x.segment(l.log_lambda(), l.voxels);
  p.eta = x.segment(l.eta(), l.voxels);
  p.alpha = x.segment(l.alpha(), l.voxels);
  p.log_sigma = x[l.log_sigma()];
  return p;
}

Eigen::VectorXd encode(const BnrLayout& l, const BnrParams& p) {
  Eigen::VectorXd x(l.size());
  x.segment(l.z(), l.scans) = p.z;
  x[l.log_rho()] = p.log_rho;
  x[l.log_tau()] = p.log_tau;
  x.segment(l.log_lambda(), l.voxels) = p.log_lambda;
  x.segment(l.eta(), l.voxels) = p.eta;
  x.segment(l.alpha(), l.voxels) = p.alpha;
  x[l.log_sigma()] = p.log_sigma;
  return x;
}

BnrModel::BnrModel(RoiData data, RoiGraph graph, BnrConfig cfg)
    : data_(std::move(data)), graph_(std::move(graph)), cfg_(cfg) {
  cfg_.validate();
  if (graph_.size() != data_.voxels) throw DataError("bnr model: ROI graph and data disagree on voxel count");
  nngp_ = build_graph(data_.times, cfg_.neighbors);
  layout_ = BnrLayout{data_.scans, data_.voxels};
  tau0_ = derive_tau0(cfg_.prior.tau_star, data_.subjects, data_.voxels, data_.scans);
}

double BnrModel::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, BnrTerms* terms) const {
  const BnrLayout& l = layout_;
  if (x.size() != l.size()) throw DataError("bnr parameter vector has the wrong length");
  const int V = l.voxels, T = l.scans;
  const double S = data_.subjects;
  if (grad) grad->setZero(l.size());

  const double rho = std::exp(x[l.log_rho()]);
  const double tau = std::exp(x[l.log_tau()]);
  const double sigma = std::exp(x[l.log_sigma()]);
  if (!(rho > 0.0 && std::isfinite(rho))) throw NumericalError("lengthscale out of range", "log_rho", l.log_rho());
  if (!(tau > 0.0 && std::isfinite(tau))) throw NumericalError("global scale out of range", "log_tau", l.log_tau());
  if (!(sigma > 0.0 && std::isfinite(sigma))) {
    throw NumericalError("noise scale out of range", "log_sigma", l.log_sigma());
  }

  const Eigen::VectorXd z = x.segment(l.z(), T);
  const WhiteningFactors wf = whiten_factors(nngp_, KernelConfig{rho}, grad != nullptr);
  const Eigen::VectorXd f = whiten_to_f(nngp_, wf, z);

  Eigen::VectorXd lambda(V), beta(V), phi(V);
  for (int v = 0; v < V; ++v) {
    lambda[v] = std::exp(x[l.log_lambda() + v]);
    beta[v] = tau * lambda[v] * std::abs(x[l.eta() + v]);
    phi[v] = alpha_to_phi(x[l.alpha() + v]);
  }

  BnrTerms t;

  // Likelihood via sufficient statistics.
  const double ff = f.squaredNorm();
  const Eigen::VectorXd c = data_.sum_y * f;
  double q = 0.0;
  for (int v = 0; v < V; ++v) q += data_.sum_sq[v] - 2.0 * beta[v] * c[v] + S * beta[v] * beta[v] * ff;
  const double nobs = data_.observations();
  const double inv_s2 = 1.0 / (sigma * sigma);
  t.likelihood = -nobs * kHalfLog2Pi - nobs * std::log(sigma) - 0.5 * q * inv_s2;
  require_finite(t.likelihood, "likelihood");

  t.z_prior = -0.5 * z.squaredNorm() - T * kHalfLog2Pi;
  t.rho_prior = normal_logpdf(x[l.log_rho()], std::log(cfg_.rho_median), cfg_.rho_log_sd);
  t.tau_prior = half_t_logpdf(tau, cfg_.prior.tau_df, tau0_) + x[l.log_tau()];
  const double nu = cfg_.prior.nu;
  t.lambda_prior = V * half_t_log_normalizer(nu);
  t.eta_prior = -V * kHalfLog2Pi;
  for (int v = 0; v < V; ++v) {
    const double u = lambda[v] / phi[v];
    t.lambda_prior += -std::log(phi[v]) - 0.5 * (nu + 1.0) * std::log1p(u * u / nu) + x[l.log_lambda() + v];
    t.eta_prior -= 0.5 * x[l.eta() + v] * x[l.eta() + v];
  }
  Eigen::VectorXd alpha = x.segment(l.alpha(), V);
  Eigen::VectorXd g_alpha = Eigen::VectorXd::Zero(V);
  t.alpha_prior = igmrf_logpdf(graph_, alpha, grad ? &g_alpha : nullptr);
  t.sigma_prior = half_t_logpdf(sigma, cfg_.sigma_df, cfg_.sigma_scale) + x[l.log_sigma()];

  require_finite(t.z_prior, "z");
  require_finite(t.rho_prior, "log_rho");
  require_finite(t.tau_prior, "log_tau");
  require_finite(t.lambda_prior, "log_lambda");
  require_finite(t.eta_prior, "eta");
  require_finite(t.alpha_prior, "alpha");
  require_finite(t.sigma_prior, "log_sigma");

  if (grad) {
    Eigen::VectorXd& g = *grad;
    // Likelihood.
    Eigen::VectorXd g_f = (data_.sum_y.transpose() * beta - S * beta.squaredNorm() * f) * inv_s2;
    double g_log_tau = 0.0;
    for (int v = 0; v < V; ++v) {
      const double g_beta = (c[v] - S * beta[v] * ff) * inv_s2;
      g_log_tau += g_beta * beta[v];
      g[l.log_lambda() + v] += g_beta * beta[v];
      g[l.eta() + v] += g_beta * tau * lambda[v] * sign_of(x[l.eta() + v]);
    }
    g[l.log_sigma()] += -nobs + q * inv_s2;

    Eigen::VectorXd g_z = Eigen::VectorXd::Zero(T);
    double g_log_rho = 0.0;
    whiten_backprop(nngp_, wf, z, f, g_f, g_z, &g_log_rho);
    g.segment(l.z(), T) += g_z - z;
    g[l.log_rho()] += g_log_rho - (x[l.log_rho()] - std::log(cfg_.rho_median)) / (cfg_.rho_log_sd * cfg_.rho_log_sd);

    const auto gt = half_t_logpdf_grad(tau, cfg_.prior.tau_df, tau0_);
    g[l.log_tau()] += g_log_tau + gt.dx * tau + 1.0;

    for (int v = 0; v < V; ++v) {
      const auto gl = half_t_logpdf_grad(lambda[v], cfg_.prior.nu, phi[v]);
      g[l.log_lambda() + v] += gl.dx * lambda[v] + 1.0;
      g[l.alpha() + v] += gl.dscale * phi[v] * (1.0 - phi[v]) + g_alpha[v];
      g[l.eta() + v] -= x[l.eta() + v];
    }
    const auto gs = half_t_logpdf_grad(sigma, cfg_.sigma_df, cfg_.sigma_scale);
    g[l.log_sigma()] += gs.dx * sigma + 1.0;

    for (int i = 0; i < l.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericalError("non-finite gradient at coordinate " + std::to_string(i), l.block_of(i), i);
      }
    }
  }
  if (terms) *terms = t;
  return t.total();
}

double BnrModel::log_density(const Eigen::VectorXd& x) const { return evaluate(x, nullptr, nullptr); }

double BnrModel::log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  return evaluate(x, &grad, nullptr);
}

BnrTerms BnrModel::terms(const Eigen::VectorXd& x) const {
  BnrTerms t;
  evaluate(x, nullptr, &t);
  return t;
}

BnrDerived BnrModel::derive(const Eigen::VectorXd& x) const {
  const BnrParams p = decode(layout_, x);
  BnrDerived d;
  d.rho = std::exp(p.log_rho);
  d.tau = std::exp(p.log_tau);
  d.sigma = std::exp(p.log_sigma);
  d.f = whiten_to_f(nngp_, KernelConfig{d.rho}, p.z);
  const double ff = d.f.squaredNorm();
  d.beta.resize(layout_.voxels);
  d.kappa.resize(layout_.voxels);
  for (int v = 0; v < layout_.voxels; ++v) {
    const double lambda = std::exp(p.log_lambda[v]);
    d.beta[v] = d.tau * lambda * std::abs(p.eta[v]);
    d.kappa[v] = shrinkage_factor(data_.subjects, d.sigma, d.tau, lambda, ff);
  }
  d.log_posterior = log_density(x);
  return d;
}

Eigen::VectorXd BnrModel::initial_point() const {
  const int V = layout_.voxels, T = layout_.scans;
  const double S = data_.subjects;
  const Eigen::MatrixXd mean = data_.sum_y / S;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(mean, Eigen::ComputeThinU | Eigen::ComputeThinV);
  Eigen::VectorXd load = svd.matrixU().col(0) * svd.singularValues()[0];
  Eigen::VectorXd f0 = svd.matrixV().col(0);
  // beta >= 0, so orient f towards the side carrying more loading energy.
  if (load.cwiseMin(0.0).squaredNorm() > load.cwiseMax(0.0).squaredNorm()) f0 = -f0;
  f0 *= std::sqrt(static_cast<double>(T));

  const double rho = cfg_.rho_median * std::exp(-cfg_.rho_log_sd);
  const KernelConfig kernel{rho};
  Eigen::MatrixXd k(T, T);
  for (int a = 0; a < T; ++a)
    for (int b = 0; b < T; ++b) k(a, b) = sq_exp_kernel(kernel, data_.times[a], data_.times[b]);
  Eigen::MatrixXd kn = k;
  kn.diagonal().array() += 0.1;
  const Eigen::VectorXd f = k * kn.llt().solve(f0);

  BnrParams p;
  p.log_rho = std::log(rho);
  p.z = unwhiten(nngp_, whiten_factors(nngp_, kernel), f);
  const double ff = f.squaredNorm();
  const Eigen::VectorXd c = data_.sum_y * f;
  Eigen::VectorXd beta = (c / (S * ff)).cwiseMax(1e-3);

  // Even split of beta_v / tau0 = (tau / tau0) * lambda_v * eta_v, with tau / tau0 = a and
  // lambda_v = eta_v; a minimizes a^2 / 2 + 2.5 sum_v P_v / a.
  const double ptotal = (beta / tau0_).sum();
  const double a = std::max(1.0, std::cbrt(2.5 * ptotal));
  p.log_tau = std::log(a * tau0_);
  p.log_lambda.resize(V);
  p.eta.resize(V);
  for (int v = 0; v < V; ++v) {
    const double r = std::sqrt(beta[v] / (a * tau0_));
    p.log_lambda[v] = std::log(r);
    p.eta[v] = r;
  }
  p.alpha = Eigen::VectorXd::Zero(V);
  double q = 0.0;
  for (int v = 0; v < V; ++v) q += data_.sum_sq[v] - 2.0 * beta[v] * c[v] + S * beta[v] * beta[v] * ff;
  p.log_sigma = 0.5 * std::log(std::max(q / data_.observations(), 1e-6));
  return encode(layout_, p);
}

void GlmConfig::validate() const {
  if (!(local_df >= 1.0)) throw ConfigError("glm local degrees of freedom must be at least 1");
  if (!(global_scale > 0.0)) throw ConfigError("glm global scale must be positive");
  if (!(sigma_df > 0.0 && sigma_scale > 0.0)) throw ConfigError("noise prior parameters must be positive");
}

std::vector<std::string> GlmLayout::names() const {
  std::vector<std::string> out;
  for (int v = 0; v < voxels; ++v)
    for (int k = 0; k < predictors; ++k) out.push_back("eta[" + std::to_string(v) + "," + std::to_string(k) + "]");
  for (int v = 0; v < voxels; ++v)
    for (int k = 0; k < predictors; ++k)
      out.push_back("log_lambda[" + std::to_string(v) + "," + std::to_string(k) + "]");
  out.emplace_back("log_tau");
  out.emplace_back("log_sigma");
  return out;
}

GlmModel::GlmModel(RoiData data, Eigen::MatrixXd predictors, GlmConfig cfg)
    : data_(std::move(data)), predictors_(std::move(predictors)), cfg_(cfg) {
  cfg_.validate();
  if (predictors_.cols() < 1) throw ConfigError("glm: need at least one predictor");
  if (predictors_.rows() != data_.scans) throw DataError("glm: predictor length does not match scan count");
  layout_ = GlmLayout{data_.voxels, static_cast<int>(predictors_.cols())};
}

double GlmModel::evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, double* lik) const {
  const GlmLayout& l = layout_;
  if (x.size() != l.size()) throw DataError("glm parameter vector has the wrong length");
  const int V = l.voxels, K = l.predictors;
  const double S = data_.subjects;
  if (grad) grad->setZero(l.size());
  const double tau = std::exp(x[l.log_tau()]);
  const double sigma = std::exp(x[l.log_sigma()]);
  if (!(tau > 0.0 && std::isfinite(tau))) throw NumericalError("global scale out of range", "log_tau", l.log_tau());
  if (!(sigma > 0.0 && std::isfinite(sigma))) {
    throw NumericalError("noise scale out of range", "log_sigma", l.log_sigma());
  }

  Eigen::MatrixXd lambda(V, K), coefs(V, K);
  for (int v = 0; v < V; ++v) {
    for (int k = 0; k < K; ++k) {
      lambda(v, k) = std::exp(x[l.log_lambda() + v * K + k]);
      coefs(v, k) = tau * lambda(v, k) * x[l.eta() + v * K + k];
    }
  }
  const Eigen::MatrixXd mean = coefs * predictors_.transpose();
  double q = 0.0;
  for (int v = 0; v < V; ++v) {
    q += data_.sum_sq[v] - 2.0 * data_.sum_y.row(v).dot(mean.row(v)) + S * mean.row(v).squaredNorm();
  }
  const double nobs = data_.observations();
  const double inv_s2 = 1.0 / (sigma * sigma);
  const double loglik = -nobs * kHalfLog2Pi - nobs * std::log(sigma) - 0.5 * q * inv_s2;
  require_finite(loglik, "likelihood");

  double lp = loglik;
  for (int i = 0; i < V * K; ++i) {
    lp += normal_logpdf(x[l.eta() + i], 0.0, 1.0);
    lp += half_t_logpdf(lambda(i / K, i % K), cfg_.local_df, 1.0) +
          x[l.log_lambda() + i];
  }
  lp += half_t_logpdf(tau, 1.0, cfg_.global_scale) + x[l.log_tau()];
  lp += half_t_logpdf(sigma, cfg_.sigma_df, cfg_.sigma_scale) + x[l.log_sigma()];
  require_finite(lp, "prior");

  if (grad) {
    Eigen::VectorXd& g = *grad;
    const Eigen::MatrixXd g_mean = (data_.sum_y - S * mean) * inv_s2;  // V x T
    const Eigen::MatrixXd g_coef = g_mean * predictors_;                 // V x K
    double g_log_tau = 0.0;
    for (int v = 0; v < V; ++v) {
      for (int k = 0; k < K; ++k) {
        const int i = v * K + k;
        const double eta = x[l.eta() + i];
        g[l.eta() + i] += g_coef(v, k) * tau * lambda(v, k) - eta;
        const auto gl = half_t_logpdf_grad(lambda(v, k), cfg_.local_df, 1.0);
        g[l.log_lambda() + i] += g_coef(v, k) * coefs(v, k) + gl.dx * lambda(v, k) + 1.0;
        g_log_tau += g_coef(v, k) * coefs(v, k);
      }
    }
    const auto gt = half_t_logpdf_grad(tau, 1.0, cfg_.global_scale);
    g[l.log_tau()] += g_log_tau + gt.dx * tau + 1.0;
    const auto gs = half_t_logpdf_grad(sigma, cfg_.sigma_df, cfg_.sigma_scale);
    g[l.log_sigma()] += -nobs + q * inv_s2 + gs.dx * sigma + 1.0;
    for (int i = 0; i < l.size(); ++i) {
      if (!std::isfinite(g[i])) throw NumericalError("non-finite gradient at coordinate " + std::to_string(i), "glm", i);
    }
  }
  if (lik) *lik = loglik;
  return lp;
}

double GlmModel::log_density(const Eigen::VectorXd& x) const { return evaluate(x, nullptr, nullptr); }

double GlmModel::log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const {
  return evaluate(x, &grad, nullptr);
}

double GlmModel::likelihood(const Eigen::VectorXd& x) const {
  double lik = 0.0;
  evaluate(x, nullptr, &lik);
  return lik;
}

GlmDerived GlmModel::derive(const Eigen::VectorXd& x) const {
  const GlmLayout& l = layout_;
  const int V = l.voxels, K = l.predictors;
  GlmDerived d;
  d.tau = std::exp(x[l.log_tau()]);
  d.sigma = std::exp(x[l.log_sigma()]);
  d.beta.resize(V, K);
  d.kappa.resize(V, K);
  for (int v = 0; v < V; ++v) {
    for (int k = 0; k < K; ++k) {
      const double lambda = std::exp(x[l.log_lambda() + v * K + k]);
      d.beta(v, k) = d.tau * lambda * x[l.eta() + v * K + k];
      d.kappa(v, k) =
          shrinkage_factor(data_.subjects, d.sigma, d.tau, lambda, predictors_.col(k).squaredNorm());
    }
  }
  d.log_posterior = log_density(x);
  return d;
}

}  // namespace bnr
