#include "bnr/priors.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <limits>
#include <numbers>

#include "bnr/error.hpp"

namespace bnr {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2 = std::numbers::ln2;
constexpr double kHalfLog2Pi = 0.91893853320467274178;

double student_t_norm(double nu) {
  return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
}

}  // namespace

std::size_t ActivationMap::active_count() const {
  std::size_t n = 0;
  for (bool a : active) n += a ? 1 : 0;
  return n;
}

void ActivationMap::attach_voxels(const std::vector<Voxel>& voxels) {
  if (voxels.size() != score.size()) throw DataError("activation map: voxel table size mismatch");
  voxel_ids.clear();
  coords.clear();
  rois.clear();
  for (const auto& v : voxels) {
    voxel_ids.push_back(v.id);
    coords.push_back(v.coord);
    rois.push_back(v.roi);
  }
}

void HthsConfig::validate() const {
  if (!(nu >= 1.0)) throw ConfigError("prior.nu must be at least 1");
  if (!(tau_star > 0.0)) throw ConfigError("prior.tau_star must be positive");
  if (!(tau_df >= 1.0)) throw ConfigError("prior.tau_df must be at least 1");
}

double derive_tau0(double tau_star, double subjects, double voxels, double scans) {
  return tau_star / std::sqrt(subjects * voxels * scans);
}

double half_t_logpdf(double x, double nu, double scale) {
  if (!(x > 0.0)) return kNegInf;
  const double u = x / scale;
  return kLog2 + student_t_norm(nu) - std::log(scale) - 0.5 * (nu + 1.0) * std::log1p(u * u / nu);
}

double half_t_log_normalizer(double nu) { return kLog2 + student_t_norm(nu); }

HalfTGrad half_t_logpdf_grad(double x, double nu, double scale) {
  const double u2 = (x / scale) * (x / scale);
  const double common = (nu + 1.0) * u2 / (nu + u2);  // -d/dlog(x) of the kernel term
  return {-common / x, (common - 1.0) / scale};
}

double half_normal_logpdf(double x, double sd) {
  if (x < 0.0) return kNegInf;
  const double u = x / sd;
  return kLog2 - kHalfLog2Pi - std::log(sd) - 0.5 * u * u;
}

double half_cauchy_logpdf(double x, double scale) { return half_t_logpdf(x, 1.0, scale); }

double normal_logpdf(double x, double mean, double sd) {
  const double u = (x - mean) / sd;
  return -kHalfLog2Pi - std::log(sd) - 0.5 * u * u;
}

double hths_marginal_logpdf(double beta, double phi, double nu) {
  if (!(beta > 0.0)) throw NumericalError("hths marginal: beta must be positive", "priors");
  if (!(phi > 0.0 && phi <= 1.0)) throw NumericalError("hths marginal: phi must lie in (0, 1]", "priors");
  if (!(nu >= 1.0)) throw NumericalError("hths marginal: nu must be at least 1", "priors");

  // Integrate over u = log(lambda); this is the zeta = 1/lambda^2 substitution up to a
  // linear map and removes the singular behaviour at small beta.
  const auto integrand = [&](double u) {
    const double lambda = std::exp(u);
    const double lp = half_normal_logpdf(beta, lambda) + half_t_logpdf(lambda, nu, phi) + u;
    return std::exp(lp);
  };
  const double lo = std::log(1e-8);
  const double hi = std::log(1e4);
  // The integrand switches on near lambda ~ beta and decays near lambda ~ phi; split there.
  double cuts[4] = {lo, std::clamp(std::log(beta), lo, hi), std::clamp(std::log(phi), lo, hi), hi};
  std::sort(cuts + 1, cuts + 3);
  double total = 0.0, total_err = 0.0;
  for (int i = 0; i < 3; ++i) {
    if (cuts[i + 1] <= cuts[i]) continue;
    double err = 0.0;
    total += boost::math::quadrature::gauss_kronrod<double, 31>::integrate(integrand, cuts[i], cuts[i + 1], 20,
                                                                            1e-12, &err);
    total_err += err;
  }
  if (!std::isfinite(total) || !(total > 0.0) || total_err > 1e-8 * total) {
    throw NumericalError("hths marginal: quadrature did not converge (beta=" + std::to_string(beta) +
                             ", phi=" + std::to_string(phi) + ", nu=" + std::to_string(nu) +
                             ", integral=" + std::to_string(total) + ", error=" + std::to_string(total_err) + ")",
                         "priors");
  }
  return std::log(total);
}

double exponential_integral_e1(double t) {
  if (!(t > 0.0)) return std::numeric_limits<double>::infinity();
  return -std::expint(-t);
}

double hths_bound_constant(double nu) {
  // Half-normal (factor 2) times half-t (factor 2) normalizers, times the 1/2 from
  // d lambda = -zeta^{-3/2} d zeta / 2.
  return 2.0 * std::exp(student_t_norm(nu)) / std::sqrt(2.0 * std::numbers::pi);
}

double hths_marginal_lower_bound(double beta, double nu) {
  return hths_bound_constant(nu) * exponential_integral_e1(0.5 * beta * beta);
}

double shrinkage_factor(double subjects, double sigma, double tau, double lambda, double f_sq_norm) {
  return 1.0 / (1.0 + subjects * tau * tau * lambda * lambda * f_sq_norm / (sigma * sigma));
}

double shrinkage_factor(double subjects, double sigma, double tau, double lambda, const Eigen::VectorXd& f) {
  return shrinkage_factor(subjects, sigma, tau, lambda, f.squaredNorm());
}

ActivationMap classify_active(const Eigen::MatrixXd& kappa_draws, double threshold) {
  if (kappa_draws.rows() == 0) throw DataError("classify_active: no draws");
  ActivationMap map;
  const Eigen::Index v = kappa_draws.cols();
  for (Eigen::Index j = 0; j < v; ++j) {
    const double mean = kappa_draws.col(j).mean();
    map.voxel_ids.push_back(static_cast<int>(j));
    map.coords.push_back({static_cast<int>(j), 0, 0});
    map.rois.emplace_back();
    map.score.push_back(mean);
    map.active.push_back(mean < threshold);
    map.sign.push_back(0);
  }
  return map;
}

}  // namespace bnr
