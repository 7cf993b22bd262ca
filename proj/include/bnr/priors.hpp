#pragma once

#include <Eigen/Dense>

#include "bnr/activation.hpp"

namespace bnr {

/// Half-t horseshoe hyperparameters for one fit.
struct HthsConfig {
  double nu = 1000.0;
  double tau_star = 0.1;
  double tau_df = 1000.0;  // degrees of freedom of the global-scale prior

  void validate() const;
};

double derive_tau0(double tau_star, double subjects, double voxels, double scans);

double half_t_logpdf(double x, double nu, double scale);
/// log 2 + log Gamma((nu+1)/2) - log Gamma(nu/2) - log(nu pi)/2.
double half_t_log_normalizer(double nu);
double half_normal_logpdf(double x, double sd);
double half_cauchy_logpdf(double x, double scale);
double normal_logpdf(double x, double mean, double sd);

/// d/dx and d/dscale of half_t_logpdf at x > 0.
struct HalfTGrad {
  double dx;
  double dscale;
};
HalfTGrad half_t_logpdf_grad(double x, double nu, double scale);

/// log of the marginal density of beta > 0 under beta | lambda ~ N+(0, lambda^2),
/// lambda ~ t+_nu(0, phi), with tau = 1. Adaptive Gauss-Kronrod on log(lambda) over
/// [1e-8, 1e4]; throws NumericalError if the error estimate is not small.
double hths_marginal_logpdf(double beta, double phi, double nu);

/// Exponential integral E1(t), t > 0.
double exponential_integral_e1(double t);

/// The normalizing constant R (phi = 1) such that marginal(beta) >= R E1(beta^2 / 2).
double hths_bound_constant(double nu);
double hths_marginal_lower_bound(double beta, double nu);

/// kappa = 1 / (1 + S sigma^-2 tau^2 lambda^2 f'f)
double shrinkage_factor(double subjects, double sigma, double tau, double lambda, double f_sq_norm);
double shrinkage_factor(double subjects, double sigma, double tau, double lambda, const Eigen::VectorXd& f);

inline constexpr double kDefaultKappaThreshold = 0.5;

/// Rows are draws, columns voxels. A voxel is active when its mean kappa is below threshold.
ActivationMap classify_active(const Eigen::MatrixXd& kappa_draws, double threshold = kDefaultKappaThreshold);

}  // namespace bnr
