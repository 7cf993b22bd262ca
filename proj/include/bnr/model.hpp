#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bnr/dataset.hpp"
#include "bnr/nngp.hpp"
#include "bnr/priors.hpp"
#include "bnr/spatial.hpp"

namespace bnr {

/// Per-(subject, voxel) centering and scaling (sample sd, n - 1 denominator).
struct Standardized {
  BoldDataset data;
  std::vector<double> mean;  // index s * V + v
  std::vector<double> sd;
};

Standardized standardize(const BoldDataset& data);

/// Sufficient statistics of one ROI for Gaussian likelihoods whose mean is shared across subjects.
struct RoiData {
  int subjects = 0;
  int voxels = 0;
  int scans = 0;
  std::vector<double> times;
  Eigen::MatrixXd sum_y;   // V x T, sum over subjects
  Eigen::VectorXd sum_sq;  // V, sum over subjects and time of squared values

  static RoiData from_dataset(const BoldDataset& data);
  double observations() const { return static_cast<double>(subjects) * voxels * scans; }
};

/// sum_{s,v,t} log N(B | beta_v f_t, sigma^2)
double bnr_loglik(const RoiData& data, const Eigen::VectorXd& beta, const Eigen::VectorXd& f, double sigma);

/// sum_{s,v,t} log N(B | sum_k B_vk h_k(t), sigma^2); predictors is T x K, coefs V x K.
double glm_loglik(const RoiData& data, const Eigen::MatrixXd& predictors, const Eigen::MatrixXd& coefs,
                  double sigma);

struct BnrConfig {
  HthsConfig prior;
  int neighbors = kDefaultNeighbors;
  double rho_median = 10.0;  // seconds
  double rho_log_sd = 0.5;
  double sigma_df = 3.0;
  double sigma_scale = 1.0;

  void validate() const;
};

/// Unconstrained coordinate layout: z (T), log rho, log tau, log lambda (V), eta (V), alpha (V), log sigma.
struct BnrLayout {
  int scans = 0;
  int voxels = 0;

  int size() const { return scans + 3 + 3 * voxels; }
  int z() const { return 0; }
  int log_rho() const { return scans; }
  int log_tau() const { return scans + 1; }
  int log_lambda() const { return scans + 2; }
  int eta() const { return scans + 2 + voxels; }
  int alpha() const { return scans + 2 + 2 * voxels; }
  int log_sigma() const { return scans + 2 + 3 * voxels; }

  std::vector<std::string> names() const;
  /// Block name owning coordinate i.
  std::string block_of(int i) const;
};

struct BnrParams {
  Eigen::VectorXd z;
  double log_rho = 0.0;
  double log_tau = 0.0;
  Eigen::VectorXd log_lambda;
  Eigen::VectorXd eta;
  Eigen::VectorXd alpha;
  double log_sigma = 0.0;
};

BnrParams decode(const BnrLayout& layout, const Eigen::VectorXd& x);
Eigen::VectorXd encode(const BnrLayout& layout, const BnrParams& p);

/// Log-posterior decomposed into its blocks (change-of-variable terms included in each block).
struct BnrTerms {
  double likelihood = 0.0;
  double z_prior = 0.0;
  double rho_prior = 0.0;
  double tau_prior = 0.0;
  double lambda_prior = 0.0;
  double eta_prior = 0.0;
  double alpha_prior = 0.0;
  double sigma_prior = 0.0;

  double total() const {
    return likelihood + z_prior + rho_prior + tau_prior + lambda_prior + eta_prior + alpha_prior + sigma_prior;
  }
};

struct BnrDerived {
  Eigen::VectorXd f;
  Eigen::VectorXd beta;
  Eigen::VectorXd kappa;
  double rho = 0.0;
  double tau = 0.0;
  double sigma = 0.0;
  double log_posterior = 0.0;
};

/// Shared-response model for one ROI: B_{s,v}(t) = beta_v f(t) + eps, f ~ NNGP (whitened),
/// beta_v = tau lambda_v |eta_v| with half-t horseshoe scales and an IGMRF field on logit(phi).
class BnrModel {
 public:
  BnrModel(RoiData data, RoiGraph graph, BnrConfig cfg);

  int dim() const { return layout_.size(); }
  const BnrLayout& layout() const { return layout_; }
  const BnrConfig& config() const { return cfg_; }
  const RoiData& data() const { return data_; }
  const RoiGraph& graph() const { return graph_; }
  const NngpGraph& time_graph() const { return nngp_; }
  double tau0() const { return tau0_; }

  double log_density(const Eigen::VectorXd& x) const;
  /// Writes the gradient into grad (resized). Throws NumericalError on non-finite values.
  double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  BnrTerms terms(const Eigen::VectorXd& x) const;
  BnrDerived derive(const Eigen::VectorXd& x) const;

  /// Starting point near the leading shared component of the subject-mean data: f from the
  /// first singular vector (GP-smoothed), beta from least squares, split evenly between the
  /// global scale, local scales and eta.
  Eigen::VectorXd initial_point() const;

 private:
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, BnrTerms* terms) const;

  RoiData data_;
  RoiGraph graph_;
  BnrConfig cfg_;
  NngpGraph nngp_;
  BnrLayout layout_;
  double tau0_;
};

struct GlmConfig {
  double local_df = 1.0;      // half-Cauchy local scales
  double global_scale = 0.1;  // tau ~ C+(0, global_scale)
  double sigma_df = 3.0;
  double sigma_scale = 1.0;

  void validate() const;
};

/// Coordinates: eta (V*K, voxel-major), log lambda (V*K), log tau, log sigma.
struct GlmLayout {
  int voxels = 0;
  int predictors = 0;

  int size() const { return 2 * voxels * predictors + 2; }
  int eta() const { return 0; }
  int log_lambda() const { return voxels * predictors; }
  int log_tau() const { return 2 * voxels * predictors; }
  int log_sigma() const { return 2 * voxels * predictors + 1; }
  std::vector<std::string> names() const;
};

struct GlmDerived {
  Eigen::MatrixXd beta;   // V x K
  Eigen::MatrixXd kappa;  // V x K
  double tau = 0.0;
  double sigma = 0.0;
  double log_posterior = 0.0;
};

/// Horseshoe GLM with coefficients shared across subjects: B_{s,v}(t) = sum_k beta_vk h_k(t) + eps.
class GlmModel {
 public:
  GlmModel(RoiData data, Eigen::MatrixXd predictors, GlmConfig cfg = {});

  int dim() const { return layout_.size(); }
  const GlmLayout& layout() const { return layout_; }
  const Eigen::MatrixXd& predictors() const { return predictors_; }

  double log_density(const Eigen::VectorXd& x) const;
  double log_density_gradient(const Eigen::VectorXd& x, Eigen::VectorXd& grad) const;
  /// Likelihood part only.
  double likelihood(const Eigen::VectorXd& x) const;
  GlmDerived derive(const Eigen::VectorXd& x) const;

 private:
  double evaluate(const Eigen::VectorXd& x, Eigen::VectorXd* grad, double* lik) const;

  RoiData data_;
  Eigen::MatrixXd predictors_;
  GlmConfig cfg_;
  GlmLayout layout_;
};

}  // namespace bnr
