#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <span>
#include <vector>

namespace bnr {

/// Squared-exponential kernel with unit variance; only the lengthscale is free.
struct KernelConfig {
  double lengthscale = 10.0;
  static constexpr double variance = 1.0;

  void validate() const;
};

/// Nugget added to every kernel diagonal (neighbor blocks and the node's own variance).
inline constexpr double kNngpJitter = 1e-8;

inline constexpr int kDefaultNeighbors = 15;

double sq_exp_kernel(const KernelConfig& cfg, double x, double y);

/// Directed acyclic conditioning graph: node i conditions on its min(m, i) nearest predecessors.
struct NngpGraph {
  std::vector<double> nodes;
  int m = 0;
  std::vector<std::vector<int>> neighbors;
  double step = 0.0;  // common spacing when the nodes form a regular grid, else 0

  int size() const { return static_cast<int>(nodes.size()); }
};

NngpGraph build_graph(std::span<const double> times, int m = kDefaultNeighbors);

/// Per-node regression coefficients b_i and conditional sds s_i, optionally with their
/// derivatives with respect to log(lengthscale). Nodes with identical neighbor offsets share
/// one slot.
struct WhiteningFactors {
  std::vector<int> slot;
  std::vector<Eigen::VectorXd> coef;
  std::vector<double> sd;
  std::vector<Eigen::VectorXd> dcoef;
  std::vector<double> dsd;
  bool has_gradient = false;

  const Eigen::VectorXd& b(int i) const { return coef[slot[i]]; }
  double s(int i) const { return sd[slot[i]]; }
  const Eigen::VectorXd& db(int i) const { return dcoef[slot[i]]; }
  double ds(int i) const { return dsd[slot[i]]; }

  // Instrumentation: neighbor-block factorizations performed and an estimate of their flops.
  std::size_t factorizations = 0;
  std::size_t flops = 0;
};

/// Computed in extended precision. On regular grids a single factorization covers all slots.
WhiteningFactors whiten_factors(const NngpGraph& graph, const KernelConfig& cfg, bool with_gradient = false);

/// Sum over nodes of log N(w_i | b_i . w_N(i), s_i^2). Gradients are accumulated (added) into
/// the optional outputs; the log-lengthscale gradient requires factors built with_gradient.
double nngp_logpdf(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& w,
                   Eigen::VectorXd* grad_w = nullptr, double* grad_log_rho = nullptr);
double nngp_logpdf(const NngpGraph& graph, const KernelConfig& cfg, const Eigen::VectorXd& w);

/// f_i = b_i . f_N(i) + s_i z_i, in node order.
Eigen::VectorXd whiten_to_f(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& z);
Eigen::VectorXd whiten_to_f(const NngpGraph& graph, const KernelConfig& cfg, const Eigen::VectorXd& z);

/// Inverse of whiten_to_f.
Eigen::VectorXd unwhiten(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& f);

/// Reverse-mode pass through whiten_to_f: given dL/df, adds dL/dz into grad_z and, when
/// requested, dL/dlog(rho) into grad_log_rho.
void whiten_backprop(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& z,
                     const Eigen::VectorXd& f, const Eigen::VectorXd& grad_f, Eigen::VectorXd& grad_z,
                     double* grad_log_rho);

struct GpPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;
};

/// Conditional mean and sd at each new time given the m nearest observed nodes on either side.
GpPrediction predict(const NngpGraph& graph, const KernelConfig& cfg, const Eigen::VectorXd& f_obs,
                     std::span<const double> t_new);

}  // namespace bnr
