#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace bnr {

/// Log density and gradient at x; must be reentrant. May throw NumericalError for points
/// where the density is not finite (treated as infinite energy inside trajectories).
using LogDensityFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;

struct SamplerConfig {
  int chains = 4;
  int warmup = 1500;
  int draws = 1500;
  double target_accept = 0.8;
  int max_depth = 10;
  std::uint64_t seed = 1;
  int jobs = 1;
  double init_radius = 2.0;
  int init_tries = 100;
  double init_jitter = 0.0;  // with an explicit init: per-chain uniform(-j, j) offsets
  double max_energy_error = 1000.0;

  void validate() const;
};

struct ChainResult {
  Eigen::MatrixXd draws;  // draws x dim, post-warmup
  std::vector<double> log_density;
  std::vector<bool> divergent;
  std::vector<int> tree_depth;
  std::vector<int> n_leapfrog;
  std::vector<double> accept_stat;
  std::vector<double> energy;
  std::vector<double> energy_error;      // H(selected) - H(initial)
  std::vector<double> max_energy_error;  // max over the trajectory of H - H(initial)
  double step_size = 0.0;
  Eigen::VectorXd inv_metric;
  int warmup_divergences = 0;
};

struct PosteriorDraws {
  std::vector<std::string> names;
  std::vector<ChainResult> chains;

  int num_chains() const { return static_cast<int>(chains.size()); }
  int draws_per_chain() const { return chains.empty() ? 0 : static_cast<int>(chains.front().draws.rows()); }
  int dim() const { return chains.empty() ? 0 : static_cast<int>(chains.front().draws.cols()); }

  /// Draws of coordinate j, one vector per chain.
  std::vector<Eigen::VectorXd> parameter(int j) const;
  std::size_t divergences() const;
  double depth_saturation(int max_depth) const;
};

/// No-U-Turn sampler with multinomial trajectory sampling, dual-averaging step size and a
/// windowed diagonal metric. Chains run on up to cfg.jobs threads with streams derived
/// from (cfg.seed, chain index).
PosteriorDraws nuts_sample(const LogDensityFn& log_density, int dim, const SamplerConfig& cfg,
                           const std::optional<Eigen::VectorXd>& init = std::nullopt,
                           std::vector<std::string> names = {});

}  // namespace bnr
