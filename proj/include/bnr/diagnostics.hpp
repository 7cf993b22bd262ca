#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "bnr/sampler.hpp"

namespace bnr {

/// Rank-normalized split R-hat (max of bulk and folded). Chains are split in half, so a
/// single chain is accepted. Returns +inf for constant draws.
double split_rhat(const std::vector<Eigen::VectorXd>& chains);

struct EssResult {
  double bulk = 0.0;
  double tail = 0.0;
  bool degenerate = false;
};

/// Bulk ESS (rank-normalized split chains) and tail ESS (min over the 5% / 95% quantile
/// indicators), using Geyer's initial monotone sequence.
EssResult ess(const std::vector<Eigen::VectorXd>& chains);

/// ESS of the raw (not rank-normalized) split chains.
double ess_basic(const std::vector<Eigen::VectorXd>& chains);

struct Diagnostics {
  std::vector<std::string> names;
  std::vector<double> rhat;
  std::vector<double> ess_bulk;
  std::vector<double> ess_tail;
  std::size_t divergences = 0;
  double depth_saturation = 0.0;

  double max_rhat() const;
  double min_ess_bulk() const;
  double min_ess_tail() const;
  /// max R-hat below rhat_max and both minimum ESS values above ess_min.
  bool converged(double rhat_max = 1.01, double ess_min = 400.0) const;
};

/// Diagnostics for per-chain draw matrices (draws x quantities) with the given names.
Diagnostics diagnose(const std::vector<Eigen::MatrixXd>& chains, std::vector<std::string> names);

/// Diagnostics over the raw sampler coordinates, including divergence and depth summaries.
Diagnostics diagnose(const PosteriorDraws& draws, int max_depth);

}  // namespace bnr
