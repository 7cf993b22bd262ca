#pragma once

#include <Eigen/Dense>
#include <span>
#include <utility>
#include <vector>

#include "bnr/dataset.hpp"

namespace bnr {

/// Face-sharing adjacency over a set of lattice voxels.
struct RoiGraph {
  std::vector<Coord> coords;
  std::vector<std::pair<int, int>> edges;  // first < second
  std::vector<int> degree;
  std::vector<int> component;  // connected-component id per voxel
  int components = 0;

  int size() const { return static_cast<int>(coords.size()); }
};

RoiGraph build_roi_graph(std::span<const Coord> coords);

inline constexpr double kSumToZeroVariancePerVoxel = 0.001;

/// -1/2 sum over edges of (alpha_v - alpha_w)^2.
double igmrf_pairwise_logpdf(const RoiGraph& graph, const Eigen::VectorXd& alpha);

/// log N(sum alpha_c | 0, 0.001 |c|) summed over connected components c.
double igmrf_sum_penalty(const RoiGraph& graph, const Eigen::VectorXd& alpha);

/// Pairwise term plus the soft sum-to-zero penalty; gradient accumulated when requested.
double igmrf_logpdf(const RoiGraph& graph, const Eigen::VectorXd& alpha, Eigen::VectorXd* grad = nullptr);

/// Logistic map taking the unconstrained field to the local-scale scale in (0, 1].
double alpha_to_phi(double alpha);
/// log(alpha_to_phi(alpha)), stable for large negative alpha.
double log_alpha_to_phi(double alpha);

}  // namespace bnr
