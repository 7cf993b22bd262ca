#pragma once

#include <string>
#include <vector>

#include "bnr/dataset.hpp"

namespace bnr {

/// Per-voxel activation summary. `score` is the posterior-mean shrinkage factor for the
/// Bayesian models and the permutation p-value for ISC; lower means more active in both.
struct ActivationMap {
  std::string score_name = "kappa_mean";
  std::vector<int> voxel_ids;
  std::vector<Coord> coords;
  std::vector<std::string> rois;
  std::vector<double> score;
  std::vector<bool> active;
  std::vector<int> sign;  // +1 / -1, 0 when not reported

  std::size_t size() const { return voxel_ids.size(); }
  std::size_t active_count() const;
  /// Copies voxel ids, coordinates and ROI labels from a voxel table of matching size.
  void attach_voxels(const std::vector<Voxel>& voxels);
};

}  // namespace bnr
