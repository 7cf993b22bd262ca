#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

namespace bnr {

using Coord = std::array<int, 3>;

struct Voxel {
  int id = 0;
  Coord coord{0, 0, 0};
  std::string roi;
};

/// S x V x T BOLD values, stored subject-major, then voxel, then time.
class BoldDataset {
 public:
  BoldDataset() = default;
  BoldDataset(int subjects, int scans, double tr, std::vector<Voxel> voxels, std::vector<double> values);

  int subjects() const { return subjects_; }
  int voxels() const { return static_cast<int>(voxels_.size()); }
  int scans() const { return scans_; }
  double tr() const { return tr_; }

  double operator()(int s, int v, int t) const { return values_[index(s, v, t)]; }
  double& operator()(int s, int v, int t) { return values_[index(s, v, t)]; }

  std::span<const double> series(int s, int v) const {
    return {values_.data() + index(s, v, 0), static_cast<std::size_t>(scans_)};
  }
  std::span<double> series(int s, int v) {
    return {values_.data() + index(s, v, 0), static_cast<std::size_t>(scans_)};
  }

  const std::vector<Voxel>& voxel_table() const { return voxels_; }
  const std::vector<double>& values() const { return values_; }

  /// Scan times k * tr, k = 0..T-1.
  std::vector<double> scan_times() const;

  /// Distinct ROI labels in first-appearance order.
  std::vector<std::string> roi_labels() const;
  std::vector<int> roi_voxels(const std::string& label) const;

  /// Dataset restricted to the given voxels (in the given order), re-indexed 0..k-1.
  BoldDataset subset(std::span<const int> voxel_indices) const;

  /// Throws DataError on any structural inconsistency.
  void validate() const;

 private:
  std::size_t index(int s, int v, int t) const {
    return (static_cast<std::size_t>(s) * voxels_.size() + static_cast<std::size_t>(v)) * scans_ + t;
  }

  int subjects_ = 0;
  int scans_ = 0;
  double tr_ = 1.0;
  std::vector<Voxel> voxels_;
  std::vector<double> values_;
};

/// Lattice voxel table for an nx x ny (x nz) grid, ids in x-fastest order, single ROI.
std::vector<Voxel> grid_voxels(int nx, int ny, int nz = 1, const std::string& roi = "roi0");

}  // namespace bnr
