#include "bnr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "bnr/error.hpp"

namespace bnr {

BoldDataset::BoldDataset(int subjects, int scans, double tr, std::vector<Voxel> voxels,
                         std::vector<double> values)
    : subjects_(subjects), scans_(scans), tr_(tr), voxels_(std::move(voxels)), values_(std::move(values)) {
  validate();
}

void BoldDataset::validate() const {
  if (subjects_ < 1 || scans_ < 1) throw DataError("dataset needs at least one subject and one scan");
  if (!(tr_ > 0.0) || !std::isfinite(tr_)) throw DataError("repetition time must be positive");
  const std::size_t expected = static_cast<std::size_t>(subjects_) * voxels_.size() * scans_;
  if (values_.size() != expected) {
    throw DataError("dataset holds " + std::to_string(values_.size()) + " values, expected " +
                    std::to_string(expected));
  }
  std::set<Coord> seen;
  for (std::size_t v = 0; v < voxels_.size(); ++v) {
    if (voxels_[v].id != static_cast<int>(v)) {
      throw DataError("voxel ids must be dense 0..V-1; found id " + std::to_string(voxels_[v].id) +
                      " at position " + std::to_string(v));
    }
    if (!seen.insert(voxels_[v].coord).second) {
      const auto& c = voxels_[v].coord;
      throw DataError("duplicate voxel coordinate (" + std::to_string(c[0]) + ", " + std::to_string(c[1]) +
                      ", " + std::to_string(c[2]) + ")");
    }
  }
}

std::vector<double> BoldDataset::scan_times() const {
  std::vector<double> t(scans_);
  for (int k = 0; k < scans_; ++k) t[k] = k * tr_;
  return t;
}

std::vector<std::string> BoldDataset::roi_labels() const {
  std::vector<std::string> out;
  for (const auto& v : voxels_) {
    if (std::find(out.begin(), out.end(), v.roi) == out.end()) out.push_back(v.roi);
  }
  return out;
}

std::vector<int> BoldDataset::roi_voxels(const std::string& label) const {
  std::vector<int> out;
  for (const auto& v : voxels_) {
    if (v.roi == label) out.push_back(v.id);
  }
  return out;
}

BoldDataset BoldDataset::subset(std::span<const int> voxel_indices) const {
  std::vector<Voxel> vox;
  vox.reserve(voxel_indices.size());
  for (std::size_t i = 0; i < voxel_indices.size(); ++i) {
    Voxel v = voxels_.at(voxel_indices[i]);
    v.id = static_cast<int>(i);
    vox.push_back(std::move(v));
  }
  std::vector<double> vals;
  vals.reserve(static_cast<std::size_t>(subjects_) * vox.size() * scans_);
  for (int s = 0; s < subjects_; ++s) {
    for (int v : voxel_indices) {
      auto x = series(s, v);
      vals.insert(vals.end(), x.begin(), x.end());
    }
  }
  return BoldDataset(subjects_, scans_, tr_, std::move(vox), std::move(vals));
}

std::vector<Voxel> grid_voxels(int nx, int ny, int nz, const std::string& roi) {
  std::vector<Voxel> out;
  out.reserve(static_cast<std::size_t>(nx) * ny * nz);
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x) {
        out.push_back(Voxel{static_cast<int>(out.size()), {x, y, z}, roi});
      }
    }
  }
  return out;
}

}  // namespace bnr
