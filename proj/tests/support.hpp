#pragma once

#include <Eigen/Dense>
#include <atomic>
#include <filesystem>
#include <functional>
#include <string>
#include <unistd.h>

#include "bnr/dataset.hpp"
#include "bnr/rng.hpp"

namespace bnr::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("bnr_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

// Central differences of a scalar function.
inline Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f, const Eigen::VectorXd& x,
                                   double h = 1e-5) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd y = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    y[i] = x[i] + h;
    const double up = f(y);
    y[i] = x[i] - h;
    const double down = f(y);
    y[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

// Largest |a - b| / max(1, |b|).
inline double max_rel_error(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a[i] - b[i]) / std::max(1.0, std::abs(b[i])));
  }
  return worst;
}

// Gaussian white-noise dataset on an nx x ny grid plus `signal(v, t)` shared by every subject.
inline BoldDataset noise_dataset(int subjects, int nx, int ny, int scans, double tr, std::uint64_t seed,
                                 const std::function<double(int, int)>& signal = {}) {
  auto voxels = grid_voxels(nx, ny);
  const int V = static_cast<int>(voxels.size());
  std::vector<double> values(static_cast<std::size_t>(subjects) * V * scans);
  Rng rng = make_rng(seed);
  std::size_t k = 0;
  for (int s = 0; s < subjects; ++s) {
    for (int v = 0; v < V; ++v) {
      for (int t = 0; t < scans; ++t) values[k++] = (signal ? signal(v, t) : 0.0) + std_normal(rng);
    }
  }
  return BoldDataset(subjects, scans, tr, std::move(voxels), std::move(values));
}

}  // namespace bnr::test
