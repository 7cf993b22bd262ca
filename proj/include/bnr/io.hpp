#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bnr/activation.hpp"
#include "bnr/dataset.hpp"
#include "bnr/error.hpp"
#include "bnr/isc.hpp"
#include "bnr/sampler.hpp"

namespace bnr {

namespace fs = std::filesystem;

inline constexpr int kDatasetFormatVersion = 1;
inline constexpr int kActivationCsvVersion = 1;
inline constexpr int kReportFormatVersion = 1;

class LengthMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class VersionMismatchError : public DataError {
 public:
  using DataError::DataError;
};

class DuplicateCoordinateError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Writes `<stem>.json` (manifest) and `<stem>.bin` (little-endian float64 payload) next to it.
void write_dataset(const BoldDataset& data, const fs::path& manifest);
BoldDataset read_dataset(const fs::path& manifest);

/// Raw little-endian float64 helpers.
void write_f64(const fs::path& path, const double* values, std::size_t n);
std::vector<double> read_f64(const fs::path& path);

void export_activation_map(const ActivationMap& map, const fs::path& path);
ActivationMap read_activation_map(const fs::path& path);

/// voxel_id, x, y, z, roi, mean_r, p_value, active
void export_isc_result(const IscResult& res, const std::vector<Voxel>& voxels, const fs::path& path);

/// Counts of p-values in `bins` equal-width bins on [0, 1].
std::vector<int> pvalue_histogram(const Eigen::VectorXd& p, int bins = 20);

struct Summary {
  double mean = 0.0;
  double sd = 0.0;
  double q025 = 0.0;
  double q50 = 0.0;
  double q975 = 0.0;
};

/// Mean, sd (n - 1) and type-7 quantiles.
Summary summarize(std::vector<double> x);

struct ParameterSummary {
  std::string name;
  std::vector<Summary> values;
};

struct DiagnosticSummary {
  double max_rhat = 0.0;
  double min_ess_bulk = 0.0;
  double min_ess_tail = 0.0;
  std::size_t divergences = 0;
  double depth_saturation = 0.0;
  bool converged = false;
};

struct RoiFit {
  std::string roi;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<int> voxels;  // dataset voxel indices
  std::vector<ParameterSummary> parameters;
  DiagnosticSummary diagnostics;
  std::vector<double> score;  // posterior-mean shrinkage factor per voxel
  std::vector<bool> active;
  std::vector<int> sign;  // per voxel; 0 when not reported
  double seconds = 0.0;
  std::optional<PosteriorDraws> draws;

  const ParameterSummary* parameter(const std::string& name) const;
};

struct FitReport {
  std::string model;
  std::string method_tag;
  std::string dataset;
  double kappa_threshold = 0.5;
  std::vector<RoiFit> rois;

  std::size_t failed() const;
  /// Voxel-ordered map over all fitted voxels.
  ActivationMap activation_map(const std::vector<Voxel>& voxels) const;
};

/// Data part only; timing goes through write_timing so the report stays reproducible.
void write_fit_report(const FitReport& report, const fs::path& path);
FitReport read_fit_report(const fs::path& path);
void write_timing(const FitReport& report, double total_seconds, const fs::path& path);

struct DrawBlock {
  std::string name;
  int offset = 0;
  int length = 0;
};

/// `<dir>/<prefix>.json` header plus `<dir>/<prefix>_chain<c>.bin` per chain, dimension-major.
void write_draws(const PosteriorDraws& draws, const std::vector<DrawBlock>& blocks, const fs::path& dir,
                 const std::string& prefix);
PosteriorDraws read_draws(const fs::path& header);

/// Writes text atomically enough for single-owner paths (truncate + write).
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

}  // namespace bnr
