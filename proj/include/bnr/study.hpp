#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bnr/dataset.hpp"
#include "bnr/hrf.hpp"
#include "bnr/io.hpp"
#include "bnr/isc.hpp"
#include "bnr/model.hpp"
#include "bnr/sampler.hpp"
#include "bnr/simulate.hpp"

namespace bnr {

namespace fs = std::filesystem;

/// Per-dataset fitting options shared by cmd_fit and cmd_sweep.
struct FitOptions {
  std::string model = "bnr";  // bnr | glm
  BnrConfig bnr;
  GlmConfig glm;
  SamplerConfig sampler;
  HrfConfig hrf;
  double kappa_threshold = 0.5;
  std::vector<std::string> rois;  // empty: every ROI
  bool save_draws = false;

  std::string method_tag() const;
  void validate() const;
};

/// Fits every selected ROI of `data` independently. `predictors` (T x K) are the GLM design and,
/// for the BNR, the reference whose correlation with the posterior-mean f gives the response
/// sign; either may be empty for the BNR. ROI seeds derive from (seed, dataset_key, ROI index).
FitReport fit_dataset(const BoldDataset& data, const Eigen::MatrixXd& predictors, const FitOptions& opt,
                      std::uint64_t seed, const std::string& dataset_key, int jobs);

/// One ROI fit on already-standardized data.
RoiFit fit_roi(const BoldDataset& standardized, const std::vector<int>& voxels, const Eigen::MatrixXd& predictors,
               const FitOptions& opt, std::uint64_t seed, int jobs);

/// T x K matrix of max-normalized predictors.
Eigen::MatrixXd design_matrix(const std::vector<TaskDesign>& tasks, const HrfConfig& hrf);

// ---- Study bookkeeping ----

struct StudyDataset {
  std::string setting;
  double mu = 0.0;
  int subjects = 0;
  int replicate = 0;
  std::uint64_t seed = 0;
  std::string key;  // relative directory, e.g. "mu_1_S_10/rep_000"
  fs::path manifest;
  fs::path truth;
};

struct StudyIndex {
  fs::path root;
  std::uint64_t seed = 0;
  std::vector<StudyDataset> datasets;
};

StudyIndex read_study(const fs::path& dir);

void write_truth(const GroundTruth& truth, const SimConfig& cfg, const fs::path& path);
struct TruthFile {
  std::vector<TaskDesign> tasks;
  double mu = 0.0;
  std::vector<bool> consensus_active;
  Eigen::MatrixXd signal;  // V x T
};
TruthFile read_truth(const fs::path& path);

// ---- Scoring ----

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

/// Empirical ROC for "active when score <= threshold" (lower score = more active), with tied
/// scores grouped into one step. Requires at least one positive and one negative.
std::vector<RocPoint> roc_curve(const std::vector<double>& score, const std::vector<bool>& truth);
double auc_trapezoid(const std::vector<RocPoint>& roc);

struct Confusion {
  double accuracy = 0.0;
  double sensitivity = 0.0;  // nan without positives
  double specificity = 0.0;  // nan without negatives
};
Confusion confusion(const std::vector<bool>& predicted, const std::vector<bool>& truth);

/// 1 - r^2 between a truth series and an estimate after centering and least-squares scaling,
/// with the truth standardized; `scale` receives the fitted factor.
double aligned_mse(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimate, double* scale = nullptr);

// ---- Commands ----

struct RunConfig {
  fs::path base_dir;  // relative paths resolve against the config file's directory
  fs::path out;
  std::uint64_t seed = 1;
  int jobs = 1;

  // simulate
  SimConfig sim;
  std::vector<double> sim_mu{1.0};
  std::vector<int> sim_subjects{10};
  int replicates = 1;

  // fit / isc / sweep inputs: exactly one of dataset and study
  fs::path dataset;
  fs::path study;
  std::vector<std::string> settings;  // study settings to include; empty = all
  std::string design = "auto";        // auto | truth | none | inline
  std::vector<TaskDesign> design_tasks;
  FitOptions fit;

  // isc
  std::vector<NullMethod> isc_methods{NullMethod::circular, NullMethod::phase};
  int permutations = 1000;
  double alpha = 0.05;
  bool fdr = true;

  // sweep
  std::vector<double> sweep_nu;
  std::vector<double> sweep_tau_star;

  // score
  fs::path fits;  // defaults to out
};

/// Parses a JSON config; unknown keys and malformed values raise ConfigError.
RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir);
RunConfig load_run_config(const fs::path& path);

/// Full validation for a command, run before any output is written.
void validate_command(const RunConfig& cfg, const std::string& command);

enum ExitCode : int { kExitOk = 0, kExitError = 1, kExitConfig = 2, kExitPartial = 3 };

int cmd_simulate(const RunConfig& cfg);
int cmd_fit(const RunConfig& cfg);
int cmd_isc(const RunConfig& cfg);
int cmd_score(const RunConfig& cfg);
int cmd_sweep(const RunConfig& cfg);

/// Dispatches by name after validation.
int run_command(const std::string& command, const RunConfig& cfg);

}  // namespace bnr
