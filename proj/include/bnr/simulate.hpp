#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "bnr/dataset.hpp"
#include "bnr/hrf.hpp"
#include "bnr/rng.hpp"

namespace bnr {

using ArCoefficients = std::array<double, 3>;

/// Multi-subject, multi-task block-design simulation on a 2-D voxel grid.
struct SimConfig {
  int nx = 11;
  int ny = 11;
  double total_time = 240.0;
  double tr = 2.0;
  int subjects = 10;
  std::vector<TaskDesign> tasks;  // empty: default_tasks(total_time, tr)
  HrfConfig hrf;

  double mu = 1.0;  // folded-normal location of task strengths
  double sigma = 0.34;

  double center_x = -1.0;  // negative: grid center
  double center_y = -1.0;
  double radius_mean = 2.5;
  double radius_sd = 0.56;
  double radius_min = 0.5;
  double fade_edge = 0.6;  // relative strength at the circle boundary

  ArCoefficients ar_mean{0.142, 0.108, 0.084};
  double ar_var = 0.3;
  double ar_scale = 1.0;  // AR innovation sd relative to the white-noise sd

  double snr = 2.0;
  double baseline = 2.0;  // magnitude baseline, in units of the reference signal rms
  double drift_fraction = 0.05;
  std::array<double, 2> drift_periods{128.0, 75.0};

  std::uint64_t seed = 1;

  int scans() const;
  void validate() const;
  std::vector<TaskDesign> resolved_tasks() const;
};

/// Four overlapping block designs spanning the session.
std::vector<TaskDesign> default_tasks(double total_time, double tr);

struct GroundTruth {
  std::vector<TaskDesign> tasks;
  Eigen::MatrixXd predictors;  // T x K, max-normalized
  double center_x = 0.0;
  double center_y = 0.0;
  std::vector<double> radii;                     // per subject
  std::vector<Eigen::MatrixXd> beta;             // per subject, V x K
  Eigen::MatrixXd mean_beta;                     // V x K, averaged over subjects
  Eigen::MatrixXd signal;                        // V x T, sum_k mean_beta_vk h_k(t)
  std::vector<std::vector<bool>> subject_active;  // S x V
  std::vector<bool> consensus_active;            // inside the mean-radius circle, mu > 0
  std::vector<ArCoefficients> ar_coefficients;   // per subject
  double white_sd = 0.0;
  double reference_rms = 0.0;
};

struct SimulatedData {
  BoldDataset data;
  GroundTruth truth;
};

SimulatedData simulate_dataset(const SimConfig& cfg);

double ar_spectral_radius(const ArCoefficients& eta);
/// Draws from N(mean, var I), redrawing non-stationary triples; throws after 50 in a row.
ArCoefficients draw_ar_coefficients(const ArCoefficients& mean, double var, Rng& rng);
/// Stationary AR(3) path after 200 discarded burn-in steps.
Eigen::VectorXd ar3_noise(const ArCoefficients& eta, double innovation_sd, int scans, Rng& rng);

/// sqrt((clean + x)^2 + y^2) with x, y ~ N(0, sigma_w^2); optionally centered by the
/// Rayleigh mean sigma_w sqrt(pi / 2).
Eigen::VectorXd rician_noise(const Eigen::VectorXd& clean, double sigma_w, Rng& rng, bool center = true);
/// sigma_w = rms(clean) / snr, with rms taken as 1 when clean is identically zero.
Eigen::VectorXd rician_noise_at_snr(const Eigen::VectorXd& clean, double snr, Rng& rng, bool center = true);
/// sigma_w for a target signal-to-noise ratio relative to `signal_scale`.
double rician_sigma(double signal_scale, double snr);

double folded_normal_mean(double mu, double sigma);
double draw_folded_normal(double mu, double sigma, Rng& rng);

/// Per-replicate seed derived from (study seed, replicate index).
std::uint64_t replicate_seed(std::uint64_t seed, int replicate);

struct Replicate {
  int index = 0;
  std::uint64_t seed = 0;
  SimulatedData sim;
};

std::vector<Replicate> replicate_study(const SimConfig& cfg, int replicates, int jobs = 1);

struct SimSetting {
  std::string name;  // e.g. "mu_1_S_10"
  double mu = 0.0;
  int subjects = 0;
  SimConfig config;
};

/// Enumerates the strength x subject-count grid; each setting gets a derived seed.
std::vector<SimSetting> settings_grid(const SimConfig& base, const std::vector<double>& mus,
                                      const std::vector<int>& subjects);

}  // namespace bnr
