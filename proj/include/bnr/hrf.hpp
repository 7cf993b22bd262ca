#pragma once

#include <Eigen/Dense>
#include <vector>

namespace bnr {

/// Block design for one task: blocks are [onset, onset + duration) in seconds.
struct TaskDesign {
  std::vector<double> onsets;
  std::vector<double> durations;
  double amplitude = 1.0;
  double total_time = 0.0;
  double tr = 1.0;

  int scans() const;
  void validate() const;
};

/// Double-gamma canonical response. Delays and dispersions in seconds.
struct HrfConfig {
  double peak_delay = 6.0;
  double undershoot_delay = 16.0;
  double peak_dispersion = 1.0;
  double undershoot_dispersion = 1.0;
  double undershoot_ratio = 1.0 / 6.0;
  double resolution = 0.1;
  double kernel_length = 32.0;

  void validate(double tr) const;
};

double canonical_hrf(const HrfConfig& cfg, double t);

/// Boxcar convolved with the canonical HRF on the oversampled grid, sampled at k * tr.
Eigen::VectorXd bold_predictor_unnormalized(const TaskDesign& design, const HrfConfig& cfg = {});

/// As above, scaled so the largest absolute value is 1 (all zeros for an empty design).
Eigen::VectorXd bold_predictor(const TaskDesign& design, const HrfConfig& cfg = {});

/// Repeating on/off block design starting at `first_onset`.
TaskDesign alternating_blocks(double on, double off, double total_time, double tr, double first_onset = 0.0);

}  // namespace bnr
