#include "bnr/hrf.hpp"

#include <cmath>

#include "bnr/error.hpp"

namespace bnr {
namespace {

double gamma_pdf(double t, double shape, double scale) {
  if (t <= 0.0) return 0.0;
  return std::exp((shape - 1.0) * std::log(t) - t / scale - std::lgamma(shape) - shape * std::log(scale));
}

}  // namespace

int TaskDesign::scans() const { return static_cast<int>(std::llround(total_time / tr)); }

void TaskDesign::validate() const {
  if (!(tr > 0.0)) throw ConfigError("task design: tr must be positive");
  if (!(total_time > 0.0)) throw ConfigError("task design: total_time must be positive");
  const double n = total_time / tr;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError("task design: total_time / tr must be an integer number of scans");
  }
  if (onsets.size() != durations.size()) throw ConfigError("task design: onsets and durations differ in length");
  for (std::size_t i = 0; i < onsets.size(); ++i) {
    if (onsets[i] < 0.0 || durations[i] < 0.0) throw ConfigError("task design: negative onset or duration");
    if (i > 0 && !(onsets[i] > onsets[i - 1])) throw ConfigError("task design: onsets must be strictly increasing");
    if (onsets[i] + durations[i] > total_time + 1e-9) {
      throw ConfigError("task design: block " + std::to_string(i) + " ends after total_time");
    }
  }
}

void HrfConfig::validate(double tr) const {
  if (!(peak_delay > 0 && undershoot_delay > 0 && peak_dispersion > 0 && undershoot_dispersion > 0)) {
    throw ConfigError("hrf: delays and dispersions must be positive");
  }
  if (undershoot_ratio < 0) throw ConfigError("hrf: undershoot_ratio must be nonnegative");
  if (!(resolution > 0 && resolution < tr)) throw ConfigError("hrf: resolution must lie in (0, tr)");
  if (!(kernel_length > resolution)) throw ConfigError("hrf: kernel_length must exceed resolution");
}

double canonical_hrf(const HrfConfig& cfg, double t) {
  if (t <= 0.0) return 0.0;
  const double peak = gamma_pdf(t, cfg.peak_delay / cfg.peak_dispersion, cfg.peak_dispersion);
  const double under = gamma_pdf(t, cfg.undershoot_delay / cfg.undershoot_dispersion, cfg.undershoot_dispersion);
  return peak - cfg.undershoot_ratio * under;
}

Eigen::VectorXd bold_predictor_unnormalized(const TaskDesign& design, const HrfConfig& cfg) {
  design.validate();
  cfg.validate(design.tr);
  const int scans = design.scans();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(scans);
  if (design.onsets.empty()) return out;

  const double res = cfg.resolution;
  const long fine = std::lround(design.total_time / res) + 1;
  Eigen::VectorXd box = Eigen::VectorXd::Zero(fine);
  for (std::size_t b = 0; b < design.onsets.size(); ++b) {
    const long start = std::lround(design.onsets[b] / res);
    const long stop = std::min(fine, std::lround((design.onsets[b] + design.durations[b]) / res));
    for (long j = start; j < stop; ++j) box[j] = design.amplitude;
  }

  const long klen = std::lround(cfg.kernel_length / res) + 1;
  Eigen::VectorXd kernel(klen);
  for (long j = 0; j < klen; ++j) kernel[j] = canonical_hrf(cfg, j * res);

  for (int k = 0; k < scans; ++k) {
    const long j = std::lround(k * design.tr / res);
    double acc = 0.0;
    const long lo = std::max(0L, j - klen + 1);
    for (long i = lo; i <= std::min(j, fine - 1); ++i) acc += box[i] * kernel[j - i];
    out[k] = acc * res;
  }
  return out;
}

Eigen::VectorXd bold_predictor(const TaskDesign& design, const HrfConfig& cfg) {
  Eigen::VectorXd h = bold_predictor_unnormalized(design, cfg);
  const double peak = h.cwiseAbs().maxCoeff();
  if (peak > 0.0) h /= peak;
  return h;
}

TaskDesign alternating_blocks(double on, double off, double total_time, double tr, double first_onset) {
  TaskDesign d;
  d.total_time = total_time;
  d.tr = tr;
  for (double t = first_onset; t + on <= total_time + 1e-9; t += on + off) {
    d.onsets.push_back(t);
    d.durations.push_back(on);
  }
  return d;
}

}  // namespace bnr
