#include "bnr/simulate.hpp"

#include <Eigen/Eigenvalues>
#include <boost/math/distributions/normal.hpp>
#include <cmath>
#include <numbers>

#include "bnr/error.hpp"
#include "bnr/parallel.hpp"

namespace bnr {

int SimConfig::scans() const { return static_cast<int>(std::llround(total_time / tr)); }

void SimConfig::validate() const {
  if (nx < 1 || ny < 1) throw ConfigError("simulate: grid must be at least 1 x 1");
  if (!(tr > 0.0 && total_time > 0.0)) throw ConfigError("simulate: tr and total_time must be positive");
  const double n = total_time / tr;
  if (std::abs(n - std::round(n)) > 1e-9 * std::max(1.0, n)) {
    throw ConfigError("simulate: total_time / tr must be an integer");
  }
  if (subjects < 1) throw ConfigError("simulate: need at least one subject");
  if (mu < 0.0) throw ConfigError("simulate: mu must be nonnegative");
  if (!(sigma > 0.0 && radius_sd > 0.0 && ar_var > 0.0)) throw ConfigError("simulate: variances must be positive");
  if (!(radius_min > 0.0)) throw ConfigError("simulate: radius_min must be positive");
  if (!(fade_edge > 0.0 && fade_edge <= 1.0)) throw ConfigError("simulate: fade_edge must lie in (0, 1]");
  if (!(snr > 0.0)) throw ConfigError("simulate: snr must be positive");
  if (ar_scale < 0.0 || baseline < 0.0 || drift_fraction < 0.0) {
    throw ConfigError("simulate: noise scales must be nonnegative");
  }
  for (const auto& t : resolved_tasks()) {
    t.validate();
    if (std::abs(t.total_time - total_time) > 1e-9 || std::abs(t.tr - tr) > 1e-12) {
      throw ConfigError("simulate: task timing does not match the session");
    }
  }
  hrf.validate(tr);
}

std::vector<TaskDesign> SimConfig::resolved_tasks() const { return tasks.empty() ? default_tasks(total_time, tr) : tasks; }

std::vector<TaskDesign> default_tasks(double total_time, double tr) {
  // Patterns laid out for 240 s and scaled to the session length.
  const std::vector<std::pair<std::vector<double>, double>> base = {
      {{8, 68, 128, 188}, 16}, {{30, 100, 170}, 10}, {{48, 112, 150, 210}, 6}, {{20, 84, 140, 222}, 12}};
  const double scale = total_time / 240.0;
  std::vector<TaskDesign> out;
  for (const auto& [onsets, dur] : base) {
    TaskDesign d;
    d.total_time = total_time;
    d.tr = tr;
    for (double o : onsets) {
      d.onsets.push_back(o * scale);
      d.durations.push_back(dur * scale);
    }
    out.push_back(std::move(d));
  }
  return out;
}

double ar_spectral_radius(const ArCoefficients& eta) {
  Eigen::Matrix3d companion;
  companion << eta[0], eta[1], eta[2], 1, 0, 0, 0, 1, 0;
  return companion.eigenvalues().cwiseAbs().maxCoeff();
}

ArCoefficients draw_ar_coefficients(const ArCoefficients& mean, double var, Rng& rng) {
  const double sd = std::sqrt(var);
  for (int attempt = 0; attempt < 50; ++attempt) {
    ArCoefficients eta;
    for (int i = 0; i < 3; ++i) eta[i] = mean[i] + sd * std_normal(rng);
    if (ar_spectral_radius(eta) < 1.0) return eta;
  }
  throw NumericalError("simulate: 50 consecutive non-stationary AR(3) coefficient draws", "ar3");
}

Eigen::VectorXd ar3_noise(const ArCoefficients& eta, double innovation_sd, int scans, Rng& rng) {
  if (!(ar_spectral_radius(eta) < 1.0)) throw NumericalError("ar3_noise: coefficients are not stationary", "ar3");
  constexpr int burn_in = 200;
  double g1 = 0.0, g2 = 0.0, g3 = 0.0;
  Eigen::VectorXd out(scans);
  for (int t = 0; t < burn_in + scans; ++t) {
    const double g = eta[0] * g1 + eta[1] * g2 + eta[2] * g3 + innovation_sd * std_normal(rng);
    g3 = g2;
    g2 = g1;
    g1 = g;
    if (t >= burn_in) out[t - burn_in] = g;
  }
  return out;
}

Eigen::VectorXd rician_noise(const Eigen::VectorXd& clean, double sigma_w, Rng& rng, bool center) {
  Eigen::VectorXd out(clean.size());
  const double offset = center ? sigma_w * std::sqrt(std::numbers::pi / 2.0) : 0.0;
  for (Eigen::Index i = 0; i < clean.size(); ++i) {
    const double x = clean[i] + sigma_w * std_normal(rng);
    const double y = sigma_w * std_normal(rng);
    out[i] = std::hypot(x, y) - offset;
  }
  return out;
}

double rician_sigma(double signal_scale, double snr) { return signal_scale / snr; }

Eigen::VectorXd rician_noise_at_snr(const Eigen::VectorXd& clean, double snr, Rng& rng, bool center) {
  if (!(snr > 0.0)) throw ConfigError("rician_noise: snr must be positive");
  double rms = clean.size() ? std::sqrt(clean.squaredNorm() / clean.size()) : 0.0;
  if (rms == 0.0) rms = 1.0;
  return rician_noise(clean, rician_sigma(rms, snr), rng, center);
}

double folded_normal_mean(double mu, double sigma) {
  const boost::math::normal_distribution<double> stdnorm;
  return sigma * std::sqrt(2.0 / std::numbers::pi) * std::exp(-mu * mu / (2.0 * sigma * sigma)) +
         mu * (1.0 - 2.0 * boost::math::cdf(stdnorm, -mu / sigma));
}

double draw_folded_normal(double mu, double sigma, Rng& rng) { return std::abs(mu + sigma * std_normal(rng)); }

SimulatedData simulate_dataset(const SimConfig& cfg) {
  cfg.validate();
  Rng rng = make_rng(cfg.seed);
  const int S = cfg.subjects, T = cfg.scans(), V = cfg.nx * cfg.ny;
  GroundTruth truth;
  truth.tasks = cfg.resolved_tasks();
  const int K = static_cast<int>(truth.tasks.size());
  truth.predictors.resize(T, K);
  for (int k = 0; k < K; ++k) truth.predictors.col(k) = bold_predictor(truth.tasks[k], cfg.hrf);

  truth.center_x = cfg.center_x < 0 ? 0.5 * (cfg.nx - 1) : cfg.center_x;
  truth.center_y = cfg.center_y < 0 ? 0.5 * (cfg.ny - 1) : cfg.center_y;
  auto voxels = grid_voxels(cfg.nx, cfg.ny);
  std::vector<double> dist(V);
  for (int v = 0; v < V; ++v) {
    dist[v] = std::hypot(voxels[v].coord[0] - truth.center_x, voxels[v].coord[1] - truth.center_y);
  }

  // Noise scale is tied to the unit-strength signal so that mu sets the signal level.
  const Eigen::VectorXd unit_signal = truth.predictors.rowwise().sum();
  truth.reference_rms = std::sqrt(unit_signal.squaredNorm() / T);
  if (!(truth.reference_rms > 0.0)) truth.reference_rms = 1.0;
  truth.white_sd = rician_sigma(truth.reference_rms, cfg.snr);
  const double baseline = cfg.baseline * truth.reference_rms;
  const double drift_amp = cfg.drift_fraction * truth.reference_rms;

  truth.mean_beta = Eigen::MatrixXd::Zero(V, K);
  truth.subject_active.assign(S, std::vector<bool>(V, false));
  std::vector<double> values(static_cast<std::size_t>(S) * V * T);

  for (int s = 0; s < S; ++s) {
    double radius;
    do {
      radius = cfg.radius_mean + cfg.radius_sd * std_normal(rng);
    } while (radius < cfg.radius_min);
    truth.radii.push_back(radius);
    truth.ar_coefficients.push_back(draw_ar_coefficients(cfg.ar_mean, cfg.ar_var, rng));

    Eigen::MatrixXd beta = Eigen::MatrixXd::Zero(V, K);
    for (int v = 0; v < V; ++v) {
      if (dist[v] > radius) continue;
      truth.subject_active[s][v] = cfg.mu > 0.0;
      const double fade = 1.0 - (1.0 - cfg.fade_edge) * dist[v] / radius;
      for (int k = 0; k < K; ++k) beta(v, k) = cfg.mu > 0.0 ? fade * draw_folded_normal(cfg.mu, cfg.sigma, rng) : 0.0;
    }
    truth.mean_beta += beta / S;

    for (int v = 0; v < V; ++v) {
      const Eigen::VectorXd clean = (truth.predictors * beta.row(v).transpose()).array() + baseline;
      Eigen::VectorXd series = rician_noise(clean, truth.white_sd, rng);
      series += ar3_noise(truth.ar_coefficients.back(), cfg.ar_scale * truth.white_sd, T, rng);
      for (double period : cfg.drift_periods) {
        const double phase = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        for (int t = 0; t < T; ++t) {
          series[t] += drift_amp * std::cos(2.0 * std::numbers::pi * t * cfg.tr / period + phase);
        }
      }
      std::copy(series.data(), series.data() + T, values.begin() + (static_cast<std::size_t>(s) * V + v) * T);
    }
    truth.beta.push_back(std::move(beta));
  }

  truth.signal = truth.mean_beta * truth.predictors.transpose();
  truth.consensus_active.resize(V);
  for (int v = 0; v < V; ++v) truth.consensus_active[v] = cfg.mu > 0.0 && dist[v] <= cfg.radius_mean;

  return {BoldDataset(S, T, cfg.tr, std::move(voxels), std::move(values)), std::move(truth)};
}

std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  return derive_seed(seed, static_cast<std::uint64_t>(replicate));
}

std::vector<Replicate> replicate_study(const SimConfig& cfg, int replicates, int jobs) {
  if (replicates < 1) throw ConfigError("simulate: replicates must be at least 1");
  cfg.validate();
  std::vector<Replicate> out(replicates);
  parallel_for(static_cast<std::size_t>(replicates), jobs, [&](std::size_t r) {
    SimConfig c = cfg;
    c.seed = replicate_seed(cfg.seed, static_cast<int>(r));
    out[r] = Replicate{static_cast<int>(r), c.seed, simulate_dataset(c)};
  });
  return out;
}

std::vector<SimSetting> settings_grid(const SimConfig& base, const std::vector<double>& mus,
                                      const std::vector<int>& subjects) {
  if (mus.empty() || subjects.empty()) throw ConfigError("simulate: settings grid must be nonempty");
  std::vector<SimSetting> out;
  for (double mu : mus) {
    for (int s : subjects) {
      SimSetting set;
      char buf[64];
      std::snprintf(buf, sizeof buf, "mu_%g_S_%d", mu, s);
      set.name = buf;
      set.mu = mu;
      set.subjects = s;
      set.config = base;
      set.config.mu = mu;
      set.config.subjects = s;
      set.config.seed = derive_seed(base.seed, static_cast<std::uint64_t>(out.size()));
      set.config.validate();
      out.push_back(std::move(set));
    }
  }
  return out;
}

}  // namespace bnr
