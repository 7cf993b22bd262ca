#include "bnr/sampler.hpp"

#include <cmath>
#include <limits>

#include "bnr/error.hpp"
#include "bnr/parallel.hpp"
#include "bnr/rng.hpp"

namespace bnr {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp(double a, double b) {
  if (a == -kInf) return b;
  if (b == -kInf) return a;
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

struct PhasePoint {
  Eigen::VectorXd q;
  Eigen::VectorXd p;
  Eigen::VectorXd grad;
  double lp = -kInf;
};

// Dual averaging of log step size towards a target acceptance statistic.
class StepSizeAdapter {
 public:
  StepSizeAdapter(double target) : delta_(target) {}

  void restart(double step) {
    mu_ = std::log(10.0 * step);
    counter_ = 0;
    s_bar_ = 0.0;
    x_bar_ = 0.0;
  }

  double learn(double accept_stat) {
    ++counter_;
    accept_stat = std::min(1.0, accept_stat);
    const double eta = 1.0 / (counter_ + t0_);
    s_bar_ = (1.0 - eta) * s_bar_ + eta * (delta_ - accept_stat);
    const double x = mu_ - s_bar_ * std::sqrt(static_cast<double>(counter_)) / gamma_;
    const double x_eta = std::pow(static_cast<double>(counter_), -kappa_);
    x_bar_ = (1.0 - x_eta) * x_bar_ + x_eta * x;
    return std::exp(x);
  }

  double final_step() const { return std::exp(x_bar_); }

 private:
  double delta_;
  double mu_ = 0.0;
  long counter_ = 0;
  double s_bar_ = 0.0;
  double x_bar_ = 0.0;
  static constexpr double gamma_ = 0.05;
  static constexpr double t0_ = 10.0;
  static constexpr double kappa_ = 0.75;
};

// Fast / slow (doubling) / fast warmup windows for the diagonal metric.
class MetricAdapter {
 public:
  MetricAdapter(int warmup, int dim) : warmup_(warmup), mean_(Eigen::VectorXd::Zero(dim)), m2_(mean_) {
    if (warmup < 20) {
      enabled_ = false;
      return;
    }
    if (init_buffer_ + base_window_ + term_buffer_ > warmup) {
      init_buffer_ = static_cast<int>(0.15 * warmup);
      term_buffer_ = static_cast<int>(0.1 * warmup);
      base_window_ = warmup - (init_buffer_ + term_buffer_);
    }
    window_size_ = base_window_;
    next_window_ = init_buffer_ + base_window_ - 1;
  }

  bool enabled() const { return enabled_; }

  // Returns true when a window closed and inv_metric was updated.
  bool learn(const Eigen::VectorXd& q, Eigen::VectorXd& inv_metric) {
    if (!enabled_) return false;
    if (in_window()) {
      ++n_;
      const Eigen::VectorXd delta = q - mean_;
      mean_ += delta / n_;
      m2_ += delta.cwiseProduct(q - mean_);
    }
    if (counter_ == next_window_ && counter_ != warmup_) {
      compute_next_window();
      const double n = static_cast<double>(n_);
      const Eigen::VectorXd var = m2_ / (n - 1.0);
      inv_metric = (n / (n + 5.0)) * var.array() + 1e-3 * (5.0 / (n + 5.0));
      n_ = 0;
      mean_.setZero();
      m2_.setZero();
      ++counter_;
      return true;
    }
    ++counter_;
    return false;
  }

 private:
  bool in_window() const {
    return counter_ >= init_buffer_ && counter_ < warmup_ - term_buffer_ && counter_ != warmup_;
  }

  void compute_next_window() {
    if (next_window_ == warmup_ - term_buffer_ - 1) return;
    window_size_ *= 2;
    next_window_ = counter_ + window_size_;
    if (next_window_ != warmup_ - term_buffer_ - 1) {
      const int boundary = next_window_ + 2 * window_size_;
      if (boundary >= warmup_ - term_buffer_) next_window_ = warmup_ - term_buffer_ - 1;
    }
  }

  int warmup_;
  bool enabled_ = true;
  int init_buffer_ = 75;
  int term_buffer_ = 50;
  int base_window_ = 25;
  int window_size_ = 25;
  int next_window_ = 0;
  int counter_ = 0;
  long n_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

struct Transition {
  int depth = 0;
  int n_leapfrog = 0;
  double accept_stat = 0.0;
  bool divergent = false;
  double energy = 0.0;
  double energy_error = 0.0;
  double max_energy_error = 0.0;
};

class NutsChain {
 public:
  NutsChain(const LogDensityFn& fn, int dim, const SamplerConfig& cfg, Rng rng)
      : fn_(fn), dim_(dim), cfg_(cfg), rng_(std::move(rng)), inv_metric_(Eigen::VectorXd::Ones(dim)) {}

  bool evaluate(PhasePoint& z) {
    try {
      z.lp = fn_(z.q, z.grad);
    } catch (const NumericalError&) {
      z.lp = -kInf;
      return false;
    }
    if (!std::isfinite(z.lp) || !z.grad.allFinite()) {
      z.lp = -kInf;
      return false;
    }
    return true;
  }

  void initialize(const std::optional<Eigen::VectorXd>& init) {
    z_.grad.resize(dim_);
    z_.p.resize(dim_);
    if (init) {
      if (init->size() != dim_) throw ConfigError("sampler: initial point has the wrong dimension");
      for (int attempt = 0; attempt < cfg_.init_tries; ++attempt) {
        z_.q = *init;
        if (cfg_.init_jitter > 0.0) {
          for (int i = 0; i < dim_; ++i) z_.q[i] += uniform(rng_, -cfg_.init_jitter, cfg_.init_jitter);
        }
        if (evaluate(z_)) return;
        if (cfg_.init_jitter <= 0.0) break;
      }
      check_gradient_or_throw();
      return;
    }
    for (int attempt = 0; attempt < cfg_.init_tries; ++attempt) {
      z_.q.resize(dim_);
      for (int i = 0; i < dim_; ++i) z_.q[i] = uniform(rng_, -cfg_.init_radius, cfg_.init_radius);
      if (evaluate(z_)) return;
    }
    check_gradient_or_throw();
  }

  void check_gradient_or_throw() {
    Eigen::VectorXd g(dim_);
    double lp;
    try {
      lp = fn_(z_.q, g);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string("sampler: no finite initial density: ") + e.what(), e.block(), e.index());
    }
    if (!std::isfinite(lp)) throw NumericalError("sampler: no finite initial density", "init");
    for (int i = 0; i < dim_; ++i) {
      if (!std::isfinite(g[i])) {
        throw NumericalError("sampler: non-finite gradient at coordinate " + std::to_string(i), "gradient", i);
      }
    }
  }

  ChainResult run() {
    ChainResult out;
    out.draws.resize(cfg_.draws, dim_);
    StepSizeAdapter step_adapter(cfg_.target_accept);
    MetricAdapter metric_adapter(cfg_.warmup, dim_);
    const bool adapt = cfg_.warmup > 0;

    step_ = 1.0;
    init_stepsize();
    step_adapter.restart(step_);

    int warm_div = 0;
    for (int it = 0; it < cfg_.warmup; ++it) {
      const Transition tr = transition();
      if (tr.divergent) ++warm_div;
      if (adapt && metric_adapter.enabled()) {
        step_ = step_adapter.learn(tr.accept_stat);
        if (metric_adapter.learn(z_.q, inv_metric_)) {
          init_stepsize();
          step_adapter.restart(step_);
        }
      }
    }
    if (cfg_.warmup > 0 && metric_adapter.enabled()) step_ = step_adapter.final_step();
    if (cfg_.warmup > 0 && warm_div == cfg_.warmup) {
      throw NumericalError("sampler: every warmup transition diverged", "warmup");
    }
    out.warmup_divergences = warm_div;

    for (int it = 0; it < cfg_.draws; ++it) {
      const Transition tr = transition();
      out.draws.row(it) = z_.q.transpose();
      out.log_density.push_back(z_.lp);
      out.divergent.push_back(tr.divergent);
      out.tree_depth.push_back(tr.depth);
      out.n_leapfrog.push_back(tr.n_leapfrog);
      out.accept_stat.push_back(tr.accept_stat);
      out.energy.push_back(tr.energy);
      out.energy_error.push_back(tr.energy_error);
      out.max_energy_error.push_back(tr.max_energy_error);
    }
    out.step_size = step_;
    out.inv_metric = inv_metric_;
    return out;
  }

 private:
  double hamiltonian(const PhasePoint& z) const {
    if (!std::isfinite(z.lp)) return kInf;
    return -z.lp + 0.5 * z.p.cwiseProduct(z.p).dot(inv_metric_);
  }

  void sample_momentum(PhasePoint& z) {
    for (int i = 0; i < dim_; ++i) z.p[i] = std_normal(rng_) / std::sqrt(inv_metric_[i]);
  }

  void leapfrog(PhasePoint& z, double eps) {
    z.p += 0.5 * eps * z.grad;
    z.q += eps * inv_metric_.cwiseProduct(z.p);
    if (evaluate(z)) z.p += 0.5 * eps * z.grad;
  }

  void init_stepsize() {
    const PhasePoint start = z_;
    sample_momentum(z_);
    double h0 = hamiltonian(z_);
    leapfrog(z_, step_);
    double h = hamiltonian(z_);
    double delta_h = h0 - h;
    const int direction = delta_h > std::log(0.8) ? 1 : -1;
    for (int guard = 0; guard < 200; ++guard) {
      z_ = start;
      sample_momentum(z_);
      h0 = hamiltonian(z_);
      leapfrog(z_, step_);
      h = hamiltonian(z_);
      delta_h = h0 - h;
      if (direction == 1 && !(delta_h > std::log(0.8))) break;
      if (direction == -1 && !(delta_h < std::log(0.8))) break;
      step_ = direction == 1 ? 2.0 * step_ : 0.5 * step_;
      if (step_ > 1e7) throw NumericalError("sampler: step size diverged to infinity; posterior may be improper", "step");
      if (step_ == 0.0) throw NumericalError("sampler: step size collapsed to zero", "step");
    }
    z_ = start;
  }

  static bool criterion(const Eigen::VectorXd& p_sharp_minus, const Eigen::VectorXd& p_sharp_plus,
                        const Eigen::VectorXd& rho) {
    return p_sharp_plus.dot(rho) > 0 && p_sharp_minus.dot(rho) > 0;
  }

  struct TreeStats {
    int n_leapfrog = 0;
    double sum_metro_prob = 0.0;
    double max_dh = -kInf;
    bool divergent = false;
  };

  bool build_tree(int depth, PhasePoint& z, PhasePoint& propose, Eigen::VectorXd& p_sharp_beg,
                  Eigen::VectorXd& p_sharp_end, Eigen::VectorXd& rho, Eigen::VectorXd& p_beg, Eigen::VectorXd& p_end,
                  double h0, double sign, double& log_sum_weight, TreeStats& stats) {
    if (depth == 0) {
      leapfrog(z, sign * step_);
      ++stats.n_leapfrog;
      double h = hamiltonian(z);
      if (std::isnan(h)) h = kInf;
      stats.max_dh = std::max(stats.max_dh, h - h0);
      if (h - h0 > cfg_.max_energy_error) stats.divergent = true;
      log_sum_weight = log_sum_exp(log_sum_weight, h0 - h);
      stats.sum_metro_prob += h0 - h > 0 ? 1.0 : std::exp(h0 - h);
      propose = z;
      p_sharp_beg = inv_metric_.cwiseProduct(z.p);
      p_sharp_end = p_sharp_beg;
      rho += z.p;
      p_beg = z.p;
      p_end = p_beg;
      return !stats.divergent;
    }

    Eigen::VectorXd p_sharp_init_end(dim_), p_init_end(dim_);
    Eigen::VectorXd rho_init = Eigen::VectorXd::Zero(dim_);
    double lsw_init = -kInf;
    if (!build_tree(depth - 1, z, propose, p_sharp_beg, p_sharp_init_end, rho_init, p_beg, p_init_end, h0, sign,
                    lsw_init, stats)) {
      return false;
    }

    PhasePoint propose_final;
    Eigen::VectorXd p_sharp_final_beg(dim_), p_final_beg(dim_);
    Eigen::VectorXd rho_final = Eigen::VectorXd::Zero(dim_);
    double lsw_final = -kInf;
    if (!build_tree(depth - 1, z, propose_final, p_sharp_final_beg, p_sharp_end, rho_final, p_final_beg, p_end, h0,
                    sign, lsw_final, stats)) {
      return false;
    }

    const double lsw_subtree = log_sum_exp(lsw_init, lsw_final);
    log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);
    if (lsw_final > lsw_subtree || uniform01(rng_) < std::exp(lsw_final - lsw_subtree)) {
      propose = std::move(propose_final);
    }

    const Eigen::VectorXd rho_subtree = rho_init + rho_final;
    rho += rho_subtree;
    bool persist = criterion(p_sharp_beg, p_sharp_end, rho_subtree);
    persist = persist && criterion(p_sharp_beg, p_sharp_final_beg, rho_init + p_final_beg);
    persist = persist && criterion(p_sharp_init_end, p_sharp_end, rho_final + p_init_end);
    return persist;
  }

  Transition transition() {
    sample_momentum(z_);
    const double h0 = hamiltonian(z_);

    PhasePoint fwd = z_, bck = z_;
    const Eigen::VectorXd p_sharp0 = inv_metric_.cwiseProduct(z_.p);
    Eigen::VectorXd p_fwd_fwd = z_.p, p_sharp_fwd_fwd = p_sharp0;
    Eigen::VectorXd p_fwd_bck = z_.p, p_sharp_fwd_bck = p_sharp0;
    Eigen::VectorXd p_bck_fwd = z_.p, p_sharp_bck_fwd = p_sharp0;
    Eigen::VectorXd p_bck_bck = z_.p, p_sharp_bck_bck = p_sharp0;
    Eigen::VectorXd rho = z_.p;

    PhasePoint sample = z_;
    double log_sum_weight = 0.0;
    TreeStats stats;
    Transition tr;

    while (tr.depth < cfg_.max_depth) {
      Eigen::VectorXd rho_fwd = Eigen::VectorXd::Zero(dim_), rho_bck = Eigen::VectorXd::Zero(dim_);
      double lsw_subtree = -kInf;
      PhasePoint propose;
      bool valid;
      if (uniform01(rng_) > 0.5) {
        rho_bck = rho;
        p_bck_fwd = p_fwd_fwd;
        p_sharp_bck_fwd = p_sharp_fwd_fwd;
        valid = build_tree(tr.depth, fwd, propose, p_sharp_fwd_bck, p_sharp_fwd_fwd, rho_fwd, p_fwd_bck, p_fwd_fwd,
                           h0, 1.0, lsw_subtree, stats);
      } else {
        rho_fwd = rho;
        p_fwd_bck = p_bck_bck;
        p_sharp_fwd_bck = p_sharp_bck_bck;
        valid = build_tree(tr.depth, bck, propose, p_sharp_bck_fwd, p_sharp_bck_bck, rho_bck, p_bck_fwd, p_bck_bck,
                           h0, -1.0, lsw_subtree, stats);
      }
      if (!valid) break;
      ++tr.depth;

      if (lsw_subtree > log_sum_weight || uniform01(rng_) < std::exp(lsw_subtree - log_sum_weight)) {
        sample = std::move(propose);
      }
      log_sum_weight = log_sum_exp(log_sum_weight, lsw_subtree);

      rho = rho_bck + rho_fwd;
      bool persist = criterion(p_sharp_bck_bck, p_sharp_fwd_fwd, rho);
      persist = persist && criterion(p_sharp_bck_bck, p_sharp_fwd_bck, rho_bck + p_fwd_bck);
      persist = persist && criterion(p_sharp_bck_fwd, p_sharp_fwd_fwd, rho_fwd + p_bck_fwd);
      if (!persist) break;
    }

    tr.n_leapfrog = stats.n_leapfrog;
    tr.divergent = stats.divergent;
    tr.accept_stat = stats.n_leapfrog > 0 ? stats.sum_metro_prob / stats.n_leapfrog : 0.0;
    tr.max_energy_error = stats.max_dh;
    z_ = std::move(sample);
    tr.energy = hamiltonian(z_);
    tr.energy_error = tr.energy - h0;
    return tr;
  }

  const LogDensityFn& fn_;
  int dim_;
  const SamplerConfig& cfg_;
  Rng rng_;
  Eigen::VectorXd inv_metric_;
  double step_ = 1.0;
  PhasePoint z_;
};

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw ConfigError("sampler.chains must be at least 1");
  if (draws < 1) throw ConfigError("sampler.draws must be at least 1");
  if (warmup < 0) throw ConfigError("sampler.warmup must be nonnegative");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("sampler.target_accept must lie in (0, 1)");
  if (max_depth < 1) throw ConfigError("sampler.max_depth must be at least 1");
  if (!(init_radius > 0.0)) throw ConfigError("sampler.init_radius must be positive");
  if (init_jitter < 0.0) throw ConfigError("sampler.init_jitter must be nonnegative");
}

std::vector<Eigen::VectorXd> PosteriorDraws::parameter(int j) const {
  std::vector<Eigen::VectorXd> out;
  out.reserve(chains.size());
  for (const auto& c : chains) out.emplace_back(c.draws.col(j));
  return out;
}

std::size_t PosteriorDraws::divergences() const {
  std::size_t n = 0;
  for (const auto& c : chains)
    for (bool d : c.divergent) n += d ? 1 : 0;
  return n;
}

double PosteriorDraws::depth_saturation(int max_depth) const {
  std::size_t hit = 0, total = 0;
  for (const auto& c : chains) {
    for (int d : c.tree_depth) {
      hit += d >= max_depth ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / total : 0.0;
}

PosteriorDraws nuts_sample(const LogDensityFn& log_density, int dim, const SamplerConfig& cfg,
                           const std::optional<Eigen::VectorXd>& init, std::vector<std::string> names) {
  cfg.validate();
  if (dim < 1) throw ConfigError("sampler: dimension must be positive");
  PosteriorDraws out;
  if (names.empty()) {
    for (int i = 0; i < dim; ++i) names.push_back("x[" + std::to_string(i) + "]");
  }
  out.names = std::move(names);
  out.chains.resize(cfg.chains);
  parallel_for(static_cast<std::size_t>(cfg.chains), cfg.jobs, [&](std::size_t c) {
    NutsChain chain(log_density, dim, cfg, make_rng(derive_seed(cfg.seed, c)));
    chain.initialize(init);
    out.chains[c] = chain.run();
  });
  return out;
}

}  // namespace bnr
