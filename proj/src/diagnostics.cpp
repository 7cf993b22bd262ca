#include "bnr/diagnostics.hpp"

#include <algorithm>
#include <boost/math/special_functions/erf.hpp>
#include <cmath>
#include <limits>
#include <numeric>
#include <unsupported/Eigen/FFT>

#include "bnr/error.hpp"

namespace bnr {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Eigen::VectorXd> split_chains(const std::vector<Eigen::VectorXd>& chains) {
  if (chains.empty()) throw DataError("diagnostics: no chains");
  const Eigen::Index n = chains.front().size();
  for (const auto& c : chains) {
    if (c.size() != n) throw DataError("diagnostics: chains differ in length");
  }
  if (n < 4) throw DataError("diagnostics: need at least four draws per chain");
  const Eigen::Index half = n / 2;
  std::vector<Eigen::VectorXd> out;
  for (const auto& c : chains) {
    // Odd lengths drop the middle draw.
    out.emplace_back(c.head(half));
    out.emplace_back(c.tail(half));
  }
  return out;
}

bool is_constant(const std::vector<Eigen::VectorXd>& chains) {
  const double first = chains.front()[0];
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.size(); ++i)
      if (c[i] != first) return false;
  return true;
}

double inv_normal_cdf(double p) { return -std::sqrt(2.0) * boost::math::erfc_inv(2.0 * p); }

// Pooled ranks (average for ties) mapped through the normal quantile function.
std::vector<Eigen::VectorXd> rank_normalize(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<std::pair<double, std::size_t>> all;
  std::size_t total = 0;
  for (const auto& c : chains) total += c.size();
  all.reserve(total);
  std::size_t k = 0;
  for (const auto& c : chains)
    for (Eigen::Index i = 0; i < c.size(); ++i) all.emplace_back(c[i], k++);
  std::sort(all.begin(), all.end());
  std::vector<double> rank(total);
  for (std::size_t i = 0; i < total;) {
    std::size_t j = i;
    while (j + 1 < total && all[j + 1].first == all[i].first) ++j;
    const double r = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t m = i; m <= j; ++m) rank[all[m].second] = r;
    i = j + 1;
  }
  std::vector<Eigen::VectorXd> out;
  k = 0;
  const double s = static_cast<double>(total);
  for (const auto& c : chains) {
    Eigen::VectorXd z(c.size());
    for (Eigen::Index i = 0; i < c.size(); ++i) z[i] = inv_normal_cdf((rank[k++] - 0.375) / (s + 0.25));
    out.push_back(std::move(z));
  }
  return out;
}

double basic_rhat(const std::vector<Eigen::VectorXd>& chains) {
  const double n = static_cast<double>(chains.front().size());
  const double m = static_cast<double>(chains.size());
  Eigen::VectorXd means(chains.size()), vars(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) {
    means[c] = chains[c].mean();
    vars[c] = (chains[c].array() - means[c]).square().sum() / (n - 1.0);
  }
  const double w = vars.mean();
  const double b_over_n = m > 1 ? (means.array() - means.mean()).square().sum() / (m - 1.0) : 0.0;
  if (!(w > 0.0)) return kInf;
  const double var_plus = (n - 1.0) / n * w + b_over_n;
  return std::sqrt(var_plus / w);
}

Eigen::VectorXd autocovariance(const Eigen::VectorXd& x) {
  const Eigen::Index n = x.size();
  Eigen::Index len = 1;
  while (len < 2 * n) len *= 2;
  std::vector<double> padded(len, 0.0);
  const double mean = x.mean();
  for (Eigen::Index i = 0; i < n; ++i) padded[i] = x[i] - mean;
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> freq;
  fft.fwd(freq, padded);
  for (auto& c : freq) c = std::complex<double>(std::norm(c), 0.0);
  std::vector<double> back;
  fft.inv(back, freq);
  Eigen::VectorXd acov(n);
  for (Eigen::Index i = 0; i < n; ++i) acov[i] = back[i] / static_cast<double>(n);
  return acov;
}

// Geyer initial monotone sequence estimator over (already split) chains.
double ess_chains(const std::vector<Eigen::VectorXd>& chains) {
  const std::size_t m = chains.size();
  const Eigen::Index n = chains.front().size();
  std::vector<Eigen::VectorXd> acov(m);
  Eigen::VectorXd means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    acov[c] = autocovariance(chains[c]);
    means[c] = chains[c].mean();
    vars[c] = acov[c][0] * n / (n - 1.0);
  }
  const double mean_var = vars.mean();
  double var_plus = mean_var * (n - 1.0) / n;
  if (m > 1) var_plus += (means.array() - means.mean()).square().sum() / (m - 1.0);
  if (!(var_plus > 0.0)) return std::numeric_limits<double>::quiet_NaN();

  auto mean_acov = [&](Eigen::Index t) {
    double s = 0.0;
    for (std::size_t c = 0; c < m; ++c) s += acov[c][t];
    return s / m;
  };

  Eigen::VectorXd rho = Eigen::VectorXd::Zero(n);
  rho[0] = 1.0;
  double rho_even = 1.0;
  double rho_odd = 1.0 - (mean_var - mean_acov(1)) / var_plus;
  rho[1] = rho_odd;
  Eigen::Index t = 1;
  while (t < n - 5 && rho_even + rho_odd > 0.0) {
    rho_even = 1.0 - (mean_var - mean_acov(t + 1)) / var_plus;
    rho_odd = 1.0 - (mean_var - mean_acov(t + 2)) / var_plus;
    if (rho_even + rho_odd >= 0.0) {
      rho[t + 1] = rho_even;
      rho[t + 2] = rho_odd;
    }
    t += 2;
  }
  const Eigen::Index max_t = t;
  if (rho_even > 0.0) rho[max_t + 1] = rho_even;

  // Enforce a monotone sequence of paired sums.
  t = 1;
  while (t <= max_t - 3) {
    if (rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]) {
      rho[t + 1] = 0.5 * (rho[t - 1] + rho[t]);
      rho[t + 2] = rho[t + 1];
    }
    t += 2;
  }
  const double total = static_cast<double>(m) * n;
  double tau = -1.0 + 2.0 * rho.head(max_t).sum() + rho[max_t];
  tau = std::max(tau, 1.0 / std::log10(total));
  return total / tau;
}

double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

std::vector<double> pooled(const std::vector<Eigen::VectorXd>& chains) {
  std::vector<double> all;
  for (const auto& c : chains) all.insert(all.end(), c.data(), c.data() + c.size());
  return all;
}

}  // namespace

double split_rhat(const std::vector<Eigen::VectorXd>& chains) {
  const auto split = split_chains(chains);
  if (is_constant(split)) return kInf;
  const double bulk = basic_rhat(rank_normalize(split));
  const double med = quantile(pooled(split), 0.5);
  std::vector<Eigen::VectorXd> folded;
  for (const auto& c : split) folded.emplace_back((c.array() - med).abs());
  const double tail = is_constant(folded) ? bulk : basic_rhat(rank_normalize(folded));
  return std::max(bulk, tail);
}

EssResult ess(const std::vector<Eigen::VectorXd>& chains) {
  const auto split = split_chains(chains);
  EssResult r;
  if (is_constant(split)) {
    r.degenerate = true;
    return r;
  }
  r.bulk = ess_chains(rank_normalize(split));
  const auto all = pooled(split);
  double tail = kInf;
  for (double p : {0.05, 0.95}) {
    const double q = quantile(all, p);
    std::vector<Eigen::VectorXd> ind;
    for (const auto& c : split) ind.emplace_back((c.array() <= q).cast<double>());
    if (is_constant(ind)) {
      r.degenerate = true;
      continue;
    }
    tail = std::min(tail, ess_chains(ind));
  }
  r.tail = std::isfinite(tail) ? tail : 0.0;
  if (!std::isfinite(r.bulk)) r.degenerate = true;
  return r;
}

double ess_basic(const std::vector<Eigen::VectorXd>& chains) {
  const auto split = split_chains(chains);
  if (is_constant(split)) return 0.0;
  return ess_chains(split);
}

double Diagnostics::max_rhat() const {
  double m = 0.0;
  for (double r : rhat) m = std::max(m, std::isnan(r) ? kInf : r);
  return m;
}

double Diagnostics::min_ess_bulk() const {
  double m = kInf;
  for (double e : ess_bulk) m = std::min(m, e);
  return m;
}

double Diagnostics::min_ess_tail() const {
  double m = kInf;
  for (double e : ess_tail) m = std::min(m, e);
  return m;
}

bool Diagnostics::converged(double rhat_max, double ess_min) const {
  return max_rhat() < rhat_max && min_ess_bulk() > ess_min && min_ess_tail() > ess_min;
}

Diagnostics diagnose(const std::vector<Eigen::MatrixXd>& chains, std::vector<std::string> names) {
  if (chains.empty()) throw DataError("diagnostics: no chains");
  const Eigen::Index q = chains.front().cols();
  if (static_cast<Eigen::Index>(names.size()) != q) throw DataError("diagnostics: names do not match columns");
  Diagnostics d;
  d.names = std::move(names);
  for (Eigen::Index j = 0; j < q; ++j) {
    std::vector<Eigen::VectorXd> cols;
    for (const auto& c : chains) cols.emplace_back(c.col(j));
    d.rhat.push_back(split_rhat(cols));
    const EssResult e = ess(cols);
    d.ess_bulk.push_back(e.bulk);
    d.ess_tail.push_back(e.tail);
  }
  return d;
}

Diagnostics diagnose(const PosteriorDraws& draws, int max_depth) {
  std::vector<Eigen::MatrixXd> mats;
  for (const auto& c : draws.chains) mats.push_back(c.draws);
  Diagnostics d = diagnose(mats, draws.names);
  d.divergences = draws.divergences();
  d.depth_saturation = draws.depth_saturation(max_depth);
  return d;
}

}  // namespace bnr
