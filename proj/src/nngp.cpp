#include "bnr/nngp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "bnr/error.hpp"

namespace bnr {

void KernelConfig::validate() const {
  if (!(lengthscale > 0.0) || !std::isfinite(lengthscale)) throw ConfigError("kernel lengthscale must be positive");
}

double sq_exp_kernel(const KernelConfig& cfg, double x, double y) {
  const double d = (x - y) / cfg.lengthscale;
  return KernelConfig::variance * std::exp(-0.5 * d * d);
}

NngpGraph build_graph(std::span<const double> times, int m) {
  if (m < 1) throw ConfigError("nngp: neighbor count must be at least 1");
  NngpGraph g;
  g.nodes.assign(times.begin(), times.end());
  g.m = m;
  for (std::size_t i = 1; i < g.nodes.size(); ++i) {
    if (g.nodes[i] == g.nodes[i - 1]) {
      throw DataError("nngp: duplicate time " + std::to_string(g.nodes[i]) + " makes the kernel matrix singular");
    }
    if (!(g.nodes[i] > g.nodes[i - 1])) throw DataError("nngp: times must be strictly increasing");
  }
  // Sorted nodes: the nearest predecessors are always the immediately preceding ones.
  g.neighbors.resize(g.nodes.size());
  for (int i = 0; i < g.size(); ++i) {
    const int lo = std::max(0, i - m);
    for (int j = lo; j < i; ++j) g.neighbors[i].push_back(j);
  }
  if (g.nodes.size() >= 2) {
    const double step = g.nodes[1] - g.nodes[0];
    bool regular = true;
    for (std::size_t i = 2; i < g.nodes.size() && regular; ++i) {
      regular = std::abs((g.nodes[i] - g.nodes[i - 1]) - step) <= 1e-12 * std::max(1.0, std::abs(g.nodes[i]));
    }
    if (regular) g.step = step;
  }
  return g;
}

namespace {

bool same_offsets(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::abs(a[i] - b[i]) > tol) return false;
  }
  return true;
}

// Extended precision throughout: s^2 is a difference of nearly equal terms when neighbors are
// strongly correlated.
using Real = long double;

}  // namespace

WhiteningFactors whiten_factors(const NngpGraph& graph, const KernelConfig& cfg, bool with_gradient) {
  cfg.validate();
  const int n = graph.size();
  WhiteningFactors wf;
  wf.slot.resize(n);
  wf.has_gradient = with_gradient;
  const double inv_rho2 = 1.0 / (cfg.lengthscale * cfg.lengthscale);

  // On a regular grid every kernel entry is one of m + 1 lag values.
  std::vector<Real> lag_k;
  const Real rho = cfg.lengthscale;
  if (graph.step > 0.0) {
    lag_k.resize(graph.m + 1);
    for (int d = 0; d <= graph.m; ++d) {
      const Real x = d * static_cast<Real>(graph.step) / rho;
      lag_k[d] = KernelConfig::variance * std::exp(-Real(0.5) * x * x);
    }
  }
  auto kernel_ld = [&](int p, int q) -> Real {
    const auto d = static_cast<std::size_t>(std::abs(p - q));
    if (d < lag_k.size()) return lag_k[d];
    const Real x = (static_cast<Real>(graph.nodes[p]) - graph.nodes[q]) / rho;
    return KernelConfig::variance * std::exp(-Real(0.5) * x * x);
  };

  if (graph.step > 0.0 && n > 0) {
    // Node i conditions on the min(i, m) nodes just before it, so its augmented kernel block is
    // the leading block of one Toeplitz matrix; a single Cholesky factor serves every slot.
    using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const int M = std::min(graph.m, n - 1) + 1;
    Mat toe(M, M);
    for (int a = 0; a < M; ++a)
      for (int b = 0; b < M; ++b) toe(a, b) = lag_k[std::abs(a - b)];
    Mat jit = toe;
    jit.diagonal().array() += static_cast<Real>(kNngpJitter);
    const Eigen::LLT<Mat> llt(jit);
    if (llt.info() != Eigen::Success) throw NumericalError("nngp: kernel block not positive definite", "nngp", M - 1);
    const Mat L = llt.matrixL();
    ++wf.factorizations;
    wf.flops += static_cast<std::size_t>(M) * M * M / 3;
    for (int k = 0; k < M; ++k) {
      const Real s = L(k, k);
      if (!(s > Real(0))) throw NumericalError("nngp: non-positive conditional variance", "nngp", k);
      const auto Lk = L.topLeftCorner(k, k).triangularView<Eigen::Lower>();
      const Vec b = Lk.transpose().solve(L.row(k).head(k).transpose());
      wf.coef.push_back(b.cast<double>());
      wf.sd.push_back(static_cast<double>(s));
      if (with_gradient) {
        // d k(d)/d log rho = k(d) d^2 / rho^2
        const Real c = static_cast<Real>(graph.step) * static_cast<Real>(graph.step) / (rho * rho);
        Mat dkn(k, k);
        Vec dkv(k);
        for (int a = 0; a < k; ++a) {
          dkv[a] = toe(k, a) * c * Real((k - a) * (k - a));
          for (int e = 0; e < k; ++e) dkn(a, e) = toe(a, e) * c * Real((a - e) * (a - e));
        }
        const Vec dkn_b = dkn * b;
        const Vec rhs = dkv - dkn_b;
        wf.dcoef.push_back(Lk.transpose().solve(Lk.solve(rhs)).cast<double>());
        const Real ds2 = -Real(2) * dkv.dot(b) + b.dot(dkn_b);
        wf.dsd.push_back(static_cast<double>(ds2 / (Real(2) * s)));
        wf.flops += 5 * static_cast<std::size_t>(k) * k;
      }
      wf.flops += 2 * static_cast<std::size_t>(k) * k;
    }
    for (int i = 0; i < n; ++i) wf.slot[i] = std::min(i, M - 1);
    return wf;
  }

  std::vector<double> offsets, cached_offsets;
  const double scale = graph.nodes.empty() ? 1.0 : std::max(1.0, std::abs(graph.nodes.back()));
  const double tol = 64.0 * std::numeric_limits<double>::epsilon() * scale;

  for (int i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors[i];
    const int k = static_cast<int>(nb.size());
    offsets.resize(k);
    for (int a = 0; a < k; ++a) offsets[a] = graph.nodes[i] - graph.nodes[nb[a]];

    if (!wf.coef.empty() && same_offsets(offsets, cached_offsets, tol)) {
      wf.slot[i] = static_cast<int>(wf.coef.size()) - 1;
      continue;
    }
    wf.slot[i] = static_cast<int>(wf.coef.size());

    if (k == 0) {
      wf.coef.emplace_back(0);
      wf.sd.push_back(std::sqrt(KernelConfig::variance + kNngpJitter));
      if (with_gradient) {
        wf.dcoef.emplace_back(0);
        wf.dsd.push_back(0.0);
      }
    } else {
      using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
      using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
      Mat kn(k, k);
      Vec kv(k);
      for (int a = 0; a < k; ++a) {
        kv[a] = kernel_ld(i, nb[a]);
        for (int b = 0; b <= a; ++b) {
          const Real v = kernel_ld(nb[a], nb[b]);
          kn(a, b) = v;
          kn(b, a) = v;
        }
      }
      Mat kn_jit = kn;
      kn_jit.diagonal().array() += static_cast<Real>(kNngpJitter);
      Eigen::LLT<Mat> llt(kn_jit);
      if (llt.info() != Eigen::Success) throw NumericalError("nngp: neighbor block not positive definite", "nngp", i);
      const Vec u = llt.matrixL().solve(kv);
      const Vec b = llt.matrixU().solve(u);
      const Real s2 = static_cast<Real>(KernelConfig::variance) + kNngpJitter - u.squaredNorm();
      if (!(s2 > Real(0))) {
        throw NumericalError("nngp: non-positive conditional variance at node " + std::to_string(i), "nngp", i);
      }
      const Real s = std::sqrt(s2);
      wf.sd.push_back(static_cast<double>(s));
      if (with_gradient) {
        // d k(d)/d log rho = k(d) d^2 / rho^2
        const Real ir2 = inv_rho2;
        Mat dkn(k, k);
        Vec dkv(k);
        for (int a = 0; a < k; ++a) {
          const Real da = offsets[a];
          dkv[a] = kv[a] * da * da * ir2;
          for (int c = 0; c <= a; ++c) {
            const Real d = static_cast<Real>(graph.nodes[nb[a]]) - graph.nodes[nb[c]];
            dkn(a, c) = kn(a, c) * d * d * ir2;
            dkn(c, a) = dkn(a, c);
          }
        }
        const Vec dkn_b = dkn * b;
        wf.dcoef.push_back(llt.solve(dkv - dkn_b).cast<double>());
        const Real ds2 = -Real(2.0) * dkv.dot(b) + b.dot(dkn_b);
        wf.dsd.push_back(static_cast<double>(ds2 / (Real(2.0) * s)));
        wf.flops += static_cast<std::size_t>(k) * k * k + 6 * static_cast<std::size_t>(k) * k;
      }
      wf.coef.push_back(b.cast<double>());
      wf.flops += static_cast<std::size_t>(k) * k * k / 3 + 3 * static_cast<std::size_t>(k) * k;
    }
    ++wf.factorizations;
    cached_offsets = offsets;
  }
  return wf;
}


double nngp_logpdf(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& w,
                   Eigen::VectorXd* grad_w, double* grad_log_rho) {
  const int n = graph.size();
  if (w.size() != n) throw DataError("nngp_logpdf: vector length does not match the graph");
  if (grad_log_rho && !factors.has_gradient) throw Error("nngp_logpdf: factors lack lengthscale derivatives");
  constexpr double half_log_2pi = 0.91893853320467274178;
  double lp = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors[i];
    const auto& b = factors.b(i);
    double mean = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a) mean += b[a] * w[nb[a]];
    const double s = factors.s(i);
    const double r = w[i] - mean;
    lp += -half_log_2pi - std::log(s) - 0.5 * r * r / (s * s);
    const double g = -r / (s * s);
    if (grad_w) {
      (*grad_w)[i] += g;
      for (std::size_t a = 0; a < nb.size(); ++a) (*grad_w)[nb[a]] -= g * b[a];
    }
    if (grad_log_rho) {
      const auto& db = factors.db(i);
      double dmean = 0.0;
      for (std::size_t a = 0; a < nb.size(); ++a) dmean += db[a] * w[nb[a]];
      const double ds = factors.ds(i);
      *grad_log_rho += -ds / s + r * r / (s * s * s) * ds + r / (s * s) * dmean;
    }
  }
  return lp;
}

double nngp_logpdf(const NngpGraph& graph, const KernelConfig& cfg, const Eigen::VectorXd& w) {
  return nngp_logpdf(graph, whiten_factors(graph, cfg), w);
}

Eigen::VectorXd whiten_to_f(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& z) {
  const int n = graph.size();
  if (z.size() != n) throw DataError("whiten_to_f: vector length does not match the graph");
  Eigen::VectorXd f(n);
  for (int i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors[i];
    const auto& b = factors.b(i);
    double mean = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a) mean += b[a] * f[nb[a]];
    f[i] = mean + factors.s(i) * z[i];
  }
  return f;
}

Eigen::VectorXd whiten_to_f(const NngpGraph& graph, const KernelConfig& cfg, const Eigen::VectorXd& z) {
  return whiten_to_f(graph, whiten_factors(graph, cfg), z);
}

Eigen::VectorXd unwhiten(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& f) {
  const int n = graph.size();
  if (f.size() != n) throw DataError("unwhiten: vector length does not match the graph");
  Eigen::VectorXd z(n);
  for (int i = 0; i < n; ++i) {
    const auto& nb = graph.neighbors[i];
    const auto& b = factors.b(i);
    double mean = 0.0;
    for (std::size_t a = 0; a < nb.size(); ++a) mean += b[a] * f[nb[a]];
    z[i] = (f[i] - mean) / factors.s(i);
  }
  return z;
}

void whiten_backprop(const NngpGraph& graph, const WhiteningFactors& factors, const Eigen::VectorXd& z,
                     const Eigen::VectorXd& f, const Eigen::VectorXd& grad_f, Eigen::VectorXd& grad_z,
                     double* grad_log_rho) {
  if (grad_log_rho && !factors.has_gradient) throw Error("whiten_backprop: factors lack lengthscale derivatives");
  const int n = graph.size();
  Eigen::VectorXd adj = grad_f;
  double g_rho = 0.0;
  for (int i = n - 1; i >= 0; --i) {
    const double a = adj[i];
    const auto& nb = graph.neighbors[i];
    const auto& b = factors.b(i);
    grad_z[i] += factors.s(i) * a;
    for (std::size_t j = 0; j < nb.size(); ++j) adj[nb[j]] += b[j] * a;
    if (grad_log_rho) {
      const auto& db = factors.db(i);
      double dmean = 0.0;
      for (std::size_t j = 0; j < nb.size(); ++j) dmean += db[j] * f[nb[j]];
      g_rho += a * (dmean + factors.ds(i) * z[i]);
    }
  }
  if (grad_log_rho) *grad_log_rho += g_rho;
}

GpPrediction predict(const NngpGraph& graph, const KernelConfig& cfg, const Eigen::VectorXd& f_obs,
                     std::span<const double> t_new) {
  cfg.validate();
  const int n = graph.size();
  if (f_obs.size() != n) throw DataError("predict: observed vector length does not match the graph");
  GpPrediction out;
  out.mean.resize(static_cast<Eigen::Index>(t_new.size()));
  out.sd.resize(static_cast<Eigen::Index>(t_new.size()));
  const int m = std::min(graph.m, n);
  std::vector<int> nb;
  for (std::size_t q = 0; q < t_new.size(); ++q) {
    const double t = t_new[q];
    nb.clear();
    int hi = static_cast<int>(std::lower_bound(graph.nodes.begin(), graph.nodes.end(), t) - graph.nodes.begin());
    int lo = hi - 1;
    while (static_cast<int>(nb.size()) < m) {
      const bool take_lo =
          lo >= 0 && (hi >= n || std::abs(t - graph.nodes[lo]) <= std::abs(graph.nodes[hi] - t));
      nb.push_back(take_lo ? lo-- : hi++);
    }
    std::sort(nb.begin(), nb.end());
    const int k = static_cast<int>(nb.size());
    if (k == 0) {
      out.mean[q] = 0.0;
      out.sd[q] = std::sqrt(KernelConfig::variance + kNngpJitter);
      continue;
    }
    Eigen::MatrixXd kn(k, k);
    Eigen::VectorXd kv(k), fn(k);
    for (int a = 0; a < k; ++a) {
      kv[a] = sq_exp_kernel(cfg, t, graph.nodes[nb[a]]);
      fn[a] = f_obs[nb[a]];
      for (int b = 0; b < k; ++b) kn(a, b) = sq_exp_kernel(cfg, graph.nodes[nb[a]], graph.nodes[nb[b]]);
    }
    kn.diagonal().array() += kNngpJitter;
    Eigen::LLT<Eigen::MatrixXd> llt(kn);
    const Eigen::VectorXd u = llt.matrixL().solve(kv);
    const Eigen::VectorXd b = llt.matrixU().solve(u);
    out.mean[q] = b.dot(fn);
    out.sd[q] = std::sqrt(std::max(0.0, KernelConfig::variance + kNngpJitter - u.squaredNorm()));
  }
  return out;
}

}  // namespace bnr
