#include "bnr/isc.hpp"

#include <unsupported/Eigen/FFT>
#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <numeric>

#include "bnr/error.hpp"
#include "bnr/parallel.hpp"

namespace bnr {

namespace {

using Cplx = std::complex<double>;

// Zero-mean, unit-norm copies of every series, so a dot product is a Pearson correlation.
std::vector<Eigen::MatrixXd> unit_series(const BoldDataset& data) {
  const int S = data.subjects(), V = data.voxels(), T = data.scans();
  if (T < 3) throw DataError("isc: need at least 3 scans");
  std::vector<Eigen::MatrixXd> out(S, Eigen::MatrixXd(T, V));
  for (int s = 0; s < S; ++s) {
    for (int v = 0; v < V; ++v) {
      auto x = data.series(s, v);
      Eigen::Map<const Eigen::VectorXd> xv(x.data(), T);
      Eigen::VectorXd c = xv.array() - xv.mean();
      const double n = c.norm();
      if (!(n > 1e-12 * std::max(1.0, xv.cwiseAbs().maxCoeff()) * std::sqrt(T))) {
        throw DataError("isc: constant series at subject " + std::to_string(s) + ", voxel " + std::to_string(v));
      }
      out[s].col(v) = c / n;
    }
  }
  return out;
}

double mean_pairwise(const Eigen::VectorXd& sum, int S) {
  return (sum.squaredNorm() - S) / (static_cast<double>(S) * (S - 1));
}

void check_args(const BoldDataset& data, int permutations) {
  if (permutations < 100) throw ConfigError("isc: permutations must be at least 100");
  if (data.subjects() < 2) throw DataError("isc: need at least two subjects");
}

}  // namespace

std::string to_string(NullMethod m) { return m == NullMethod::circular ? "circular" : "phase"; }

NullMethod parse_null_method(const std::string& s) {
  if (s == "circular") return NullMethod::circular;
  if (s == "phase") return NullMethod::phase;
  throw ConfigError("isc: unknown null method '" + s + "' (expected circular or phase)");
}

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw DataError("pearson: size mismatch");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

PairwiseIsc pairwise_isc(const BoldDataset& data) {
  const int S = data.subjects(), V = data.voxels();
  if (S < 2) throw DataError("isc: need at least two subjects");
  const auto u = unit_series(data);
  PairwiseIsc out;
  out.subjects = S;
  out.r.resize(V, S * (S - 1) / 2);
  int p = 0;
  for (int a = 0; a < S; ++a) {
    for (int b = a + 1; b < S; ++b, ++p) {
      out.r.col(p) = (u[a].array() * u[b].array()).colwise().sum().transpose().cwiseMax(-1.0).cwiseMin(1.0);
    }
  }
  out.mean = out.r.rowwise().mean();
  return out;
}

Eigen::VectorXd circular_shift(std::span<const double> x, long offset) {
  const long T = static_cast<long>(x.size());
  Eigen::VectorXd y(T);
  if (T == 0) return y;
  const long k = ((offset % T) + T) % T;
  for (long t = 0; t < T; ++t) y[(t + k) % T] = x[t];
  return y;
}

Eigen::VectorXd phase_scramble(std::span<const double> x, Rng& rng) {
  const int T = static_cast<int>(x.size());
  Eigen::FFT<double> fft;
  std::vector<double> in(x.begin(), x.end());
  std::vector<Cplx> spec;
  fft.fwd(spec, in);
  for (int k = 1; 2 * k < T; ++k) {
    const double theta = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    spec[k] *= std::polar(1.0, theta);
    spec[T - k] = std::conj(spec[k]);
  }
  std::vector<double> out;
  fft.inv(out, spec);
  return Eigen::Map<Eigen::VectorXd>(out.data(), T);
}

Eigen::MatrixXd circular_shift_null(const BoldDataset& data, int permutations, std::uint64_t seed, int jobs) {
  check_args(data, permutations);
  const int S = data.subjects(), V = data.voxels(), T = data.scans();
  const auto u = unit_series(data);
  Eigen::MatrixXd null(V, permutations);
  parallel_for(static_cast<std::size_t>(permutations), jobs, [&](std::size_t p) {
    Rng rng = make_rng(derive_seed(seed, p));
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(T, V);
    for (int s = 0; s < S; ++s) {
      const int k = static_cast<int>(uniform_int(rng, 1, T - 1));
      sum.bottomRows(T - k) += u[s].topRows(T - k);
      sum.topRows(k) += u[s].bottomRows(k);
    }
    for (int v = 0; v < V; ++v) null(v, static_cast<Eigen::Index>(p)) = mean_pairwise(sum.col(v), S);
  });
  return null;
}

Eigen::MatrixXd phase_scramble_null(const BoldDataset& data, int permutations, std::uint64_t seed, int jobs) {
  check_args(data, permutations);
  const int S = data.subjects(), V = data.voxels(), T = data.scans();
  const int K = T / 2 + 1;
  const auto u = unit_series(data);
  // Half spectra of the unit series. Scrambling keeps each series zero-mean with unit norm,
  // and by Parseval the norm of the subject sum can be taken in the frequency domain.
  std::vector<Eigen::MatrixXcd> spectra(S, Eigen::MatrixXcd(K, V));
  {
    Eigen::FFT<double> fft;
    std::vector<double> in(T);
    std::vector<Cplx> out;
    for (int s = 0; s < S; ++s) {
      for (int v = 0; v < V; ++v) {
        std::copy(u[s].col(v).data(), u[s].col(v).data() + T, in.begin());
        fft.fwd(out, in);
        for (int k = 0; k < K; ++k) spectra[s](k, v) = out[k];
      }
    }
  }
  Eigen::VectorXd weight = Eigen::VectorXd::Constant(K, 2.0 / T);
  weight[0] = 1.0 / T;
  if (T % 2 == 0) weight[K - 1] = 1.0 / T;
  Eigen::MatrixXd null(V, permutations);
  parallel_for(static_cast<std::size_t>(permutations), jobs, [&](std::size_t p) {
    Rng rng = make_rng(derive_seed(seed, p));
    Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(K, V);
    Eigen::VectorXcd rot(K);
    for (int s = 0; s < S; ++s) {
      // One phase draw per subject, shared across voxels; DC and Nyquist bins keep theirs.
      rot.setOnes();
      for (int k = 1; 2 * k < T; ++k) rot[k] = std::polar(1.0, uniform(rng, 0.0, 2.0 * std::numbers::pi));
      sum.noalias() += rot.asDiagonal() * spectra[s];
    }
    for (int v = 0; v < V; ++v) {
      const double sq = weight.dot(sum.col(v).cwiseAbs2());
      null(v, static_cast<Eigen::Index>(p)) = (sq - S) / (static_cast<double>(S) * (S - 1));
    }
  });
  return null;
}

Eigen::VectorXd permutation_pvalues(const Eigen::VectorXd& observed, const Eigen::MatrixXd& null) {
  Eigen::VectorXd p(observed.size());
  for (Eigen::Index v = 0; v < observed.size(); ++v) {
    const auto count = (null.row(v).array() >= observed[v]).count();
    p[v] = (1.0 + static_cast<double>(count)) / (1.0 + static_cast<double>(null.cols()));
  }
  return p;
}

std::vector<bool> benjamini_hochberg(const Eigen::VectorXd& p, double alpha) {
  const Eigen::Index m = p.size();
  std::vector<Eigen::Index> order(m);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return p[a] < p[b]; });
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (p[order[i]] <= alpha * static_cast<double>(i + 1) / static_cast<double>(m)) k = i + 1;
  }
  std::vector<bool> out(m, false);
  for (Eigen::Index i = 0; i < k; ++i) out[order[i]] = true;
  return out;
}

IscResult isc_test(const BoldDataset& data, NullMethod method, int permutations, double alpha, bool fdr,
                   std::uint64_t seed, int jobs) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("isc: alpha must lie in (0, 1)");
  IscResult res;
  res.method = method;
  res.permutations = permutations;
  res.alpha = alpha;
  res.fdr = fdr;
  res.isc = pairwise_isc(data);
  const Eigen::MatrixXd null = method == NullMethod::circular ? circular_shift_null(data, permutations, seed, jobs)
                                                              : phase_scramble_null(data, permutations, seed, jobs);
  res.p = permutation_pvalues(res.isc.mean, null);
  if (fdr) {
    res.active = benjamini_hochberg(res.p, alpha);
  } else {
    res.active.resize(res.p.size());
    for (Eigen::Index v = 0; v < res.p.size(); ++v) res.active[v] = res.p[v] <= alpha;
  }
  return res;
}

ActivationMap IscResult::activation_map(const std::vector<Voxel>& voxels) const {
  ActivationMap map;
  map.score_name = "p_value";
  map.score.assign(p.data(), p.data() + p.size());
  map.attach_voxels(voxels);
  map.active = active;
  map.sign.assign(voxels.size(), 0);
  return map;
}

Eigen::VectorXd mean_response(const BoldDataset& data, int voxel) {
  const int v[1] = {voxel};
  return mean_response(data, std::span<const int>(v));
}

Eigen::VectorXd mean_response(const BoldDataset& data, std::span<const int> voxels) {
  if (voxels.empty() || data.subjects() < 1) throw DataError("mean_response: empty selection");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(data.scans());
  for (int s = 0; s < data.subjects(); ++s) {
    for (int v : voxels) {
      if (v < 0 || v >= data.voxels()) throw DataError("mean_response: voxel index out of range");
      auto x = data.series(s, v);
      out += Eigen::Map<const Eigen::VectorXd>(x.data(), data.scans());
    }
  }
  return out / (static_cast<double>(data.subjects()) * static_cast<double>(voxels.size()));
}

}  // namespace bnr
