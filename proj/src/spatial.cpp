#include "bnr/spatial.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "bnr/error.hpp"

namespace bnr {

RoiGraph build_roi_graph(std::span<const Coord> coords) {
  RoiGraph g;
  g.coords.assign(coords.begin(), coords.end());
  const int n = g.size();
  std::map<Coord, int> index;
  for (int i = 0; i < n; ++i) {
    if (!index.emplace(g.coords[i], i).second) {
      const auto& c = g.coords[i];
      throw DataError("roi graph: duplicate coordinate (" + std::to_string(c[0]) + ", " + std::to_string(c[1]) +
                      ", " + std::to_string(c[2]) + ")");
    }
  }
  g.degree.assign(n, 0);
  for (int i = 0; i < n; ++i) {
    for (int axis = 0; axis < 3; ++axis) {
      Coord c = g.coords[i];
      ++c[axis];
      auto it = index.find(c);
      if (it == index.end()) continue;
      const int j = it->second;
      g.edges.emplace_back(std::min(i, j), std::max(i, j));
      ++g.degree[i];
      ++g.degree[j];
    }
  }
  std::sort(g.edges.begin(), g.edges.end());

  // Union-find for components.
  std::vector<int> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (auto [a, b] : g.edges) parent[find(a)] = find(b);
  g.component.assign(n, -1);
  std::map<int, int> ids;
  for (int i = 0; i < n; ++i) {
    auto [it, inserted] = ids.emplace(find(i), static_cast<int>(ids.size()));
    g.component[i] = it->second;
  }
  g.components = static_cast<int>(ids.size());
  return g;
}

double igmrf_pairwise_logpdf(const RoiGraph& graph, const Eigen::VectorXd& alpha) {
  double acc = 0.0;
  for (auto [a, b] : graph.edges) {
    const double d = alpha[a] - alpha[b];
    acc += d * d;
  }
  return -0.5 * acc;
}

double igmrf_sum_penalty(const RoiGraph& graph, const Eigen::VectorXd& alpha) {
  constexpr double half_log_2pi = 0.91893853320467274178;
  std::vector<double> sums(graph.components, 0.0);
  std::vector<int> counts(graph.components, 0);
  for (int v = 0; v < graph.size(); ++v) {
    sums[graph.component[v]] += alpha[v];
    ++counts[graph.component[v]];
  }
  double lp = 0.0;
  for (int c = 0; c < graph.components; ++c) {
    const double var = kSumToZeroVariancePerVoxel * counts[c];
    lp += -half_log_2pi - 0.5 * std::log(var) - 0.5 * sums[c] * sums[c] / var;
  }
  return lp;
}

double igmrf_logpdf(const RoiGraph& graph, const Eigen::VectorXd& alpha, Eigen::VectorXd* grad) {
  if (alpha.size() != graph.size()) throw DataError("igmrf_logpdf: field length does not match the graph");
  if (grad) {
    for (auto [a, b] : graph.edges) {
      const double d = alpha[a] - alpha[b];
      (*grad)[a] -= d;
      (*grad)[b] += d;
    }
    std::vector<double> sums(graph.components, 0.0);
    std::vector<int> counts(graph.components, 0);
    for (int v = 0; v < graph.size(); ++v) {
      sums[graph.component[v]] += alpha[v];
      ++counts[graph.component[v]];
    }
    for (int v = 0; v < graph.size(); ++v) {
      const int c = graph.component[v];
      (*grad)[v] -= sums[c] / (kSumToZeroVariancePerVoxel * counts[c]);
    }
  }
  return igmrf_pairwise_logpdf(graph, alpha) + igmrf_sum_penalty(graph, alpha);
}

double alpha_to_phi(double alpha) {
  if (alpha >= 0.0) return 1.0 / (1.0 + std::exp(-alpha));
  const double e = std::exp(alpha);
  return e / (1.0 + e);
}

double log_alpha_to_phi(double alpha) {
  if (alpha >= 0.0) return -std::log1p(std::exp(-alpha));
  return alpha - std::log1p(std::exp(alpha));
}

}  // namespace bnr
