#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bnr/activation.hpp"
#include "bnr/dataset.hpp"
#include "bnr/rng.hpp"

namespace bnr {

enum class NullMethod { circular, phase };

std::string to_string(NullMethod m);
NullMethod parse_null_method(const std::string& s);

double pearson(std::span<const double> a, std::span<const double> b);

struct PairwiseIsc {
  int subjects = 0;
  Eigen::MatrixXd r;     // V x S(S-1)/2, pairs (a, b) with a < b in lexicographic order
  Eigen::VectorXd mean;  // V
};

PairwiseIsc pairwise_isc(const BoldDataset& data);

/// y[t] = x[(t - offset) mod T].
Eigen::VectorXd circular_shift(std::span<const double> x, long offset);

/// Real surrogate with the amplitude spectrum of x and uniformly random phases.
Eigen::VectorXd phase_scramble(std::span<const double> x, Rng& rng);

/// V x permutations matrix of null mean pairwise correlations.
Eigen::MatrixXd circular_shift_null(const BoldDataset& data, int permutations, std::uint64_t seed, int jobs = 1);
Eigen::MatrixXd phase_scramble_null(const BoldDataset& data, int permutations, std::uint64_t seed, int jobs = 1);

struct IscResult {
  NullMethod method = NullMethod::circular;
  int permutations = 0;
  double alpha = 0.05;
  bool fdr = true;
  PairwiseIsc isc;
  Eigen::VectorXd p;
  std::vector<bool> active;

  ActivationMap activation_map(const std::vector<Voxel>& voxels) const;
};

/// (1 + #{null >= observed}) / (1 + permutations) per voxel.
Eigen::VectorXd permutation_pvalues(const Eigen::VectorXd& observed, const Eigen::MatrixXd& null);

IscResult isc_test(const BoldDataset& data, NullMethod method, int permutations = 1000, double alpha = 0.05,
                   bool fdr = true, std::uint64_t seed = 1, int jobs = 1);

/// Benjamini-Hochberg step-up rejections at level alpha.
std::vector<bool> benjamini_hochberg(const Eigen::VectorXd& p, double alpha);

/// Pointwise mean over subjects for one voxel.
Eigen::VectorXd mean_response(const BoldDataset& data, int voxel);
/// Pointwise mean over subjects and the given voxels.
Eigen::VectorXd mean_response(const BoldDataset& data, std::span<const int> voxels);

}  // namespace bnr
