#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>

#include "bnr/error.hpp"
#include "bnr/isc.hpp"
#include "support.hpp"

using namespace bnr;

namespace {

std::vector<double> dft_amplitude(const Eigen::VectorXd& x) {
  const auto T = x.size();
  std::vector<double> out(T);
  for (Eigen::Index k = 0; k < T; ++k) {
    std::complex<double> acc = 0;
    for (Eigen::Index t = 0; t < T; ++t) acc += x[t] * std::polar(1.0, -2 * std::numbers::pi * k * t / T);
    out[k] = std::abs(acc);
  }
  return out;
}

Eigen::VectorXd randn(int n, Rng& rng) {
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = std_normal(rng);
  return x;
}

}  // namespace

TEST_CASE("pearson correlation") {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{2, 4, 6, 8, 10}, c{5, 4, 3, 2, 1}, d{1, 3, 2, 5, 4};
  CHECK(pearson(a, b) == doctest::Approx(1.0));
  CHECK(pearson(a, c) == doctest::Approx(-1.0));
  CHECK(pearson(a, d) == doctest::Approx(0.8));
}

TEST_CASE("pairwise correlations and their mean") {
  Rng rng = make_rng(1);
  const Eigen::VectorXd shared = randn(50, rng);
  std::vector<double> vals;
  for (int s = 0; s < 3; ++s) {
    const Eigen::VectorXd x = shared + 0.5 * randn(50, rng);
    vals.insert(vals.end(), x.data(), x.data() + 50);
    vals.insert(vals.end(), shared.data(), shared.data() + 50);
  }
  const BoldDataset d(3, 50, 1.0, grid_voxels(2, 1), vals);
  const PairwiseIsc isc = pairwise_isc(d);
  REQUIRE(isc.r.cols() == 3);
  CHECK(isc.r(1, 0) == doctest::Approx(1.0));
  const double r01 = pearson(d.series(0, 0), d.series(1, 0));
  CHECK(isc.r(0, 0) == doctest::Approx(r01));
  CHECK(isc.mean[0] == doctest::Approx(isc.r.row(0).mean()));
  std::vector<double> flat(2 * 1 * 10, 1.0);
  for (int t = 0; t < 10; ++t) flat[t] = t;
  CHECK_THROWS_AS(pairwise_isc(BoldDataset(2, 10, 1.0, grid_voxels(1, 1), flat)), DataError);
}

TEST_CASE("circular shift rotates the series") {
  const std::vector<double> x{1, 2, 3, 4, 5};
  const Eigen::VectorXd y = circular_shift(x, 2);
  CHECK(y[0] == 4);
  CHECK(y[2] == 1);
  CHECK(circular_shift(x, 7) == y);
  CHECK(circular_shift(x, -3) == y);
}

TEST_CASE("phase scrambling keeps the amplitude spectrum") {
  Rng rng = make_rng(2);
  for (int T : {64, 65}) {
    const Eigen::VectorXd x = randn(T, rng);
    const Eigen::VectorXd y = phase_scramble(std::span<const double>(x.data(), T), rng);
    const auto ax = dft_amplitude(x), ay = dft_amplitude(y);
    for (int k = 0; k < T; ++k) CHECK(std::abs(ax[k] - ay[k]) < 1e-10 * std::max(1.0, ax[k]));
    CHECK(std::abs(pearson(std::span<const double>(x.data(), T), std::span<const double>(y.data(), T))) < 0.5);
  }
}

TEST_CASE("permutation p-values and Benjamini-Hochberg") {
  Eigen::VectorXd obs(2);
  obs << 0.5, -1.0;
  Eigen::MatrixXd null(2, 4);
  null << 0.1, 0.6, 0.5, 0.2,
          0.0, 0.0, 0.0, 0.0;
  const Eigen::VectorXd p = permutation_pvalues(obs, null);
  CHECK(p[0] == doctest::Approx(3.0 / 5));
  CHECK(p[1] == doctest::Approx(1.0));
  Eigen::VectorXd q(5);
  q << 0.01, 0.04, 0.03, 0.2, 0.011;
  // Sorted: 0.01, 0.011, 0.03, 0.04, 0.2 against 0.01, 0.02, 0.03, 0.04, 0.05.
  CHECK(benjamini_hochberg(q, 0.05) == std::vector<bool>{true, true, true, false, true});
  q[0] = 0.02;
  q[4] = 0.3;
  CHECK(benjamini_hochberg(q, 0.05) == std::vector<bool>{false, false, false, false, false});
}

TEST_CASE("null distributions are reproducible and thread-independent") {
  const BoldDataset d = test::noise_dataset(4, 3, 3, 40, 2.0, 7);
  for (auto fn : {circular_shift_null, phase_scramble_null}) {
    const Eigen::MatrixXd a = fn(d, 100, 5, 1);
    CHECK(a.rows() == 9);
    CHECK(a.cols() == 100);
    CHECK(a == fn(d, 100, 5, 3));
    CHECK(a != fn(d, 100, 6, 1));
  }
  CHECK_THROWS_AS(circular_shift_null(d, 50, 1), ConfigError);
}

TEST_CASE("phase null evaluated in the frequency domain equals scrambling in time") {
  for (int T : {32, 33}) {
    const int S = 3, V = 2, P = 100;
    const BoldDataset d = test::noise_dataset(S, V, 1, T, 2.0, 8, [](int v, int t) { return v * std::sin(0.4 * t); });
    const Eigen::MatrixXd fast = phase_scramble_null(d, P, 11, 1);
    for (int p = 0; p < P; p += 17) {
      Rng rng = make_rng(derive_seed(11, p));
      std::vector<std::vector<Eigen::VectorXd>> y(S);
      for (int s = 0; s < S; ++s) {
        std::vector<double> phase(T, 0.0);
        for (int k = 1; 2 * k < T; ++k) phase[k] = uniform(rng, 0.0, 2.0 * std::numbers::pi);
        for (int v = 0; v < V; ++v) {
          const auto x = d.series(s, v);
          std::vector<std::complex<double>> X(T);
          for (int k = 0; k < T; ++k)
            for (int t = 0; t < T; ++t) X[k] += x[t] * std::polar(1.0, -2 * std::numbers::pi * k * t / T);
          for (int k = 1; 2 * k < T; ++k) {
            X[k] *= std::polar(1.0, phase[k]);
            X[T - k] = std::conj(X[k]);
          }
          Eigen::VectorXd out(T);
          for (int t = 0; t < T; ++t) {
            std::complex<double> acc = 0;
            for (int k = 0; k < T; ++k) acc += X[k] * std::polar(1.0, 2 * std::numbers::pi * k * t / T);
            out[t] = acc.real() / T;
          }
          y[s].push_back(out);
        }
      }
      for (int v = 0; v < V; ++v) {
        double sum = 0;
        int pairs = 0;
        for (int a = 0; a < S; ++a)
          for (int b = a + 1; b < S; ++b, ++pairs)
            sum += pearson(std::span<const double>(y[a][v].data(), T), std::span<const double>(y[b][v].data(), T));
        CHECK(fast(v, p) == doctest::Approx(sum / pairs).epsilon(1e-9).scale(1.0));
      }
    }
  }
}

TEST_CASE("shared signal is detected and noise is not") {
  const BoldDataset d = test::noise_dataset(6, 4, 1, 80, 2.0, 9, [](int v, int t) { return v < 2 ? 1.5 * std::sin(0.3 * t) : 0.0; });
  for (NullMethod m : {NullMethod::circular, NullMethod::phase}) {
    const IscResult r = isc_test(d, m, 200, 0.05, true, 3);
    CHECK(r.active[0]);
    CHECK(r.active[1]);
    CHECK_FALSE(r.active[2]);
    CHECK_FALSE(r.active[3]);
    CHECK(r.p[0] == doctest::Approx(1.0 / 201));
    const ActivationMap map = r.activation_map(d.voxel_table());
    CHECK(map.score_name == "p_value");
    CHECK(map.size() == 4);
  }
  CHECK(parse_null_method("phase") == NullMethod::phase);
  CHECK(to_string(NullMethod::circular) == "circular");
  CHECK_THROWS_AS(parse_null_method("bootstrap"), ConfigError);
}

TEST_CASE("mean response averages subjects") {
  const BoldDataset d(2, 3, 1.0, grid_voxels(2, 1), {1, 2, 3, 10, 10, 10, 3, 4, 5, 20, 20, 20});
  CHECK(mean_response(d, 0) == Eigen::Vector3d(2, 3, 4));
  const int both[2] = {0, 1};
  CHECK(mean_response(d, std::span<const int>(both))[0] == doctest::Approx(8.5));
}
