#include <doctest.h>

#include <cmath>

#include "bnr/diagnostics.hpp"
#include "support.hpp"

using namespace bnr;

namespace {

std::vector<Eigen::VectorXd> iid_chains(int chains, int n, std::uint64_t seed, double offset_step = 0.0) {
  Rng rng = make_rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < chains; ++c) {
    Eigen::VectorXd x(n);
    for (int i = 0; i < n; ++i) x[i] = std_normal(rng) + c * offset_step;
    out.push_back(x);
  }
  return out;
}

std::vector<Eigen::VectorXd> ar1_chains(int chains, int n, double phi, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::vector<Eigen::VectorXd> out;
  for (int c = 0; c < chains; ++c) {
    Eigen::VectorXd x(n);
    double prev = std_normal(rng) / std::sqrt(1 - phi * phi);
    for (int i = 0; i < n; ++i) {
      prev = phi * prev + std_normal(rng);
      x[i] = prev;
    }
    out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("independent draws give R-hat near one and ESS near the draw count") {
  const auto ch = iid_chains(4, 1000, 1);
  CHECK(split_rhat(ch) < 1.01);
  const EssResult e = ess(ch);
  CHECK(e.bulk == doctest::Approx(4000).epsilon(0.2));
  CHECK(e.tail == doctest::Approx(4000).epsilon(0.3));
  CHECK(ess_basic(ch) == doctest::Approx(4000).epsilon(0.2));
}

TEST_CASE("autocorrelated chains match the AR(1) effective sample size") {
  const double phi = 0.9;
  const auto ch = ar1_chains(4, 5000, phi, 2);
  const double want = 20000 * (1 - phi) / (1 + phi);
  CHECK(ess_basic(ch) == doctest::Approx(want).epsilon(0.2));
  CHECK(ess(ch).bulk == doctest::Approx(want).epsilon(0.2));
}

TEST_CASE("offset chains are flagged") {
  const auto ch = iid_chains(4, 500, 3, 5.0);
  CHECK(split_rhat(ch) > 2.0);
  Eigen::VectorXd trend = Eigen::VectorXd::LinSpaced(400, 0, 10);
  CHECK(split_rhat({trend}) > 1.5);
}

TEST_CASE("constant draws are degenerate") {
  const std::vector<Eigen::VectorXd> ch(3, Eigen::VectorXd::Constant(100, 2.0));
  CHECK(std::isinf(split_rhat(ch)));
  CHECK(ess(ch).degenerate);
}

TEST_CASE("matrix diagnostics report per-quantity values and convergence") {
  const auto a = iid_chains(4, 1000, 4);
  const auto b = iid_chains(4, 1000, 5, 3.0);
  std::vector<Eigen::MatrixXd> m;
  for (int c = 0; c < 4; ++c) {
    Eigen::MatrixXd x(1000, 2);
    x.col(0) = a[c];
    x.col(1) = b[c];
    m.push_back(x);
  }
  const Diagnostics d = diagnose(m, {"good", "bad"});
  CHECK(d.rhat.size() == 2);
  CHECK(d.rhat[0] < 1.01);
  CHECK(d.max_rhat() == d.rhat[1]);
  CHECK_FALSE(d.converged());
  std::vector<Eigen::MatrixXd> good;
  for (const auto& x : m) good.push_back(x.leftCols(1));
  CHECK(diagnose(good, {"good"}).converged());
}
