#include <doctest.h>

#include <cmath>

#include "bnr/diagnostics.hpp"
#include "bnr/error.hpp"
#include "bnr/sampler.hpp"
#include "support.hpp"

using namespace bnr;

namespace {

// Correlated bivariate normal with sds (1, 3) and correlation 0.8.
double bivariate(const Eigen::VectorXd& x, Eigen::VectorXd& g) {
  Eigen::Matrix2d cov;
  cov << 1.0, 2.4, 2.4, 9.0;
  const Eigen::Matrix2d prec = cov.inverse();
  const Eigen::Vector2d d(x[0] - 1.0, x[1] + 2.0);
  g = -(prec * d);
  return -0.5 * d.dot(prec * d);
}

SamplerConfig quick(int chains = 4, int warmup = 500, int draws = 1000) {
  SamplerConfig c;
  c.chains = chains;
  c.warmup = warmup;
  c.draws = draws;
  c.seed = 17;
  return c;
}

}  // namespace

TEST_CASE("sampler recovers a correlated Gaussian") {
  const PosteriorDraws d = nuts_sample(bivariate, 2, quick());
  REQUIRE(d.num_chains() == 4);
  REQUIRE(d.draws_per_chain() == 1000);
  Eigen::MatrixXd all(4000, 2);
  for (int c = 0; c < 4; ++c) all.middleRows(c * 1000, 1000) = d.chains[c].draws;
  const Eigen::RowVector2d mean = all.colwise().mean();
  const Eigen::MatrixXd centered = all.rowwise() - mean;
  const Eigen::Matrix2d cov = centered.transpose() * centered / 3999.0;
  CHECK(mean[0] == doctest::Approx(1.0).epsilon(0.1).scale(1.0));
  CHECK(mean[1] == doctest::Approx(-2.0).epsilon(0.1).scale(1.0));
  CHECK(std::sqrt(cov(1, 1)) == doctest::Approx(3.0).epsilon(0.1));
  CHECK(cov(0, 1) / std::sqrt(cov(0, 0) * cov(1, 1)) == doctest::Approx(0.8).epsilon(0.05));
  CHECK(d.divergences() == 0);
  const Diagnostics diag = diagnose(d, 10);
  CHECK(diag.max_rhat() < 1.01);
}

TEST_CASE("adapted metric tracks the marginal variances") {
  const auto scaled = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const Eigen::Vector3d sd(0.01, 1.0, 50.0);
    g = -(x.array() / sd.array().square()).matrix();
    return -0.5 * (x.array() / sd.array()).square().sum();
  };
  const PosteriorDraws d = nuts_sample(scaled, 3, quick(1, 1000, 200));
  const Eigen::VectorXd& m = d.chains[0].inv_metric;
  CHECK(m[0] == doctest::Approx(1e-4).epsilon(0.5));
  CHECK(m[2] == doctest::Approx(2500).epsilon(0.5));
}

TEST_CASE("points outside the support are rejected, not propagated") {
  // Exponential(1) on x > 0, expressed on the raw scale.
  const auto expo = [](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    if (!(x[0] > 0.0)) throw NumericalError("outside support", "x", 0);
    g.resize(1);
    g[0] = -1.0;
    return -x[0];
  };
  SamplerConfig c = quick(2, 500, 2000);
  Eigen::VectorXd init(1);
  init << 1.0;
  const PosteriorDraws d = nuts_sample(expo, 1, c, init);
  double sum = 0;
  for (const auto& ch : d.chains) {
    CHECK(ch.draws.minCoeff() > 0.0);
    sum += ch.draws.sum();
  }
  CHECK(sum / 4000.0 == doctest::Approx(1.0).epsilon(0.15));
}

TEST_CASE("runs are reproducible and independent of the thread count") {
  SamplerConfig c = quick(3, 100, 100);
  const PosteriorDraws a = nuts_sample(bivariate, 2, c);
  c.jobs = 3;
  const PosteriorDraws b = nuts_sample(bivariate, 2, c);
  for (int k = 0; k < 3; ++k) CHECK(a.chains[k].draws == b.chains[k].draws);
  CHECK(a.chains[0].draws != a.chains[1].draws);
  c.seed = 18;
  const PosteriorDraws e = nuts_sample(bivariate, 2, c);
  CHECK(a.chains[0].draws != e.chains[0].draws);
}

TEST_CASE("explicit initial point with per-chain jitter") {
  SamplerConfig c = quick(2, 0, 1);
  c.init_jitter = 0.5;
  Eigen::VectorXd init(2);
  init << 10.0, 10.0;
  const PosteriorDraws d = nuts_sample(bivariate, 2, c, init, {"a", "b"});
  CHECK(d.names == std::vector<std::string>{"a", "b"});
  CHECK(d.chains[0].draws.row(0) != d.chains[1].draws.row(0));
  CHECK_THROWS_AS(nuts_sample(bivariate, 2, c, Eigen::VectorXd::Zero(3)), std::exception);
}

TEST_CASE("sampler configuration is validated") {
  SamplerConfig c;
  c.chains = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.max_depth = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.init_jitter = -1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.draws = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("per-draw bookkeeping is complete") {
  const PosteriorDraws d = nuts_sample(bivariate, 2, quick(1, 200, 50));
  const ChainResult& ch = d.chains[0];
  CHECK(ch.log_density.size() == 50);
  CHECK(ch.tree_depth.size() == 50);
  CHECK(ch.accept_stat.size() == 50);
  CHECK(ch.step_size > 0.0);
  for (int n : ch.n_leapfrog) CHECK(n >= 1);
  for (double a : ch.accept_stat) CHECK((a >= 0.0 && a <= 1.0));
  CHECK(d.depth_saturation(10) == 0.0);
}
