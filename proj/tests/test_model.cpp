#include <doctest.h>

#include <cmath>
#include <numbers>

#include "bnr/error.hpp"
#include "bnr/hrf.hpp"
#include "bnr/model.hpp"
#include "support.hpp"

using namespace bnr;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

BoldDataset small_dataset(int S, int nx, int ny, int T, std::uint64_t seed) {
  return test::noise_dataset(S, nx, ny, T, 2.0, seed, [](int v, int t) { return (v % 3) * std::sin(0.3 * t); });
}

RoiGraph lattice_graph(const BoldDataset& d) {
  std::vector<Coord> c;
  for (const auto& v : d.voxel_table()) c.push_back(v.coord);
  return build_roi_graph(c);
}

Eigen::VectorXd random_point(const BnrModel& m, Rng& rng) {
  const BnrLayout& l = m.layout();
  Eigen::VectorXd x(l.size());
  for (int i = 0; i < l.size(); ++i) x[i] = std_normal(rng);
  x[l.log_rho()] = std::log(10.0) + 0.5 * std_normal(rng);
  x[l.log_tau()] = std::log(m.tau0()) + std_normal(rng);
  for (int v = 0; v < l.voxels; ++v) x[l.log_lambda() + v] = std_normal(rng) + 1.0;
  x[l.log_sigma()] = 0.3 * std_normal(rng);
  return x;
}

// Log posterior written directly from the model definition, looping over raw observations.
double reference_log_posterior(const BoldDataset& d, const BnrModel& m, const Eigen::VectorXd& x) {
  const BnrLayout& l = m.layout();
  const BnrParams p = decode(l, x);
  const BnrConfig& c = m.config();
  const double rho = std::exp(p.log_rho), tau = std::exp(p.log_tau), sigma = std::exp(p.log_sigma);
  const Eigen::VectorXd f = whiten_to_f(m.time_graph(), KernelConfig{rho}, p.z);
  double lp = 0.0;
  for (int s = 0; s < d.subjects(); ++s)
    for (int v = 0; v < d.voxels(); ++v) {
      const double beta = tau * std::exp(p.log_lambda[v]) * std::abs(p.eta[v]);
      for (int t = 0; t < d.scans(); ++t) {
        const double r = (d(s, v, t) - beta * f[t]) / sigma;
        lp += -0.5 * kLog2Pi - std::log(sigma) - 0.5 * r * r;
      }
    }
  lp += -0.5 * p.z.squaredNorm() - 0.5 * l.scans * kLog2Pi;
  const double dr = (p.log_rho - std::log(c.rho_median)) / c.rho_log_sd;
  lp += -0.5 * kLog2Pi - std::log(c.rho_log_sd) - 0.5 * dr * dr;
  lp += half_t_logpdf(tau, c.prior.tau_df, m.tau0()) + p.log_tau;
  for (int v = 0; v < l.voxels; ++v) {
    const double phi = 1.0 / (1.0 + std::exp(-p.alpha[v]));
    lp += half_t_logpdf(std::exp(p.log_lambda[v]), c.prior.nu, phi) + p.log_lambda[v];
    lp += -0.5 * kLog2Pi - 0.5 * p.eta[v] * p.eta[v];
  }
  lp += igmrf_logpdf(m.graph(), p.alpha);
  lp += half_t_logpdf(sigma, c.sigma_df, c.sigma_scale) + p.log_sigma;
  return lp;
}

}  // namespace

TEST_CASE("standardization gives zero mean and unit sample sd per series") {
  const BoldDataset d = small_dataset(3, 2, 2, 30, 1);
  const Standardized st = standardize(d);
  for (int s = 0; s < 3; ++s)
    for (int v = 0; v < 4; ++v) {
      const auto x = st.data.series(s, v);
      double m = 0, ss = 0;
      for (double y : x) m += y;
      m /= 30;
      for (double y : x) ss += (y - m) * (y - m);
      CHECK(std::abs(m) < 1e-12);
      CHECK(ss / 29 == doctest::Approx(1.0));
      CHECK(st.data(s, v, 7) * st.sd[s * 4 + v] + st.mean[s * 4 + v] == doctest::Approx(d(s, v, 7)));
    }
}

TEST_CASE("standardization rejects constant series") {
  std::vector<double> vals(2 * 1 * 5, 1.0);
  vals[7] = 2.0;
  const BoldDataset d(2, 5, 1.0, grid_voxels(1, 1), vals);
  CHECK_THROWS_AS(standardize(d), DataError);
}

TEST_CASE("sufficient-statistic likelihoods equal the observation-level sums") {
  const BoldDataset d = small_dataset(3, 2, 2, 12, 4);
  const RoiData r = RoiData::from_dataset(d);
  Eigen::VectorXd beta(4), f(12);
  beta << 0.3, 1.2, 0.0, 2.0;
  for (int t = 0; t < 12; ++t) f[t] = std::cos(0.4 * t);
  Eigen::MatrixXd H(12, 2), B(4, 2);
  for (int t = 0; t < 12; ++t) H.row(t) << std::sin(0.2 * t), (t % 4 < 2 ? 1.0 : 0.0);
  B << 0.1, 0.2, -0.5, 1.0, 0.0, 0.3, 2.0, -1.0;
  double want_bnr = 0, want_glm = 0;
  const double sigma = 0.7;
  for (int s = 0; s < 3; ++s)
    for (int v = 0; v < 4; ++v)
      for (int t = 0; t < 12; ++t) {
        const double a = (d(s, v, t) - beta[v] * f[t]) / sigma;
        const double b = (d(s, v, t) - B.row(v).dot(H.row(t))) / sigma;
        want_bnr += -0.5 * kLog2Pi - std::log(sigma) - 0.5 * a * a;
        want_glm += -0.5 * kLog2Pi - std::log(sigma) - 0.5 * b * b;
      }
  CHECK(bnr_loglik(r, beta, f, sigma) == doctest::Approx(want_bnr).epsilon(1e-12));
  CHECK(glm_loglik(r, H, B, sigma) == doctest::Approx(want_glm).epsilon(1e-12));
}

TEST_CASE("encode and decode are inverse") {
  const BnrLayout l{6, 3};
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(l.size(), -1, 1);
  CHECK((encode(l, decode(l, x)) - x).cwiseAbs().maxCoeff() == 0.0);
  CHECK(l.names().size() == static_cast<std::size_t>(l.size()));
  CHECK(l.block_of(l.alpha() + 1) == "alpha");
  CHECK(l.block_of(0) == "z");
}

TEST_CASE("bnr log posterior equals the model written out directly") {
  const BoldDataset d = small_dataset(3, 2, 2, 20, 8);
  const BnrModel m(RoiData::from_dataset(d), lattice_graph(d), BnrConfig{});
  Rng rng = make_rng(21);
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::VectorXd x = random_point(m, rng);
    CHECK(m.log_density(x) == doctest::Approx(reference_log_posterior(d, m, x)).epsilon(1e-9));
    CHECK(m.terms(x).total() == doctest::Approx(m.log_density(x)));
  }
}

TEST_CASE("bnr gradient matches finite differences") {
  const BoldDataset d = small_dataset(3, 2, 2, 20, 2);
  for (double nu : {1.0, 1000.0}) {
    BnrConfig cfg;
    cfg.prior.nu = nu;
    const BnrModel m(RoiData::from_dataset(d), lattice_graph(d), cfg);
    Rng rng = make_rng(5);
    for (int rep = 0; rep < 5; ++rep) {
      const Eigen::VectorXd x = random_point(m, rng);
      Eigen::VectorXd g;
      m.log_density_gradient(x, g);
      const auto f = [&](const Eigen::VectorXd& y) { return m.log_density(y); };
      CHECK(test::max_rel_error(g, test::fd_gradient(f, x)) < 1e-5);
    }
  }
}

TEST_CASE("glm gradient matches finite differences and the likelihood part is separable") {
  const BoldDataset d = small_dataset(2, 3, 1, 24, 3);
  Eigen::MatrixXd H(24, 2);
  H.col(0) = bold_predictor(alternating_blocks(8, 8, 48, 2));
  H.col(1) = bold_predictor(alternating_blocks(4, 12, 48, 2, 6));
  const GlmModel m(RoiData::from_dataset(d), H);
  Rng rng = make_rng(6);
  for (int rep = 0; rep < 5; ++rep) {
    Eigen::VectorXd x(m.dim());
    for (int i = 0; i < m.dim(); ++i) x[i] = std_normal(rng);
    Eigen::VectorXd g;
    m.log_density_gradient(x, g);
    const auto f = [&](const Eigen::VectorXd& y) { return m.log_density(y); };
    CHECK(test::max_rel_error(g, test::fd_gradient(f, x)) < 1e-5);
    const GlmDerived q = m.derive(x);
    CHECK(m.likelihood(x) == doctest::Approx(glm_loglik(RoiData::from_dataset(d), H, q.beta, q.sigma)));
  }
}

TEST_CASE("derived quantities follow the parameterization") {
  const BoldDataset d = small_dataset(3, 2, 2, 20, 8);
  const BnrModel m(RoiData::from_dataset(d), lattice_graph(d), BnrConfig{});
  Rng rng = make_rng(2);
  const Eigen::VectorXd x = random_point(m, rng);
  const BnrDerived q = m.derive(x);
  const BnrParams p = decode(m.layout(), x);
  for (int v = 0; v < 4; ++v) {
    const double lambda = std::exp(p.log_lambda[v]);
    CHECK(q.beta[v] == doctest::Approx(q.tau * lambda * std::abs(p.eta[v])));
    CHECK(q.kappa[v] == doctest::Approx(shrinkage_factor(3, q.sigma, q.tau, lambda, q.f)));
    CHECK(q.kappa[v] > 0.0);
    CHECK(q.kappa[v] < 1.0);
  }
  CHECK(q.log_posterior == doctest::Approx(m.log_density(x)));
  CHECK(m.tau0() == doctest::Approx(0.1 / std::sqrt(3.0 * 4 * 20)));
}

TEST_CASE("initial point recovers a strong shared response") {
  const int T = 60;
  const BoldDataset d = test::noise_dataset(4, 3, 3, T, 2.0, 17,
                                            [](int v, int t) { return (v < 5 ? 2.0 : 0.0) * std::sin(0.25 * t); });
  const Standardized st = standardize(d);
  const BnrModel m(RoiData::from_dataset(st.data), lattice_graph(d), BnrConfig{});
  const Eigen::VectorXd x0 = m.initial_point();
  REQUIRE(std::isfinite(m.log_density(x0)));
  const BnrDerived q = m.derive(x0);
  Eigen::VectorXd truth(T);
  for (int t = 0; t < T; ++t) truth[t] = std::sin(0.25 * t);
  const double r = q.f.dot(truth) / (q.f.norm() * truth.norm());
  CHECK(std::abs(r) > 0.9);
  CHECK(q.beta.head(5).minCoeff() > q.beta.tail(4).maxCoeff());
}

TEST_CASE("model configuration and shape checks") {
  BnrConfig c;
  c.neighbors = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = {};
  c.rho_log_sd = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  const BoldDataset d = small_dataset(2, 2, 2, 10, 1);
  const RoiGraph wrong = build_roi_graph(std::vector<Coord>{{0, 0, 0}});
  CHECK_THROWS_AS(BnrModel(RoiData::from_dataset(d), wrong, BnrConfig{}), DataError);
  const BnrModel m(RoiData::from_dataset(d), lattice_graph(d), BnrConfig{});
  CHECK_THROWS_AS(m.log_density(Eigen::VectorXd::Zero(3)), DataError);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(m.dim());
  x[m.layout().log_sigma()] = 1e6;
  CHECK_THROWS_AS(m.log_density(x), NumericalError);
}
