#include <doctest.h>

#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "bnr/error.hpp"
#include "bnr/hrf.hpp"

using namespace bnr;

namespace {

// Double-gamma response written out directly.
double reference_hrf(double t) {
  if (t <= 0) return 0.0;
  return std::pow(t, 5) * std::exp(-t) / std::tgamma(6.0) - std::pow(t, 15) * std::exp(-t) / std::tgamma(16.0) / 6.0;
}

// Integral of the reference response over [0, t].
double reference_step(double t) {
  return boost::math::gamma_p(6.0, t) - boost::math::gamma_p(16.0, t) / 6.0;
}

}  // namespace

TEST_CASE("canonical response matches the closed-form double gamma") {
  const HrfConfig cfg;
  for (double t : {0.5, 2.0, 5.0, 7.3, 12.0, 16.0, 25.0}) {
    CHECK(canonical_hrf(cfg, t) == doctest::Approx(reference_hrf(t)).epsilon(1e-12));
  }
  CHECK(canonical_hrf(cfg, 0.0) == 0.0);
  CHECK(canonical_hrf(cfg, -3.0) == 0.0);
}

TEST_CASE("response peaks near five seconds and undershoots later") {
  const HrfConfig cfg;
  double best_t = 0, best = -1;
  for (double t = 0.0; t < 32.0; t += 0.01) {
    if (canonical_hrf(cfg, t) > best) {
      best = canonical_hrf(cfg, t);
      best_t = t;
    }
  }
  CHECK(best_t == doctest::Approx(5.0).epsilon(0.01));
  CHECK(canonical_hrf(cfg, 15.0) < 0.0);
}

TEST_CASE("sustained block follows the integrated response") {
  TaskDesign d;
  d.total_time = 60;
  d.tr = 1;
  d.onsets = {0};
  d.durations = {60};
  const Eigen::VectorXd h = bold_predictor_unnormalized(d);
  // Endpoint-inclusive Riemann sum on the 0.1 s grid: integral plus half a cell of h(t).
  for (int k = 1; k < 32; ++k) CHECK(std::abs(h[k] - reference_step(k) - 0.05 * reference_hrf(k)) < 1e-3);
}

TEST_CASE("normalized predictor has unit peak and is zero before the first onset") {
  TaskDesign d = alternating_blocks(20, 20, 200, 2, 30);
  const Eigen::VectorXd h = bold_predictor(d);
  CHECK(h.size() == 100);
  CHECK(h.cwiseAbs().maxCoeff() == doctest::Approx(1.0));
  for (int k = 0; k <= 15; ++k) CHECK(h[k] == 0.0);
  CHECK(h[20] > 0.5);
}

TEST_CASE("amplitude scales the unnormalized predictor linearly") {
  TaskDesign d = alternating_blocks(10, 10, 100, 2);
  const Eigen::VectorXd a = bold_predictor_unnormalized(d);
  d.amplitude = 2.5;
  const Eigen::VectorXd b = bold_predictor_unnormalized(d);
  CHECK((b - 2.5 * a).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("empty design gives a zero predictor") {
  TaskDesign d;
  d.total_time = 40;
  d.tr = 2;
  CHECK(bold_predictor(d).isZero());
}

TEST_CASE("alternating blocks tile the session") {
  const TaskDesign d = alternating_blocks(20, 20, 210, 2.1);
  REQUIRE(d.onsets.size() == 5);
  CHECK(d.onsets[1] == doctest::Approx(40));
  CHECK(d.scans() == 100);
  CHECK_NOTHROW(d.validate());
}

TEST_CASE("invalid designs are rejected") {
  TaskDesign d;
  d.total_time = 41;
  d.tr = 2;
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.total_time = 40;
  d.onsets = {10, 5};
  d.durations = {1, 1};
  CHECK_THROWS_AS(d.validate(), ConfigError);
  d.onsets = {30};
  d.durations = {20};
  CHECK_THROWS_AS(d.validate(), ConfigError);
  HrfConfig h;
  h.resolution = 3;
  CHECK_THROWS_AS(h.validate(2), ConfigError);
}
