#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "bnr/error.hpp"
#include "bnr/study.hpp"
#include "support.hpp"

using namespace bnr;
using bnr::test::TempDir;

namespace {

// P(score_pos < score_neg) + P(tie) / 2 over all pairs.
double mann_whitney_auc(const std::vector<double>& score, const std::vector<bool>& truth) {
  double num = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < score.size(); ++i) {
    if (!truth[i]) continue;
    for (std::size_t j = 0; j < score.size(); ++j) {
      if (truth[j]) continue;
      pairs += 1.0;
      if (score[i] < score[j]) num += 1.0;
      else if (score[i] == score[j]) num += 0.5;
    }
  }
  return num / pairs;
}

}  // namespace

TEST_CASE("roc of a perfect and a reversed score") {
  const std::vector<double> s{0.1, 0.2, 0.8, 0.9};
  const std::vector<bool> t{true, true, false, false};
  const auto roc = roc_curve(s, t);
  CHECK(roc.front().fpr == 0.0);
  CHECK(roc.front().tpr == 0.0);
  CHECK(roc.back().fpr == 1.0);
  CHECK(roc.back().tpr == 1.0);
  CHECK(auc_trapezoid(roc) == doctest::Approx(1.0));
  const std::vector<bool> rev{false, false, true, true};
  CHECK(auc_trapezoid(roc_curve(s, rev)) == doctest::Approx(0.0));
}

TEST_CASE("ties form a single roc step") {
  const std::vector<double> s(6, 0.3);
  const std::vector<bool> t{true, false, true, false, false, true};
  const auto roc = roc_curve(s, t);
  CHECK(roc.size() == 2);
  CHECK(auc_trapezoid(roc) == doctest::Approx(0.5));
}

TEST_CASE("trapezoid auc equals the Mann-Whitney statistic") {
  std::mt19937_64 gen(11);
  std::uniform_int_distribution<int> coarse(0, 9);
  std::bernoulli_distribution coin(0.3);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> s(200);
    std::vector<bool> t(200);
    for (int i = 0; i < 200; ++i) {
      t[i] = coin(gen);
      s[i] = coarse(gen) - (t[i] ? 1.5 * (rep % 3) : 0.0);
    }
    if (std::count(t.begin(), t.end(), true) == 0) continue;
    const auto roc = roc_curve(s, t);
    for (std::size_t k = 1; k < roc.size(); ++k) {
      CHECK(roc[k].fpr >= roc[k - 1].fpr);
      CHECK(roc[k].tpr >= roc[k - 1].tpr);
    }
    CHECK(auc_trapezoid(roc) == doctest::Approx(mann_whitney_auc(s, t)).epsilon(1e-12));
  }
}

TEST_CASE("random scores give auc near one half") {
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double sum = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> s(200);
    std::vector<bool> t(200);
    for (int i = 0; i < 200; ++i) {
      s[i] = u(gen);
      t[i] = i < 40;
    }
    sum += auc_trapezoid(roc_curve(s, t));
  }
  CHECK(sum / 50.0 == doctest::Approx(0.5).epsilon(0.03));
}

TEST_CASE("roc needs both classes") {
  CHECK_THROWS(roc_curve({0.1, 0.2}, {true, true}));
  CHECK_THROWS(roc_curve({0.1}, {true, false}));
}

TEST_CASE("confusion counts") {
  const std::vector<bool> pred{true, true, false, false, true};
  const std::vector<bool> truth{true, false, false, true, true};
  const Confusion c = confusion(pred, truth);
  CHECK(c.accuracy == doctest::Approx(3.0 / 5.0));
  CHECK(c.sensitivity == doctest::Approx(2.0 / 3.0));
  CHECK(c.specificity == doctest::Approx(1.0 / 2.0));
  const Confusion none = confusion({false, true}, {false, false});
  CHECK(std::isnan(none.sensitivity));
  CHECK(none.specificity == doctest::Approx(0.5));
}

TEST_CASE("aligned mse is one minus squared correlation") {
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n01;
  Eigen::VectorXd truth(60), est(60);
  for (int i = 0; i < 60; ++i) {
    truth[i] = std::sin(0.3 * i);
    est[i] = truth[i] + 0.5 * n01(gen);
  }
  const Eigen::VectorXd a = truth.array() - truth.mean(), b = est.array() - est.mean();
  const double r = a.dot(b) / (a.norm() * b.norm());
  double scale = 0.0;
  const double mse = aligned_mse(truth, est, &scale);
  CHECK(mse == doctest::Approx(1.0 - r * r).epsilon(1e-10));
  CHECK(scale > 0.0);
  CHECK(aligned_mse(3.0 * truth.array() + 7.0, est) == doctest::Approx(mse).epsilon(1e-10));
  CHECK(aligned_mse(truth, -4.0 * est.array() + 1.0) == doctest::Approx(mse).epsilon(1e-10));
  CHECK(aligned_mse(truth, 2.0 * truth) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("design matrix columns are normalized predictors") {
  const TaskDesign a = alternating_blocks(20.0, 20.0, 200.0, 2.0);
  const TaskDesign b = alternating_blocks(10.0, 30.0, 200.0, 2.0, 5.0);
  const Eigen::MatrixXd X = design_matrix({a, b}, HrfConfig{});
  REQUIRE(X.rows() == a.scans());
  REQUIRE(X.cols() == 2);
  CHECK((X.col(0) - bold_predictor(a)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((X.col(1) - bold_predictor(b)).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(X.col(0).cwiseAbs().maxCoeff() == doctest::Approx(1.0));
}

TEST_CASE("method tags") {
  FitOptions o;
  o.model = "glm";
  CHECK(o.method_tag() == "glm");
  o.model = "bnr";
  o.bnr.prior.nu = 1000;
  o.bnr.prior.tau_star = 0.5;
  CHECK(o.method_tag() == "bnr_nu1000_ts0.5");
  o.bnr.prior.nu = 1;
  CHECK(o.method_tag() == "bnr_nu1_ts0.5");
}

TEST_CASE("config parsing rejects unknown keys and wrong types") {
  const fs::path base = "/tmp";
  CHECK_NOTHROW(parse_run_config("{}", base));
  CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"chain": 4}})", base), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"bogus": 1})", base), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"chains": "4"}})", base), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"sampler": {"chains": 2.5}})", base), ConfigError);
  CHECK_THROWS_AS(parse_run_config(R"({"seed": -1})", base), ConfigError);
  CHECK_THROWS_AS(parse_run_config("{not json", base), ConfigError);
  CHECK_THROWS_AS(parse_run_config("[]", base), ConfigError);

  const RunConfig c = parse_run_config(
      R"({"seed": 9, "out": "res", "data": {"dataset": "d/data.json"}, "fit": {"model": "glm"},
          "prior": {"nu": 1}, "sampler": {"chains": 3}})",
      "/base");
  CHECK(c.seed == 9);
  CHECK(c.out == fs::path("/base/res"));
  CHECK(c.dataset == fs::path("/base/d/data.json"));
  CHECK(c.fit.model == "glm");
  CHECK(c.fit.bnr.prior.nu == 1.0);
  CHECK(c.fit.sampler.chains == 3);
}

TEST_CASE("validation fails before any output is written") {
  TempDir dir("study");
  RunConfig c = parse_run_config(R"({"data": {"dataset": "missing.json"}})", dir.path());
  c.out = dir / "out";
  CHECK_THROWS_AS(validate_command(c, "fit"), ConfigError);
  CHECK_THROWS_AS(run_command("fit", c), ConfigError);
  CHECK_FALSE(fs::exists(dir / "out"));
  CHECK_THROWS_AS(validate_command(c, "explode"), ConfigError);

  RunConfig s = parse_run_config(R"({"simulate": {"mu": [1, 1]}})", dir.path());
  s.out = dir / "sim";
  CHECK_THROWS_AS(run_command("simulate", s), ConfigError);
  CHECK_FALSE(fs::exists(dir / "sim"));
}

TEST_CASE("glm fit finds the task-driven voxels") {
  const TaskDesign task = alternating_blocks(20.0, 20.0, 120.0, 2.0);
  const Eigen::MatrixXd X = design_matrix({task}, HrfConfig{});
  const int T = static_cast<int>(X.rows());
  // voxel 0 and 1 follow the task, 2 is flipped, 3 is noise
  const std::vector<double> amp{1.5, 1.5, -1.5, 0.0};
  BoldDataset d = bnr::test::noise_dataset(3, 2, 2, T, 2.0, 21, [&](int v, int t) { return amp[v] * X(t, 0); });
  FitOptions opt;
  opt.model = "glm";
  opt.sampler.chains = 2;
  opt.sampler.warmup = 300;
  opt.sampler.draws = 300;
  const FitReport rep = fit_dataset(d, X, opt, 4, "", 1);
  REQUIRE(rep.rois.size() == 1);
  const RoiFit& r = rep.rois.front();
  REQUIRE(r.ok);
  CHECK(r.active[0]);
  CHECK(r.active[1]);
  CHECK(r.active[2]);
  CHECK(r.score[3] > 4.0 * std::max({r.score[0], r.score[1], r.score[2]}));
  CHECK(r.sign[0] == 1);
  CHECK(r.sign[2] == -1);
  CHECK(r.parameter("beta") != nullptr);
  CHECK(r.diagnostics.max_rhat < 1.1);

  opt.rois = {"nope"};
  CHECK_THROWS_AS(fit_dataset(d, X, opt, 4, "", 1), ConfigError);
}

TEST_CASE("roi seeds depend on the dataset key") {
  const Eigen::MatrixXd none;
  BoldDataset d = bnr::test::noise_dataset(2, 2, 2, 24, 2.0, 8);
  FitOptions opt;
  opt.sampler.chains = 1;
  opt.sampler.warmup = 20;
  opt.sampler.draws = 10;
  const auto a = fit_dataset(d, none, opt, 1, "x", 1);
  const auto b = fit_dataset(d, none, opt, 1, "y", 1);
  const auto a2 = fit_dataset(d, none, opt, 1, "x", 1);
  CHECK(a.rois[0].seed != b.rois[0].seed);
  CHECK(a.rois[0].seed == a2.rois[0].seed);
  CHECK(a.rois[0].score == a2.rois[0].score);
}
