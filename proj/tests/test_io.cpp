#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>

#include "bnr/io.hpp"
#include "support.hpp"

using namespace bnr;
using bnr::test::TempDir;

namespace {

BoldDataset small_dataset() {
  std::vector<Voxel> vox = grid_voxels(3, 2);
  vox[4].roi = "b, \"quoted\"";
  vox[5].roi = "b, \"quoted\"";
  const int S = 2, T = 7;
  std::vector<double> values(static_cast<std::size_t>(S) * vox.size() * T);
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = std::sin(0.37 * static_cast<double>(i)) * 1e3 + 1.0 / 3.0;
  return BoldDataset(S, T, 2.1, std::move(vox), std::move(values));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void replace_in_file(const fs::path& p, const std::string& from, const std::string& to) {
  std::string s = slurp(p);
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  s.replace(pos, from.size(), to);
  write_text(p, s);
}

}  // namespace

TEST_CASE("dataset round trip is bit exact") {
  TempDir dir("io");
  const BoldDataset d = small_dataset();
  write_dataset(d, dir / "data.json");
  CHECK(fs::exists(dir / "data.bin"));
  CHECK(fs::file_size(dir / "data.bin") == d.values().size() * 8);
  const BoldDataset r = read_dataset(dir / "data.json");
  CHECK(r.subjects() == d.subjects());
  CHECK(r.voxels() == d.voxels());
  CHECK(r.scans() == d.scans());
  CHECK(r.tr() == d.tr());
  CHECK(r.values() == d.values());
  for (int v = 0; v < d.voxels(); ++v) {
    CHECK(r.voxel_table()[v].coord == d.voxel_table()[v].coord);
    CHECK(r.voxel_table()[v].roi == d.voxel_table()[v].roi);
  }
}

TEST_CASE("payload is little-endian float64") {
  TempDir dir("io");
  const double x[2] = {1.0, -2.5};
  write_f64(dir / "x.bin", x, 2);
  const std::string bytes = slurp(dir / "x.bin");
  REQUIRE(bytes.size() == 16);
  // 1.0 = 0x3FF0000000000000
  CHECK(static_cast<unsigned char>(bytes[7]) == 0x3F);
  CHECK(static_cast<unsigned char>(bytes[6]) == 0xF0);
  for (int i = 0; i < 6; ++i) CHECK(bytes[i] == 0);
  CHECK(read_f64(dir / "x.bin") == std::vector<double>{1.0, -2.5});
}

TEST_CASE("truncated payload raises a length error") {
  TempDir dir("io");
  write_dataset(small_dataset(), dir / "data.json");
  fs::resize_file(dir / "data.bin", fs::file_size(dir / "data.bin") - 8);
  CHECK_THROWS_AS(read_dataset(dir / "data.json"), LengthMismatchError);
  fs::resize_file(dir / "data.bin", 13);
  CHECK_THROWS_AS(read_dataset(dir / "data.json"), LengthMismatchError);
}

TEST_CASE("unknown format version is rejected") {
  TempDir dir("io");
  write_dataset(small_dataset(), dir / "data.json");
  replace_in_file(dir / "data.json", "\"format_version\": 1", "\"format_version\": 2");
  CHECK_THROWS_AS(read_dataset(dir / "data.json"), VersionMismatchError);
}

TEST_CASE("duplicate voxel coordinates are rejected") {
  TempDir dir("io");
  const BoldDataset d(1, 3, 1.0, grid_voxels(2, 1), std::vector<double>(6, 0.5));
  write_dataset(d, dir / "data.json");
  replace_in_file(dir / "data.json", "\"x\": 1", "\"x\": 0");
  CHECK_THROWS_AS(read_dataset(dir / "data.json"), DuplicateCoordinateError);
}

TEST_CASE("malformed manifests are data errors") {
  TempDir dir("io");
  write_text(dir / "bad.json", "{not json");
  CHECK_THROWS_AS(read_dataset(dir / "bad.json"), DataError);
  write_dataset(small_dataset(), dir / "data.json");
  replace_in_file(dir / "data.json", "\"scans\": 7", "\"scans\": 7.5");
  CHECK_THROWS_AS(read_dataset(dir / "data.json"), DataError);
  CHECK_THROWS_AS(read_dataset(dir / "missing.json"), Error);
}

TEST_CASE("activation map csv round trip") {
  TempDir dir("io");
  const BoldDataset d = small_dataset();
  ActivationMap m;
  m.score.assign({0.1, 0.9, 1.0 / 3.0, 0.5, 0.49999999999999994, std::numeric_limits<double>::quiet_NaN()});
  m.active.assign({true, false, true, false, true, false});
  m.sign.assign({1, 0, -1, 0, 1, 0});
  m.attach_voxels(d.voxel_table());
  export_activation_map(m, dir / "a.csv");
  const ActivationMap r = read_activation_map(dir / "a.csv");
  REQUIRE(r.size() == m.size());
  CHECK(r.score_name == m.score_name);
  CHECK(r.rois == m.rois);
  CHECK(r.coords == m.coords);
  CHECK(r.active == m.active);
  CHECK(r.sign == m.sign);
  for (std::size_t i = 0; i + 1 < m.size(); ++i) CHECK(r.score[i] == m.score[i]);
  CHECK(std::isnan(r.score.back()));

  replace_in_file(dir / "a.csv", "# bnr-activation v1", "# bnr-activation v9");
  CHECK_THROWS_AS(read_activation_map(dir / "a.csv"), VersionMismatchError);
}

TEST_CASE("format_double round trips") {
  for (double x : {0.1, 1.0 / 3.0, -1e-300, 6.02214076e23, 0.0, 5e-324}) {
    CHECK(std::strtod(format_double(x).c_str(), nullptr) == x);
  }
  CHECK(format_double(std::numeric_limits<double>::quiet_NaN()) == "nan");
}

TEST_CASE("summarize uses type 7 quantiles") {
  // R: quantile(1:10, c(.025, .5, .975)) = 1.225, 5.5, 9.775
  std::vector<double> x{7, 3, 10, 1, 5, 2, 9, 4, 8, 6};
  const Summary s = summarize(x);
  CHECK(s.mean == doctest::Approx(5.5));
  CHECK(s.sd == doctest::Approx(std::sqrt(55.0 / 6.0)));
  CHECK(s.q025 == doctest::Approx(1.225));
  CHECK(s.q50 == doctest::Approx(5.5));
  CHECK(s.q975 == doctest::Approx(9.775));
  const Summary one = summarize({4.0});
  CHECK(one.sd == 0.0);
  CHECK(one.q025 == 4.0);
  CHECK_THROWS_AS(summarize({}), DataError);
}

TEST_CASE("pvalue histogram bins") {
  Eigen::VectorXd p(6);
  p << 0.0, 0.049, 0.05, 0.5, 0.999, 1.0;
  const auto h = pvalue_histogram(p, 20);
  REQUIRE(h.size() == 20);
  CHECK(h[0] == 2);
  CHECK(h[1] == 1);
  CHECK(h[10] == 1);
  CHECK(h[19] == 2);
  int total = 0;
  for (int c : h) total += c;
  CHECK(total == 6);
}

TEST_CASE("fit report round trip") {
  TempDir dir("io");
  FitReport rep;
  rep.model = "bnr";
  rep.method_tag = "bnr_nu1000_ts0.5";
  rep.dataset = "data.json";
  RoiFit a;
  a.roi = "a";
  a.seed = 18446744073709551557ull;
  a.ok = true;
  a.voxels = {0, 1, 2};
  a.parameters = {{"tau", {summarize({1.0, 2.0, 3.0})}}, {"beta", {summarize({0.1, 0.2}), summarize({-1.0, 1.0}), summarize({5.0})}}};
  a.diagnostics = {1.003, 812.5, 640.25, 2, 0.0, true};
  a.score = {0.2, 0.7, 0.45};
  a.active = {true, false, true};
  a.sign = {1, 0, -1};
  RoiFit b;
  b.roi = "b";
  b.seed = 7;
  b.ok = false;
  b.error = "numerical failure";
  b.voxels = {3, 4, 5};
  rep.rois = {a, b};
  write_fit_report(rep, dir / "report.json");
  const FitReport r = read_fit_report(dir / "report.json");
  CHECK(r.model == rep.model);
  CHECK(r.method_tag == rep.method_tag);
  REQUIRE(r.rois.size() == 2);
  CHECK(r.failed() == 1);
  const RoiFit& ra = r.rois[0];
  CHECK(ra.seed == a.seed);
  CHECK(ra.score == a.score);
  CHECK(ra.active == a.active);
  CHECK(ra.sign == a.sign);
  CHECK(ra.diagnostics.divergences == 2);
  CHECK(ra.diagnostics.converged);
  REQUIRE(ra.parameter("beta") != nullptr);
  CHECK(ra.parameter("beta")->values.size() == 3);
  CHECK(ra.parameter("beta")->values[1].q975 == a.parameters[1].values[1].q975);
  CHECK(ra.parameter("gamma") == nullptr);
  CHECK(r.rois[1].error == b.error);

  const auto map = r.activation_map(grid_voxels(3, 2));
  REQUIRE(map.size() == 6);
  CHECK(map.active_count() == 2);
  CHECK(std::isnan(map.score[4]));
}

TEST_CASE("fit report tolerates non-finite diagnostics") {
  TempDir dir("io");
  FitReport rep;
  rep.model = "glm";
  rep.method_tag = "glm";
  RoiFit a;
  a.roi = "a";
  a.ok = true;
  a.voxels = {0};
  a.parameters = {{"tau", {summarize({1.0, 1.0})}}};
  a.diagnostics.max_rhat = std::numeric_limits<double>::quiet_NaN();
  a.score = {1.0};
  a.active = {false};
  a.sign = {0};
  rep.rois = {a};
  write_fit_report(rep, dir / "report.json");
  const FitReport r = read_fit_report(dir / "report.json");
  CHECK(std::isnan(r.rois[0].diagnostics.max_rhat));
}

TEST_CASE("draws round trip") {
  TempDir dir("io");
  PosteriorDraws d;
  d.names = {"x", "y", "z"};
  for (int c = 0; c < 2; ++c) {
    ChainResult ch;
    ch.draws.resize(5, 3);
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 3; ++j) ch.draws(i, j) = 100.0 * c + 10.0 * i + j + 0.125;
    d.chains.push_back(ch);
  }
  write_draws(d, {{"x", 0, 1}, {"yz", 1, 2}}, dir.path(), "roi");
  const PosteriorDraws r = read_draws(dir / "roi.json");
  CHECK(r.names == d.names);
  REQUIRE(r.num_chains() == 2);
  for (int c = 0; c < 2; ++c) CHECK(r.chains[c].draws == d.chains[c].draws);
  // dimension-major: first five values of chain 0 are coordinate 0
  const auto raw = read_f64(dir / "roi_chain0.bin");
  CHECK(raw[1] == 10.125);
  CHECK(raw[5] == 1.125);

  fs::resize_file(dir / "roi_chain1.bin", 8);
  CHECK_THROWS_AS(read_draws(dir / "roi.json"), LengthMismatchError);
}
