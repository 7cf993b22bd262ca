#include "bnr/study.hpp"

#include <nlohmann/json.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "bnr/diagnostics.hpp"
#include "bnr/error.hpp"
#include "bnr/parallel.hpp"
#include "bnr/priors.hpp"
#include "bnr/spatial.hpp"

namespace bnr {

using json = nlohmann::ordered_json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string fmt_g(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string safe_name(const std::string& s) {
  std::string out = s;
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.')) c = '_';
  }
  return out.empty() ? "roi" : out;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json task_to_json(const TaskDesign& t) {
  return json{{"onsets", t.onsets},
              {"durations", t.durations},
              {"amplitude", t.amplitude},
              {"total_time", t.total_time},
              {"tr", t.tr}};
}

TaskDesign task_from_json(const json& j, const std::string& where) {
  TaskDesign t;
  try {
    t.onsets = j.at("onsets").get<std::vector<double>>();
    t.durations = j.at("durations").get<std::vector<double>>();
    t.amplitude = j.value("amplitude", 1.0);
    t.total_time = j.at("total_time").get<double>();
    t.tr = j.at("tr").get<double>();
  } catch (const json::exception& e) {
    throw ConfigError(where + ": malformed task design: " + e.what());
  }
  return t;
}

// Strict reader for one config section: every key must be consumed.
class Section {
 public:
  Section(const json* j, std::string name) : j_(j), name_(std::move(name)) {
    if (j_ && !j_->is_object()) throw ConfigError("config section '" + name_ + "' must be an object");
  }

  bool has(const std::string& key) const { return j_ && j_->contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    used_.insert(key);
    try {
      const json& v = j_->at(key);
      if constexpr (std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_unsigned()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + name_ + "." + key + "' has the wrong type");
    }
  }

  const json* raw(const std::string& key) {
    if (!has(key)) return nullptr;
    used_.insert(key);
    return &j_->at(key);
  }

  void finish() const {
    if (!j_) return;
    for (const auto& [k, v] : j_->items()) {
      if (!used_.count(k)) throw ConfigError("unknown config key '" + (name_.empty() ? k : name_ + "." + k) + "'");
    }
  }

 private:
  const json* j_;
  std::string name_;
  std::set<std::string> used_;
};

struct Target {
  std::string key;
  std::string setting;
  double mu = kNaN;
  int subjects = 0;
  fs::path manifest;
  fs::path truth;  // may not exist
};

std::vector<Target> resolve_targets(const RunConfig& cfg) {
  std::vector<Target> out;
  if (!cfg.dataset.empty()) {
    Target t;
    t.setting = "dataset";
    t.manifest = cfg.dataset;
    t.truth = cfg.dataset.parent_path() / "truth.json";
    out.push_back(std::move(t));
    return out;
  }
  const StudyIndex idx = read_study(cfg.study);
  const std::set<std::string> keep(cfg.settings.begin(), cfg.settings.end());
  for (const auto& d : idx.datasets) {
    if (!keep.empty() && !keep.count(d.setting)) continue;
    out.push_back({d.key, d.setting, d.mu, d.subjects, d.manifest, d.truth});
  }
  return out;
}

Eigen::MatrixXd target_design(const RunConfig& cfg, const Target& t) {
  if (cfg.design == "none") return {};
  if (cfg.design == "inline") return design_matrix(cfg.design_tasks, cfg.fit.hrf);
  if (fs::exists(t.truth)) return design_matrix(read_truth(t.truth).tasks, cfg.fit.hrf);
  if (cfg.design == "truth") throw DataError(t.truth.string() + ": truth file required for the design");
  return {};
}

fs::path target_dir(const RunConfig& cfg, const Target& t, const std::string& method) {
  return t.key.empty() ? cfg.out / method : cfg.out / t.key / method;
}

void write_fit_outputs(const FitReport& rep, const BoldDataset& data, const fs::path& dir, double seconds) {
  write_fit_report(rep, dir / "report.json");
  export_activation_map(rep.activation_map(data.voxel_table()), dir / "activation.csv");
  write_timing(rep, seconds, dir / "timing.json");
}

std::vector<FitReport> run_fits(const RunConfig& cfg, const FitOptions& opt, const std::vector<Target>& targets,
                                bool& partial) {
  std::vector<FitReport> reports(targets.size());
  const int outer = targets.size() > 1 ? cfg.jobs : 1;
  const int inner = targets.size() > 1 ? 1 : cfg.jobs;
  std::vector<char> failed(targets.size(), 0);
  parallel_for(targets.size(), outer, [&](std::size_t i) {
    const auto& t = targets[i];
    const auto t0 = std::chrono::steady_clock::now();
    const BoldDataset data = read_dataset(t.manifest);
    const Eigen::MatrixXd design = target_design(cfg, t);
    if (opt.model == "glm" && design.cols() == 0) throw ConfigError("glm fit of " + t.manifest.string() + " needs a design");
    FitReport rep = fit_dataset(data, design, opt, cfg.seed, t.key, inner);
    rep.dataset = t.key.empty() ? t.manifest.filename().string() : t.key;
    const fs::path dir = target_dir(cfg, t, opt.method_tag());
    write_fit_outputs(rep, data, dir, seconds_since(t0));
    if (opt.save_draws) {
      for (const auto& r : rep.rois) {
        if (!r.ok || !r.draws) continue;
        std::vector<DrawBlock> blocks;
        if (opt.model == "bnr") {
          BnrLayout l{data.scans(), static_cast<int>(r.voxels.size())};
          blocks = {{"z", l.z(), l.scans},        {"log_rho", l.log_rho(), 1},         {"log_tau", l.log_tau(), 1},
                    {"log_lambda", l.log_lambda(), l.voxels}, {"eta", l.eta(), l.voxels}, {"alpha", l.alpha(), l.voxels},
                    {"log_sigma", l.log_sigma(), 1}};
        } else {
          GlmLayout l{static_cast<int>(r.voxels.size()), static_cast<int>(design.cols())};
          blocks = {{"eta", l.eta(), l.voxels * l.predictors},
                    {"log_lambda", l.log_lambda(), l.voxels * l.predictors},
                    {"log_tau", l.log_tau(), 1},
                    {"log_sigma", l.log_sigma(), 1}};
        }
        write_draws(*r.draws, blocks, dir / "draws", safe_name(r.roi));
      }
    }
    failed[i] = rep.failed() > 0;
    for (auto& r : rep.rois) r.draws.reset();
    reports[i] = std::move(rep);
  });
  partial = std::any_of(failed.begin(), failed.end(), [](char c) { return c != 0; });
  return reports;
}

void require_keys_finite(const std::vector<double>& v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw ConfigError(std::string(what) + " must be finite");
  }
}

}  // namespace

// ---------------------------------------------------------------------------------------------
// Fitting

std::string FitOptions::method_tag() const {
  if (model == "glm") return "glm";
  return "bnr_nu" + fmt_g(bnr.prior.nu) + "_ts" + fmt_g(bnr.prior.tau_star);
}

void FitOptions::validate() const {
  if (model != "bnr" && model != "glm") throw ConfigError("fit.model must be 'bnr' or 'glm'");
  bnr.validate();
  glm.validate();
  sampler.validate();
  if (!(kappa_threshold > 0.0 && kappa_threshold < 1.0)) {
    throw ConfigError("activation.kappa_threshold must lie in (0, 1)");
  }
}

Eigen::MatrixXd design_matrix(const std::vector<TaskDesign>& tasks, const HrfConfig& hrf) {
  if (tasks.empty()) return {};
  const int T = tasks.front().scans();
  Eigen::MatrixXd out(T, static_cast<Eigen::Index>(tasks.size()));
  for (std::size_t k = 0; k < tasks.size(); ++k) {
    if (tasks[k].scans() != T) throw ConfigError("design: tasks disagree on the number of scans");
    out.col(static_cast<Eigen::Index>(k)) = bold_predictor(tasks[k], hrf);
  }
  return out;
}

namespace {

std::vector<Summary> summarize_columns(const std::vector<Eigen::MatrixXd>& chains, int offset, int count) {
  std::vector<Summary> out;
  out.reserve(count);
  std::vector<double> buf;
  for (int j = offset; j < offset + count; ++j) {
    buf.clear();
    for (const auto& c : chains) buf.insert(buf.end(), c.col(j).data(), c.col(j).data() + c.rows());
    out.push_back(summarize(buf));
  }
  return out;
}

DiagnosticSummary summarize_diagnostics(const Diagnostics& d) {
  DiagnosticSummary s;
  s.max_rhat = d.max_rhat();
  s.min_ess_bulk = d.min_ess_bulk();
  s.min_ess_tail = d.min_ess_tail();
  s.divergences = d.divergences;
  s.depth_saturation = d.depth_saturation;
  s.converged = d.converged();
  return s;
}

LogDensityFn as_fn(const auto& model) {
  return [&model](const Eigen::VectorXd& x, Eigen::VectorXd& g) { return model.log_density_gradient(x, g); };
}

}  // namespace

RoiFit fit_roi(const BoldDataset& standardized, const std::vector<int>& voxels, const Eigen::MatrixXd& predictors,
               const FitOptions& opt, std::uint64_t seed, int jobs) {
  RoiFit fit;
  fit.seed = seed;
  fit.voxels = voxels;
  const BoldDataset sub = standardized.subset(voxels);
  const RoiData rd = RoiData::from_dataset(sub);
  const int V = rd.voxels, T = rd.scans;
  SamplerConfig sc = opt.sampler;
  sc.seed = seed;
  sc.jobs = jobs;

  std::vector<Eigen::MatrixXd> derived;
  std::vector<std::string> names;
  PosteriorDraws draws;
  Eigen::VectorXd score(V);
  fit.active.assign(V, false);
  fit.sign.assign(V, 0);

  if (opt.model == "bnr") {
    std::vector<Coord> coords;
    for (const auto& v : sub.voxel_table()) coords.push_back(v.coord);
    const BnrModel model(rd, build_roi_graph(coords), opt.bnr);
    const BnrLayout& l = model.layout();
    draws = nuts_sample(as_fn(model), model.dim(), sc, model.initial_point(), l.names());
    const int cols = T + 2 * V + 3;
    for (const auto& c : draws.chains) {
      Eigen::MatrixXd d(c.draws.rows(), cols);
      for (Eigen::Index i = 0; i < c.draws.rows(); ++i) {
        const BnrDerived q = model.derive(c.draws.row(i).transpose());
        d.row(i).segment(0, T) = q.f.transpose();
        d.row(i).segment(T, V) = q.beta.transpose();
        d.row(i).segment(T + V, V) = q.kappa.transpose();
        d(i, T + 2 * V) = q.rho;
        d(i, T + 2 * V + 1) = q.tau;
        d(i, T + 2 * V + 2) = q.sigma;
      }
      derived.push_back(std::move(d));
    }
    for (int t = 0; t < T; ++t) names.push_back("f[" + std::to_string(t) + "]");
    for (int v = 0; v < V; ++v) names.push_back("beta[" + std::to_string(v) + "]");
    for (int v = 0; v < V; ++v) names.push_back("kappa[" + std::to_string(v) + "]");
    names.insert(names.end(), {"rho", "tau", "sigma"});
    fit.parameters = {{"f", summarize_columns(derived, 0, T)},
                      {"beta", summarize_columns(derived, T, V)},
                      {"kappa", summarize_columns(derived, T + V, V)},
                      {"rho", summarize_columns(derived, T + 2 * V, 1)},
                      {"tau", summarize_columns(derived, T + 2 * V + 1, 1)},
                      {"sigma", summarize_columns(derived, T + 2 * V + 2, 1)}};
    const auto& kap = fit.parameters[2].values;
    for (int v = 0; v < V; ++v) score[v] = kap[v].mean;
    int roi_sign = 0;
    if (predictors.cols() > 0) {
      Eigen::VectorXd fbar(T);
      for (int t = 0; t < T; ++t) fbar[t] = fit.parameters[0].values[t].mean;
      const Eigen::VectorXd ref = predictors.rowwise().sum();
      const double r = pearson(std::span<const double>(fbar.data(), T), std::span<const double>(ref.data(), T));
      roi_sign = r >= 0.0 ? 1 : -1;
    }
    for (int v = 0; v < V; ++v) {
      fit.active[v] = score[v] < opt.kappa_threshold;
      fit.sign[v] = fit.active[v] ? roi_sign : 0;
    }
  } else {
    if (predictors.rows() != T || predictors.cols() < 1) throw ConfigError("glm: design does not match the dataset");
    const int K = static_cast<int>(predictors.cols());
    const GlmModel model(rd, predictors, opt.glm);
    draws = nuts_sample(as_fn(model), model.dim(), sc, std::nullopt, model.layout().names());
    const int cols = 2 * V * K + 2;
    for (const auto& c : draws.chains) {
      Eigen::MatrixXd d(c.draws.rows(), cols);
      for (Eigen::Index i = 0; i < c.draws.rows(); ++i) {
        const GlmDerived q = model.derive(c.draws.row(i).transpose());
        for (int v = 0; v < V; ++v) {
          for (int k = 0; k < K; ++k) {
            d(i, v * K + k) = q.beta(v, k);
            d(i, V * K + v * K + k) = q.kappa(v, k);
          }
        }
        d(i, 2 * V * K) = q.tau;
        d(i, 2 * V * K + 1) = q.sigma;
      }
      derived.push_back(std::move(d));
    }
    for (int v = 0; v < V; ++v)
      for (int k = 0; k < K; ++k) names.push_back("beta[" + std::to_string(v) + "," + std::to_string(k) + "]");
    for (int v = 0; v < V; ++v)
      for (int k = 0; k < K; ++k) names.push_back("kappa[" + std::to_string(v) + "," + std::to_string(k) + "]");
    names.insert(names.end(), {"tau", "sigma"});
    fit.parameters = {{"beta", summarize_columns(derived, 0, V * K)},
                      {"kappa", summarize_columns(derived, V * K, V * K)},
                      {"tau", summarize_columns(derived, 2 * V * K, 1)},
                      {"sigma", summarize_columns(derived, 2 * V * K + 1, 1)}};
    for (int v = 0; v < V; ++v) {
      int best = 0;
      for (int k = 1; k < K; ++k) {
        if (fit.parameters[1].values[v * K + k].mean < fit.parameters[1].values[v * K + best].mean) best = k;
      }
      score[v] = fit.parameters[1].values[v * K + best].mean;
      fit.active[v] = score[v] < opt.kappa_threshold;
      fit.sign[v] = fit.active[v] ? (fit.parameters[0].values[v * K + best].mean >= 0.0 ? 1 : -1) : 0;
    }
  }

  Diagnostics diag = diagnose(derived, names);
  const Diagnostics raw = diagnose(draws, opt.sampler.max_depth);
  diag.divergences = raw.divergences;
  diag.depth_saturation = raw.depth_saturation;
  fit.diagnostics = summarize_diagnostics(diag);
  fit.score.assign(score.data(), score.data() + V);
  if (opt.save_draws) fit.draws = std::move(draws);
  fit.ok = true;
  return fit;
}

FitReport fit_dataset(const BoldDataset& data, const Eigen::MatrixXd& predictors, const FitOptions& opt,
                      std::uint64_t seed, const std::string& dataset_key, int jobs) {
  opt.validate();
  FitReport rep;
  rep.model = opt.model;
  rep.method_tag = opt.method_tag();
  rep.dataset = dataset_key;
  rep.kappa_threshold = opt.kappa_threshold;
  const Standardized st = standardize(data);

  const auto labels = data.roi_labels();
  std::vector<std::string> selected;
  for (const auto& l : labels) {
    if (opt.rois.empty() || std::find(opt.rois.begin(), opt.rois.end(), l) != opt.rois.end()) selected.push_back(l);
  }
  for (const auto& r : opt.rois) {
    if (std::find(labels.begin(), labels.end(), r) == labels.end()) throw ConfigError("fit.rois: unknown ROI '" + r + "'");
  }
  rep.rois.resize(selected.size());
  const int roi_jobs = std::max(1, std::min<int>(jobs, static_cast<int>(selected.size())));
  const int chain_jobs = std::max(1, jobs / roi_jobs);
  const std::uint64_t key = fnv1a(dataset_key);
  parallel_for(selected.size(), roi_jobs, [&](std::size_t r) {
    const std::string& label = selected[r];
    // ROI index within the dataset's full label list keeps seeds stable under ROI filtering.
    const auto roi_index = static_cast<std::uint64_t>(std::find(labels.begin(), labels.end(), label) - labels.begin());
    const std::uint64_t roi_seed = derive_seed(seed, key, roi_index);
    const auto t0 = std::chrono::steady_clock::now();
    RoiFit fit;
    try {
      fit = fit_roi(st.data, data.roi_voxels(label), predictors, opt, roi_seed, chain_jobs);
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      fit = RoiFit{};
      fit.seed = roi_seed;
      fit.voxels = data.roi_voxels(label);
      fit.ok = false;
      fit.error = e.what();
    }
    fit.roi = label;
    fit.seconds = seconds_since(t0);
    rep.rois[r] = std::move(fit);
  });
  return rep;
}

// ---------------------------------------------------------------------------------------------
// Study files

void write_truth(const GroundTruth& truth, const SimConfig& cfg, const fs::path& path) {
  json tasks = json::array();
  for (const auto& t : truth.tasks) tasks.push_back(task_to_json(t));
  auto mat_rows = [](const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      json row = json::array();
      for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
      out.push_back(std::move(row));
    }
    return out;
  };
  json subject_beta = json::array();
  for (const auto& b : truth.beta) subject_beta.push_back(mat_rows(b));
  json subject_active = json::array();
  for (const auto& a : truth.subject_active) subject_active.push_back(std::vector<int>(a.begin(), a.end()));
  json ar = json::array();
  for (const auto& e : truth.ar_coefficients) ar.push_back(std::vector<double>(e.begin(), e.end()));
  json j{{"format", "bnr-truth"},
         {"format_version", 1},
         {"grid", {cfg.nx, cfg.ny}},
         {"mu", cfg.mu},
         {"sigma", cfg.sigma},
         {"seed", cfg.seed},
         {"center", {truth.center_x, truth.center_y}},
         {"radius_mean", cfg.radius_mean},
         {"radii", truth.radii},
         {"consensus_active", std::vector<int>(truth.consensus_active.begin(), truth.consensus_active.end())},
         {"white_sd", truth.white_sd},
         {"reference_rms", truth.reference_rms},
         {"tasks", tasks},
         {"ar_coefficients", ar},
         {"mean_beta", mat_rows(truth.mean_beta)},
         {"subject_beta", subject_beta},
         {"subject_active", subject_active},
         {"signal", mat_rows(truth.signal)}};
  write_text(path, j.dump() + "\n");
}

TruthFile read_truth(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  if (j.value("format", "") != "bnr-truth") throw DataError(path.string() + ": not a truth file");
  if (j.value("format_version", 0) != 1) throw VersionMismatchError(path.string() + ": unsupported truth version");
  TruthFile t;
  try {
    for (const auto& tj : j.at("tasks")) t.tasks.push_back(task_from_json(tj, path.string()));
    t.mu = j.at("mu").get<double>();
    for (int a : j.at("consensus_active").get<std::vector<int>>()) t.consensus_active.push_back(a != 0);
    const auto rows = j.at("signal").get<std::vector<std::vector<double>>>();
    const std::size_t T = rows.empty() ? 0 : rows.front().size();
    t.signal.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(T));
    for (std::size_t v = 0; v < rows.size(); ++v) {
      if (rows[v].size() != T) throw DataError(path.string() + ": ragged signal matrix");
      for (std::size_t k = 0; k < T; ++k) t.signal(v, k) = rows[v][k];
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (static_cast<Eigen::Index>(t.consensus_active.size()) != t.signal.rows()) {
    throw DataError(path.string() + ": mask and signal disagree on the voxel count");
  }
  return t;
}

StudyIndex read_study(const fs::path& dir) {
  const fs::path path = dir / "study.json";
  if (!fs::exists(path)) throw DataError(path.string() + ": study index not found");
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": malformed JSON: " + e.what());
  }
  if (j.value("format", "") != "bnr-study") throw DataError(path.string() + ": not a study index");
  if (j.value("format_version", 0) != 1) throw VersionMismatchError(path.string() + ": unsupported study version");
  StudyIndex idx;
  idx.root = dir;
  try {
    idx.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& s : j.at("settings")) {
      for (const auto& r : s.at("replicates")) {
        StudyDataset d;
        d.setting = s.at("name").get<std::string>();
        d.mu = s.at("mu").get<double>();
        d.subjects = s.at("subjects").get<int>();
        d.replicate = r.at("index").get<int>();
        d.seed = r.at("seed").get<std::uint64_t>();
        d.key = r.at("key").get<std::string>();
        d.manifest = dir / d.key / "dataset.json";
        d.truth = dir / d.key / "truth.json";
        idx.datasets.push_back(std::move(d));
      }
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return idx;
}

// ---------------------------------------------------------------------------------------------
// Scoring

std::vector<RocPoint> roc_curve(const std::vector<double>& score, const std::vector<bool>& truth) {
  if (score.size() != truth.size()) throw DataError("roc: size mismatch");
  const auto pos = static_cast<double>(std::count(truth.begin(), truth.end(), true));
  const double neg = static_cast<double>(truth.size()) - pos;
  if (pos == 0 || neg == 0) throw DataError("roc: need both positive and negative voxels");
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return score[a] < score[b]; });
  std::vector<RocPoint> out{{-std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  double tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = score[order[i]];
    while (i < order.size() && score[order[i]] == s) {
      (truth[order[i]] ? tp : fp) += 1.0;
      ++i;
    }
    out.push_back({s, fp / neg, tp / pos});
  }
  return out;
}

double auc_trapezoid(const std::vector<RocPoint>& roc) {
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i) {
    a += (roc[i].fpr - roc[i - 1].fpr) * 0.5 * (roc[i].tpr + roc[i - 1].tpr);
  }
  return a;
}

Confusion confusion(const std::vector<bool>& predicted, const std::vector<bool>& truth) {
  if (predicted.size() != truth.size() || truth.empty()) throw DataError("confusion: size mismatch");
  double tp = 0, tn = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i]) {
      (predicted[i] ? tp : fn) += 1.0;
    } else {
      (predicted[i] ? fp : tn) += 1.0;
    }
  }
  Confusion c;
  c.accuracy = (tp + tn) / static_cast<double>(truth.size());
  c.sensitivity = tp + fn > 0 ? tp / (tp + fn) : kNaN;
  c.specificity = tn + fp > 0 ? tn / (tn + fp) : kNaN;
  return c;
}

double aligned_mse(const Eigen::VectorXd& truth, const Eigen::VectorXd& estimate, double* scale) {
  if (truth.size() != estimate.size() || truth.size() < 2) throw DataError("aligned_mse: size mismatch");
  const Eigen::VectorXd y = truth.array() - truth.mean();
  const double ysd = std::sqrt(y.squaredNorm() / static_cast<double>(y.size()));
  if (!(ysd > 0.0)) throw DataError("aligned_mse: constant truth");
  const Eigen::VectorXd ys = y / ysd;
  const Eigen::VectorXd x = estimate.array() - estimate.mean();
  const double xx = x.squaredNorm();
  const double c = xx > 0.0 ? x.dot(ys) / xx : 0.0;
  if (scale) *scale = c;
  return (ys - c * x).squaredNorm() / static_cast<double>(y.size());
}

// ---------------------------------------------------------------------------------------------
// Configuration

RunConfig parse_run_config(const std::string& json_text, const fs::path& base_dir) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig cfg;
  cfg.base_dir = base_dir;
  auto resolve = [&](const std::string& p) { return p.empty() ? fs::path{} : (base_dir / p).lexically_normal(); };

  Section top(&root, "");
  cfg.seed = top.get<std::uint64_t>("seed", cfg.seed);
  cfg.jobs = top.get<int>("jobs", cfg.jobs);
  cfg.out = resolve(top.get<std::string>("out", ""));

  Section sim(top.raw("simulate"), "simulate");
  if (const json* g = sim.raw("grid")) {
    if (!g->is_array() || g->size() != 2 || !(*g)[0].is_number_integer() || !(*g)[1].is_number_integer()) {
      throw ConfigError("simulate.grid must be [nx, ny]");
    }
    cfg.sim.nx = (*g)[0].get<int>();
    cfg.sim.ny = (*g)[1].get<int>();
  }
  cfg.sim.total_time = sim.get<double>("total_time", cfg.sim.total_time);
  cfg.sim.tr = sim.get<double>("tr", cfg.sim.tr);
  cfg.sim_subjects = sim.get<std::vector<int>>("subjects", cfg.sim_subjects);
  cfg.sim_mu = sim.get<std::vector<double>>("mu", cfg.sim_mu);
  cfg.sim.sigma = sim.get<double>("sigma", cfg.sim.sigma);
  if (const json* c = sim.raw("center")) {
    try {
      const auto v = c->get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("");
      cfg.sim.center_x = v[0];
      cfg.sim.center_y = v[1];
    } catch (const std::exception&) {
      throw ConfigError("simulate.center must be [x, y]");
    }
  }
  cfg.sim.radius_mean = sim.get<double>("radius_mean", cfg.sim.radius_mean);
  cfg.sim.radius_sd = sim.get<double>("radius_sd", cfg.sim.radius_sd);
  cfg.sim.radius_min = sim.get<double>("radius_min", cfg.sim.radius_min);
  cfg.sim.fade_edge = sim.get<double>("fade_edge", cfg.sim.fade_edge);
  if (const json* a = sim.raw("ar_mean")) {
    try {
      const auto v = a->get<std::vector<double>>();
      if (v.size() != 3) throw ConfigError("");
      cfg.sim.ar_mean = {v[0], v[1], v[2]};
    } catch (const std::exception&) {
      throw ConfigError("simulate.ar_mean must have three entries");
    }
  }
  cfg.sim.ar_var = sim.get<double>("ar_var", cfg.sim.ar_var);
  cfg.sim.ar_scale = sim.get<double>("ar_scale", cfg.sim.ar_scale);
  cfg.sim.snr = sim.get<double>("snr", cfg.sim.snr);
  cfg.sim.baseline = sim.get<double>("baseline", cfg.sim.baseline);
  cfg.sim.drift_fraction = sim.get<double>("drift_fraction", cfg.sim.drift_fraction);
  if (const json* d = sim.raw("drift_periods")) {
    try {
      const auto v = d->get<std::vector<double>>();
      if (v.size() != 2) throw ConfigError("");
      cfg.sim.drift_periods = {v[0], v[1]};
    } catch (const std::exception&) {
      throw ConfigError("simulate.drift_periods must have two entries");
    }
  }
  cfg.replicates = sim.get<int>("replicates", cfg.replicates);
  if (const json* t = sim.raw("tasks")) {
    if (!t->is_array()) throw ConfigError("simulate.tasks must be an array");
    for (const auto& tj : *t) cfg.sim.tasks.push_back(task_from_json(tj, "simulate.tasks"));
  }
  sim.finish();

  Section data(top.raw("data"), "data");
  cfg.dataset = resolve(data.get<std::string>("dataset", ""));
  cfg.study = resolve(data.get<std::string>("study", ""));
  cfg.settings = data.get<std::vector<std::string>>("settings", {});
  if (const json* d = data.raw("design")) {
    if (d->is_string()) {
      cfg.design = d->get<std::string>();
      if (cfg.design != "auto" && cfg.design != "truth" && cfg.design != "none") {
        throw ConfigError("data.design must be 'auto', 'truth', 'none' or a list of tasks");
      }
    } else if (d->is_array()) {
      cfg.design = "inline";
      for (const auto& tj : *d) cfg.design_tasks.push_back(task_from_json(tj, "data.design"));
    } else {
      throw ConfigError("data.design must be a string or a list of tasks");
    }
  }
  data.finish();

  FitOptions& fo = cfg.fit;
  fo.sampler.init_jitter = 0.5;
  Section fit(top.raw("fit"), "fit");
  fo.model = fit.get<std::string>("model", fo.model);
  fo.rois = fit.get<std::vector<std::string>>("rois", {});
  fo.save_draws = fit.get<bool>("save_draws", fo.save_draws);
  fit.finish();

  Section prior(top.raw("prior"), "prior");
  fo.bnr.prior.nu = prior.get<double>("nu", fo.bnr.prior.nu);
  fo.bnr.prior.tau_star = prior.get<double>("tau_star", fo.bnr.prior.tau_star);
  prior.finish();

  Section kernel(top.raw("kernel"), "kernel");
  fo.bnr.neighbors = kernel.get<int>("neighbors", fo.bnr.neighbors);
  fo.bnr.rho_median = kernel.get<double>("rho_median", fo.bnr.rho_median);
  fo.bnr.rho_log_sd = kernel.get<double>("rho_log_sd", fo.bnr.rho_log_sd);
  kernel.finish();

  Section noise(top.raw("noise"), "noise");
  fo.bnr.sigma_df = fo.glm.sigma_df = noise.get<double>("sigma_df", fo.bnr.sigma_df);
  fo.bnr.sigma_scale = fo.glm.sigma_scale = noise.get<double>("sigma_scale", fo.bnr.sigma_scale);
  noise.finish();

  Section glm(top.raw("glm"), "glm");
  fo.glm.global_scale = glm.get<double>("global_scale", fo.glm.global_scale);
  fo.glm.local_df = glm.get<double>("local_df", fo.glm.local_df);
  glm.finish();

  Section smp(top.raw("sampler"), "sampler");
  fo.sampler.chains = smp.get<int>("chains", fo.sampler.chains);
  fo.sampler.warmup = smp.get<int>("warmup", fo.sampler.warmup);
  fo.sampler.draws = smp.get<int>("draws", fo.sampler.draws);
  fo.sampler.target_accept = smp.get<double>("target_accept", fo.sampler.target_accept);
  fo.sampler.max_depth = smp.get<int>("max_depth", fo.sampler.max_depth);
  fo.sampler.init_jitter = smp.get<double>("init_jitter", fo.sampler.init_jitter);
  smp.finish();

  Section act(top.raw("activation"), "activation");
  fo.kappa_threshold = act.get<double>("kappa_threshold", fo.kappa_threshold);
  act.finish();

  Section hrf(top.raw("hrf"), "hrf");
  fo.hrf.peak_delay = hrf.get<double>("peak_delay", fo.hrf.peak_delay);
  fo.hrf.undershoot_delay = hrf.get<double>("undershoot_delay", fo.hrf.undershoot_delay);
  fo.hrf.peak_dispersion = hrf.get<double>("peak_dispersion", fo.hrf.peak_dispersion);
  fo.hrf.undershoot_dispersion = hrf.get<double>("undershoot_dispersion", fo.hrf.undershoot_dispersion);
  fo.hrf.undershoot_ratio = hrf.get<double>("undershoot_ratio", fo.hrf.undershoot_ratio);
  hrf.finish();
  cfg.sim.hrf = fo.hrf;

  Section isc(top.raw("isc"), "isc");
  if (isc.has("methods")) {
    cfg.isc_methods.clear();
    for (const auto& m : isc.get<std::vector<std::string>>("methods", {})) cfg.isc_methods.push_back(parse_null_method(m));
  }
  cfg.permutations = isc.get<int>("permutations", cfg.permutations);
  cfg.alpha = isc.get<double>("alpha", cfg.alpha);
  cfg.fdr = isc.get<bool>("fdr", cfg.fdr);
  isc.finish();

  Section sweep(top.raw("sweep"), "sweep");
  cfg.sweep_nu = sweep.get<std::vector<double>>("nu", {});
  cfg.sweep_tau_star = sweep.get<std::vector<double>>("tau_star", {});
  sweep.finish();

  Section score(top.raw("score"), "score");
  cfg.fits = resolve(score.get<std::string>("fits", ""));
  score.finish();

  top.finish();
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw ConfigError("config file not found: " + path.string());
  return parse_run_config(read_text(path), path.parent_path());
}

void validate_command(const RunConfig& cfg, const std::string& command) {
  static const std::set<std::string> known{"simulate", "fit", "isc", "score", "sweep"};
  if (!known.count(command)) throw ConfigError("unknown command '" + command + "'");
  if (cfg.out.empty()) throw ConfigError("an output directory is required (--out or \"out\")");
  if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");

  if (command == "simulate") {
    if (cfg.replicates < 1) throw ConfigError("simulate.replicates must be at least 1");
    if (cfg.sim_mu.empty() || cfg.sim_subjects.empty()) throw ConfigError("simulate.mu and simulate.subjects must be nonempty");
    require_keys_finite(cfg.sim_mu, "simulate.mu");
    std::set<std::string> names;
    for (double mu : cfg.sim_mu) {
      for (int s : cfg.sim_subjects) {
        SimConfig c = cfg.sim;
        c.mu = mu;
        c.subjects = s;
        c.validate();
        if (!names.insert("mu_" + fmt_g(mu) + "_S_" + std::to_string(s)).second) {
          throw ConfigError("simulate: duplicate setting mu=" + fmt_g(mu) + ", S=" + std::to_string(s));
        }
      }
    }
    return;
  }

  if (command == "score") {
    if (cfg.study.empty()) throw ConfigError("score needs data.study");
    if (!fs::exists(cfg.study / "study.json")) throw ConfigError("study index not found: " + (cfg.study / "study.json").string());
    const fs::path fits = cfg.fits.empty() ? cfg.out : cfg.fits;
    if (!fs::exists(fits)) throw ConfigError("fits directory not found: " + fits.string());
    return;
  }

  if (cfg.dataset.empty() == cfg.study.empty()) throw ConfigError("exactly one of data.dataset and data.study is required");
  if (!cfg.dataset.empty() && !fs::exists(cfg.dataset)) throw ConfigError("dataset not found: " + cfg.dataset.string());
  if (!cfg.study.empty()) {
    if (!fs::exists(cfg.study / "study.json")) throw ConfigError("study index not found: " + (cfg.study / "study.json").string());
    if (!cfg.settings.empty()) {
      const StudyIndex idx = read_study(cfg.study);
      for (const auto& s : cfg.settings) {
        const bool found = std::any_of(idx.datasets.begin(), idx.datasets.end(), [&](const auto& d) { return d.setting == s; });
        if (!found) throw ConfigError("data.settings: unknown setting '" + s + "'");
      }
    }
  }
  if (cfg.design == "inline") {
    for (const auto& t : cfg.design_tasks) t.validate();
  }

  if (command == "fit") {
    cfg.fit.validate();
    if (cfg.fit.model == "glm" && cfg.design == "none") throw ConfigError("glm fits need a design");
  } else if (command == "isc") {
    if (cfg.isc_methods.empty()) throw ConfigError("isc.methods must be nonempty");
    if (cfg.permutations < 100) throw ConfigError("isc.permutations must be at least 100");
    if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw ConfigError("isc.alpha must lie in (0, 1)");
  } else if (command == "sweep") {
    if (cfg.sweep_nu.empty() || cfg.sweep_tau_star.empty()) throw ConfigError("sweep.nu and sweep.tau_star must be nonempty");
    require_keys_finite(cfg.sweep_nu, "sweep.nu");
    require_keys_finite(cfg.sweep_tau_star, "sweep.tau_star");
    for (double nu : cfg.sweep_nu) {
      for (double ts : cfg.sweep_tau_star) {
        FitOptions o = cfg.fit;
        o.model = "bnr";
        o.bnr.prior.nu = nu;
        o.bnr.prior.tau_star = ts;
        o.validate();
      }
    }
  }
}

// ---------------------------------------------------------------------------------------------
// Commands

int cmd_simulate(const RunConfig& cfg) {
  validate_command(cfg, "simulate");
  SimConfig base = cfg.sim;
  base.seed = cfg.seed;
  const auto settings = settings_grid(base, cfg.sim_mu, cfg.sim_subjects);
  json jsettings = json::array();
  for (const auto& s : settings) {
    const auto reps = replicate_study(s.config, cfg.replicates, cfg.jobs);
    json jreps = json::array();
    for (const auto& r : reps) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "rep_%03d", r.index);
      const std::string key = s.name + "/" + buf;
      SimConfig rc = s.config;
      rc.seed = r.seed;
      write_dataset(r.sim.data, cfg.out / key / "dataset.json");
      write_truth(r.sim.truth, rc, cfg.out / key / "truth.json");
      jreps.push_back({{"index", r.index}, {"seed", r.seed}, {"key", key}});
    }
    jsettings.push_back({{"name", s.name},
                         {"mu", s.mu},
                         {"subjects", s.subjects},
                         {"seed", s.config.seed},
                         {"replicates", jreps}});
  }
  json j{{"format", "bnr-study"},
         {"format_version", 1},
         {"seed", cfg.seed},
         {"grid", {cfg.sim.nx, cfg.sim.ny}},
         {"total_time", cfg.sim.total_time},
         {"tr", cfg.sim.tr},
         {"snr", cfg.sim.snr},
         {"settings", jsettings}};
  write_text(cfg.out / "study.json", j.dump(1) + "\n");
  return kExitOk;
}

int cmd_fit(const RunConfig& cfg) {
  validate_command(cfg, "fit");
  bool partial = false;
  run_fits(cfg, cfg.fit, resolve_targets(cfg), partial);
  return partial ? kExitPartial : kExitOk;
}

int cmd_isc(const RunConfig& cfg) {
  validate_command(cfg, "isc");
  const auto targets = resolve_targets(cfg);
  const int outer = targets.size() > 1 ? cfg.jobs : 1;
  const int inner = targets.size() > 1 ? 1 : cfg.jobs;
  parallel_for(targets.size(), outer, [&](std::size_t i) {
    const auto& t = targets[i];
    const BoldDataset data = read_dataset(t.manifest);
    for (std::size_t m = 0; m < cfg.isc_methods.size(); ++m) {
      const NullMethod method = cfg.isc_methods[m];
      const std::uint64_t seed = derive_seed(cfg.seed, fnv1a(t.key), 1000 + static_cast<std::uint64_t>(method));
      const IscResult res = isc_test(data, method, cfg.permutations, cfg.alpha, cfg.fdr, seed, inner);
      const fs::path dir = target_dir(cfg, t, "isc_" + to_string(method));
      export_isc_result(res, data.voxel_table(), dir / "isc.csv");
      export_activation_map(res.activation_map(data.voxel_table()), dir / "activation.csv");
      const auto hist = pvalue_histogram(res.p, 20);
      std::ostringstream h;
      h << "bin,lower,upper,count\n";
      for (int b = 0; b < 20; ++b) h << b << ',' << format_double(b / 20.0) << ',' << format_double((b + 1) / 20.0) << ',' << hist[b] << '\n';
      write_text(dir / "pvalue_hist.csv", h.str());
    }
  });
  return kExitOk;
}

namespace {

struct MethodAccumulator {
  std::vector<Confusion> conf;
  std::vector<double> scores;
  std::vector<bool> truths;
  std::vector<double> mse, scale;
  Eigen::VectorXd active_sum;
  int maps = 0;
};

std::string csv_num(double x) { return std::isfinite(x) ? format_double(x) : "nan"; }

double mean_of(const std::vector<double>& v) {
  double s = 0;
  int n = 0;
  for (double x : v) {
    if (std::isfinite(x)) {
      s += x;
      ++n;
    }
  }
  return n ? s / n : kNaN;
}

}  // namespace

int cmd_score(const RunConfig& cfg) {
  validate_command(cfg, "score");
  const fs::path fits = cfg.fits.empty() ? cfg.out : cfg.fits;
  const StudyIndex idx = read_study(cfg.study);
  const std::set<std::string> keep(cfg.settings.begin(), cfg.settings.end());

  std::vector<std::string> setting_order;
  std::map<std::string, std::pair<double, int>> setting_info;
  std::map<std::string, std::map<std::string, MethodAccumulator>> acc;
  std::map<std::pair<int, std::string>, MethodAccumulator> by_subjects;
  std::vector<Voxel> grid_voxels_table;

  for (const auto& d : idx.datasets) {
    if (!keep.empty() && !keep.count(d.setting)) continue;
    if (!fs::exists(d.truth)) throw DataError(d.truth.string() + ": missing truth");
    const TruthFile truth = read_truth(d.truth);
    if (!setting_info.count(d.setting)) {
      setting_order.push_back(d.setting);
      setting_info[d.setting] = {d.mu, d.subjects};
    }
    const fs::path dir = fits / d.key;
    if (!fs::exists(dir)) continue;
    std::vector<fs::path> methods;
    for (const auto& e : fs::directory_iterator(dir)) {
      if (e.is_directory() && fs::exists(e.path() / "activation.csv")) methods.push_back(e.path());
    }
    std::sort(methods.begin(), methods.end());
    const BoldDataset data = read_dataset(d.manifest);
    if (grid_voxels_table.empty()) grid_voxels_table = data.voxel_table();
    const Standardized st = standardize(data);
    const auto V = static_cast<int>(truth.consensus_active.size());
    if (V != data.voxels()) throw DataError(d.key + ": truth and dataset disagree on voxels");

    for (const auto& mdir : methods) {
      const std::string method = mdir.filename().string();
      const ActivationMap map = read_activation_map(mdir / "activation.csv");
      if (static_cast<int>(map.size()) != V) throw DataError((mdir / "activation.csv").string() + ": voxel count mismatch");
      MethodAccumulator& a = acc[d.setting][method];
      MethodAccumulator& b = by_subjects[{d.subjects, method}];
      a.conf.push_back(confusion(map.active, truth.consensus_active));
      for (int v = 0; v < V; ++v) {
        const double s = std::isfinite(map.score[v]) ? map.score[v] : 1.0;
        a.scores.push_back(s);
        a.truths.push_back(truth.consensus_active[v]);
        b.scores.push_back(s);
        b.truths.push_back(truth.consensus_active[v]);
      }
      if (a.active_sum.size() == 0) a.active_sum = Eigen::VectorXd::Zero(V);
      for (int v = 0; v < V; ++v) a.active_sum[v] += map.active[v] ? 1.0 : 0.0;
      ++a.maps;

      if (truth.mu > 0.0 && fs::exists(mdir / "report.json")) {
        const FitReport rep = read_fit_report(mdir / "report.json");
        for (const auto& r : rep.rois) {
          const ParameterSummary* f = r.ok ? r.parameter("f") : nullptr;
          if (!f) continue;
          Eigen::VectorXd fbar(static_cast<Eigen::Index>(f->values.size()));
          for (std::size_t t = 0; t < f->values.size(); ++t) fbar[static_cast<Eigen::Index>(t)] = f->values[t].mean;
          std::vector<double> mses, scales;
          for (int v : r.voxels) {
            if (!truth.consensus_active[v]) continue;
            double c = 0.0;
            mses.push_back(aligned_mse(truth.signal.row(v).transpose(), fbar, &c));
            scales.push_back(c);
          }
          if (!mses.empty()) {
            a.mse.push_back(mean_of(mses));
            a.scale.push_back(mean_of(scales));
          }
        }
      }
    }

    if (truth.mu > 0.0) {
      MethodAccumulator& m = acc[d.setting]["mean"];
      std::vector<double> mses, scales;
      for (int v = 0; v < V; ++v) {
        if (!truth.consensus_active[v]) continue;
        double c = 0.0;
        mses.push_back(aligned_mse(truth.signal.row(v).transpose(), mean_response(st.data, v), &c));
        scales.push_back(c);
      }
      if (!mses.empty()) {
        m.mse.push_back(mean_of(mses));
        m.scale.push_back(mean_of(scales));
      }
    }
  }

  std::ostringstream metrics, roc, grid, aucs;
  metrics << "setting,mu,subjects,method,replicates,accuracy,sensitivity,specificity,false_positive_rate,auc,mse,mse_scale\n";
  roc << "group,method,threshold,fpr,tpr\n";
  grid << "setting,method,voxel_id,x,y,z,mean_active\n";
  aucs << "subjects,method,auc\n";
  for (const auto& s : setting_order) {
    const auto [mu, subjects] = setting_info[s];
    for (const auto& [method, a] : acc[s]) {
      std::vector<double> accs, sens, spec;
      for (const auto& c : a.conf) {
        accs.push_back(c.accuracy);
        sens.push_back(c.sensitivity);
        spec.push_back(c.specificity);
      }
      double auc = kNaN;
      const bool has_both = std::count(a.truths.begin(), a.truths.end(), true) > 0 &&
                            std::count(a.truths.begin(), a.truths.end(), false) > 0;
      if (has_both) {
        const auto curve = roc_curve(a.scores, a.truths);
        auc = auc_trapezoid(curve);
        for (const auto& p : curve) {
          roc << s << ',' << method << ',' << csv_num(p.threshold) << ',' << csv_num(p.fpr) << ',' << csv_num(p.tpr) << '\n';
        }
      }
      const double sp = mean_of(spec);
      metrics << s << ',' << csv_num(mu) << ',' << subjects << ',' << method << ','
              << std::max<std::size_t>(a.conf.size(), a.mse.size()) << ',' << csv_num(mean_of(accs)) << ','
              << csv_num(mean_of(sens)) << ',' << csv_num(sp) << ',' << csv_num(1.0 - sp) << ',' << csv_num(auc) << ','
              << csv_num(mean_of(a.mse)) << ',' << csv_num(mean_of(a.scale)) << '\n';
      if (a.maps > 0) {
        for (int v = 0; v < a.active_sum.size(); ++v) {
          const auto& vx = grid_voxels_table[v];
          grid << s << ',' << method << ',' << vx.id << ',' << vx.coord[0] << ',' << vx.coord[1] << ',' << vx.coord[2] << ','
               << csv_num(a.active_sum[v] / a.maps) << '\n';
        }
      }
    }
  }
  for (const auto& [k, a] : by_subjects) {
    const bool has_both = std::count(a.truths.begin(), a.truths.end(), true) > 0 &&
                          std::count(a.truths.begin(), a.truths.end(), false) > 0;
    if (!has_both) continue;
    const auto curve = roc_curve(a.scores, a.truths);
    aucs << k.first << ',' << k.second << ',' << csv_num(auc_trapezoid(curve)) << '\n';
    for (const auto& p : curve) {
      roc << "S_" << k.first << ',' << k.second << ',' << csv_num(p.threshold) << ',' << csv_num(p.fpr) << ','
          << csv_num(p.tpr) << '\n';
    }
  }
  write_text(cfg.out / "metrics.csv", metrics.str());
  write_text(cfg.out / "roc.csv", roc.str());
  write_text(cfg.out / "auc_by_subjects.csv", aucs.str());
  write_text(cfg.out / "activation_grid.csv", grid.str());
  return kExitOk;
}

int cmd_sweep(const RunConfig& cfg) {
  validate_command(cfg, "sweep");
  const auto targets = resolve_targets(cfg);
  bool any_partial = false;
  std::ostringstream summary, hist;
  summary << "nu,tau_star,setting,datasets,voxels,active_fraction,mean_kappa\n";
  hist << "nu,tau_star,setting,bin,lower,upper,count\n";
  constexpr int bins = 20;
  for (double nu : cfg.sweep_nu) {
    for (double ts : cfg.sweep_tau_star) {
      FitOptions opt = cfg.fit;
      opt.model = "bnr";
      opt.bnr.prior.nu = nu;
      opt.bnr.prior.tau_star = ts;
      bool partial = false;
      const auto reports = run_fits(cfg, opt, targets, partial);
      any_partial = any_partial || partial;
      std::vector<std::string> order;
      std::map<std::string, std::tuple<int, long, long, double, std::vector<long>>> cells;
      for (std::size_t i = 0; i < targets.size(); ++i) {
        const std::string& s = targets[i].setting;
        if (!cells.count(s)) {
          order.push_back(s);
          cells[s] = {0, 0, 0, 0.0, std::vector<long>(bins, 0)};
        }
        auto& [nd, nv, na, ksum, h] = cells[s];
        ++nd;
        for (const auto& r : reports[i].rois) {
          if (!r.ok) continue;
          for (std::size_t v = 0; v < r.score.size(); ++v) {
            ++nv;
            na += r.active[v] ? 1 : 0;
            ksum += r.score[v];
            h[std::clamp(static_cast<int>(r.score[v] * bins), 0, bins - 1)]++;
          }
        }
      }
      for (const auto& s : order) {
        const auto& [nd, nv, na, ksum, h] = cells[s];
        summary << format_double(nu) << ',' << format_double(ts) << ',' << s << ',' << nd << ',' << nv << ','
                << csv_num(nv ? static_cast<double>(na) / nv : kNaN) << ',' << csv_num(nv ? ksum / nv : kNaN) << '\n';
        for (int b = 0; b < bins; ++b) {
          hist << format_double(nu) << ',' << format_double(ts) << ',' << s << ',' << b << ','
               << format_double(static_cast<double>(b) / bins) << ',' << format_double(static_cast<double>(b + 1) / bins)
               << ',' << h[b] << '\n';
        }
      }
    }
  }
  write_text(cfg.out / "sweep.csv", summary.str());
  write_text(cfg.out / "kappa_hist.csv", hist.str());
  return any_partial ? kExitPartial : kExitOk;
}

int run_command(const std::string& command, const RunConfig& cfg) {
  if (command == "simulate") return cmd_simulate(cfg);
  if (command == "fit") return cmd_fit(cfg);
  if (command == "isc") return cmd_isc(cfg);
  if (command == "score") return cmd_score(cfg);
  if (command == "sweep") return cmd_sweep(cfg);
  throw ConfigError("unknown command '" + command + "'");
}

}  // namespace bnr
