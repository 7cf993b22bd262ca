#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "bnr/diagnostics.hpp"
#include "bnr/error.hpp"
#include "bnr/hrf.hpp"
#include "bnr/io.hpp"
#include "bnr/isc.hpp"
#include "bnr/nngp.hpp"
#include "bnr/priors.hpp"
#include "bnr/simulate.hpp"
#include "bnr/study.hpp"

namespace py = pybind11;
using namespace bnr;

namespace {

using Array3 = py::array_t<double, py::array::c_style | py::array::forcecast>;

BoldDataset make_dataset(const Array3& values, double tr, std::optional<std::vector<Coord>> coords,
                         std::optional<std::vector<std::string>> rois) {
  if (values.ndim() != 3) throw DataError("values must have shape (subjects, voxels, scans)");
  const auto S = static_cast<int>(values.shape(0)), V = static_cast<int>(values.shape(1)),
             T = static_cast<int>(values.shape(2));
  std::vector<Voxel> voxels;
  if (coords) {
    if (static_cast<int>(coords->size()) != V) throw DataError("coords must list one coordinate per voxel");
    for (int v = 0; v < V; ++v) voxels.push_back({v, (*coords)[v], "roi0"});
  } else {
    voxels = grid_voxels(V, 1);
  }
  if (rois) {
    if (static_cast<int>(rois->size()) != V) throw DataError("rois must list one label per voxel");
    for (int v = 0; v < V; ++v) voxels[v].roi = (*rois)[v];
  }
  std::vector<double> data(values.data(), values.data() + values.size());
  return BoldDataset(S, T, tr, std::move(voxels), std::move(data));
}

Array3 dataset_values(const BoldDataset& d) {
  Array3 out({d.subjects(), d.voxels(), d.scans()});
  std::copy(d.values().begin(), d.values().end(), out.mutable_data());
  return out;
}

Eigen::VectorXd vec(const std::vector<double>& v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size()); }

py::list report_list(const FitReport& rep) {
  py::list out;
  for (const auto& r : rep.rois) {
    py::dict d;
    d["roi"] = r.roi;
    d["seed"] = r.seed;
    d["ok"] = r.ok;
    d["error"] = r.error;
    d["voxels"] = r.voxels;
    if (r.ok) {
      d["kappa_mean"] = vec(r.score);
      d["active"] = r.active;
      d["sign"] = r.sign;
      py::dict params;
      for (const auto& p : r.parameters) {
        Eigen::VectorXd mean(static_cast<Eigen::Index>(p.values.size()));
        for (std::size_t i = 0; i < p.values.size(); ++i) mean[static_cast<Eigen::Index>(i)] = p.values[i].mean;
        params[py::str(p.name)] = mean;
      }
      d["posterior_mean"] = params;
      py::dict diag;
      diag["max_rhat"] = r.diagnostics.max_rhat;
      diag["min_ess_bulk"] = r.diagnostics.min_ess_bulk;
      diag["min_ess_tail"] = r.diagnostics.min_ess_tail;
      diag["divergences"] = r.diagnostics.divergences;
      diag["converged"] = r.diagnostics.converged;
      d["diagnostics"] = diag;
    }
    out.append(d);
  }
  return out;
}

std::vector<Eigen::VectorXd> chain_rows(const Eigen::MatrixXd& chains) {
  std::vector<Eigen::VectorXd> out;
  for (Eigen::Index c = 0; c < chains.rows(); ++c) out.push_back(chains.row(c).transpose());
  return out;
}

}  // namespace

PYBIND11_MODULE(_bnr, m) {
  m.doc() = "Bayesian neural response models for task fMRI";

  auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  py::class_<BoldDataset>(m, "Dataset")
      .def(py::init(&make_dataset), py::arg("values"), py::arg("tr"), py::arg("coords") = py::none(),
           py::arg("rois") = py::none())
      .def_property_readonly("subjects", &BoldDataset::subjects)
      .def_property_readonly("voxels", &BoldDataset::voxels)
      .def_property_readonly("scans", &BoldDataset::scans)
      .def_property_readonly("tr", &BoldDataset::tr)
      .def_property_readonly("values", &dataset_values)
      .def_property_readonly("coords",
                             [](const BoldDataset& d) {
                               std::vector<Coord> c;
                               for (const auto& v : d.voxel_table()) c.push_back(v.coord);
                               return c;
                             })
      .def_property_readonly("rois",
                             [](const BoldDataset& d) {
                               std::vector<std::string> r;
                               for (const auto& v : d.voxel_table()) r.push_back(v.roi);
                               return r;
                             })
      .def("roi_labels", &BoldDataset::roi_labels)
      .def("write", [](const BoldDataset& d, const fs::path& p) { write_dataset(d, p); }, py::arg("manifest"))
      .def_static("read", &read_dataset, py::arg("manifest"))
      .def("__repr__", [](const BoldDataset& d) {
        return "<Dataset subjects=" + std::to_string(d.subjects()) + " voxels=" + std::to_string(d.voxels()) +
               " scans=" + std::to_string(d.scans()) + ">";
      });

  m.def(
      "simulate",
      [](int nx, int ny, int subjects, double mu, double total_time, double tr, double snr, std::uint64_t seed) {
        SimConfig c;
        c.nx = nx;
        c.ny = ny;
        c.subjects = subjects;
        c.mu = mu;
        c.total_time = total_time;
        c.tr = tr;
        c.snr = snr;
        c.seed = seed;
        c.validate();
        SimulatedData sim = simulate_dataset(c);
        py::dict truth;
        truth["consensus_active"] = sim.truth.consensus_active;
        truth["signal"] = sim.truth.signal;
        truth["predictors"] = sim.truth.predictors;
        truth["mean_beta"] = sim.truth.mean_beta;
        truth["radii"] = sim.truth.radii;
        return py::make_tuple(std::move(sim.data), truth);
      },
      py::arg("nx") = 11, py::arg("ny") = 11, py::arg("subjects") = 10, py::arg("mu") = 1.0,
      py::arg("total_time") = 240.0, py::arg("tr") = 2.0, py::arg("snr") = 2.0, py::arg("seed") = 1,
      "Simulated task dataset on an nx x ny grid; returns (dataset, truth).");

  m.def(
      "fit",
      [](const BoldDataset& data, const std::string& model, std::optional<Eigen::MatrixXd> predictors, double nu,
         double tau_star, int chains, int warmup, int draws, std::uint64_t seed, int jobs,
         std::vector<std::string> rois) {
        FitOptions opt;
        opt.model = model;
        opt.bnr.prior.nu = nu;
        opt.bnr.prior.tau_star = tau_star;
        opt.sampler.chains = chains;
        opt.sampler.warmup = warmup;
        opt.sampler.draws = draws;
        opt.sampler.init_jitter = 0.5;
        opt.rois = std::move(rois);
        opt.validate();
        const Eigen::MatrixXd X = predictors.value_or(Eigen::MatrixXd());
        FitReport rep;
        {
          py::gil_scoped_release release;
          rep = fit_dataset(data, X, opt, seed, "", jobs);
        }
        return report_list(rep);
      },
      py::arg("dataset"), py::arg("model") = "bnr", py::arg("predictors") = py::none(), py::arg("nu") = 1000.0,
      py::arg("tau_star") = 0.1, py::arg("chains") = 4, py::arg("warmup") = 1500, py::arg("draws") = 1500,
      py::arg("seed") = 1, py::arg("jobs") = 1, py::arg("rois") = std::vector<std::string>{},
      "Fits every ROI independently; returns one dict per ROI.");

  m.def(
      "isc",
      [](const BoldDataset& data, const std::string& method, int permutations, double alpha, bool fdr,
         std::uint64_t seed, int jobs) {
        IscResult r;
        {
          py::gil_scoped_release release;
          r = isc_test(data, parse_null_method(method), permutations, alpha, fdr, seed, jobs);
        }
        py::dict d;
        d["mean_r"] = r.isc.mean;
        d["p"] = r.p;
        d["active"] = r.active;
        return d;
      },
      py::arg("dataset"), py::arg("method") = "circular", py::arg("permutations") = 1000, py::arg("alpha") = 0.05,
      py::arg("fdr") = true, py::arg("seed") = 1, py::arg("jobs") = 1);

  m.def(
      "bold_predictor",
      [](std::vector<double> onsets, std::vector<double> durations, double total_time, double tr, bool normalize) {
        TaskDesign t;
        t.onsets = std::move(onsets);
        t.durations = std::move(durations);
        t.total_time = total_time;
        t.tr = tr;
        t.validate();
        return normalize ? bold_predictor(t) : bold_predictor_unnormalized(t);
      },
      py::arg("onsets"), py::arg("durations"), py::arg("total_time"), py::arg("tr"), py::arg("normalize") = true);

  m.def(
      "alternating_blocks",
      [](double on, double off, double total_time, double tr, double first_onset) {
        const TaskDesign t = alternating_blocks(on, off, total_time, tr, first_onset);
        return py::make_tuple(t.onsets, t.durations);
      },
      py::arg("on"), py::arg("off"), py::arg("total_time"), py::arg("tr"), py::arg("first_onset") = 0.0,
      "Onsets and durations of alternating on/off blocks.");

  m.def("canonical_hrf", [](double t) { return canonical_hrf(HrfConfig{}, t); }, py::arg("t"));

  m.def(
      "nngp_logpdf",
      [](const std::vector<double>& times, double rho, const Eigen::VectorXd& w, int neighbors) {
        return nngp_logpdf(build_graph(times, neighbors), KernelConfig{rho}, w);
      },
      py::arg("times"), py::arg("rho"), py::arg("w"), py::arg("neighbors") = kDefaultNeighbors);

  m.def("hths_marginal_logpdf", &hths_marginal_logpdf, py::arg("beta"), py::arg("phi"), py::arg("nu"));
  m.def("hths_marginal_lower_bound", &hths_marginal_lower_bound, py::arg("beta"), py::arg("nu"));

  m.def(
      "split_rhat", [](const Eigen::MatrixXd& chains) { return split_rhat(chain_rows(chains)); }, py::arg("chains"),
      "chains: array of shape (chains, draws)");
  m.def(
      "ess",
      [](const Eigen::MatrixXd& chains) {
        const EssResult e = ess(chain_rows(chains));
        return py::make_tuple(e.bulk, e.tail);
      },
      py::arg("chains"), "Bulk and tail ESS of an array of shape (chains, draws).");

  m.def(
      "run",
      [](const std::string& command, std::optional<fs::path> config, std::optional<fs::path> out,
         std::optional<int> jobs, std::optional<std::uint64_t> seed) {
        RunConfig cfg = config ? load_run_config(*config) : parse_run_config("{}", fs::current_path());
        if (out) cfg.out = fs::absolute(*out).lexically_normal();
        if (jobs) cfg.jobs = *jobs;
        if (seed) cfg.seed = *seed;
        py::gil_scoped_release release;
        return run_command(command, cfg);
      },
      py::arg("command"), py::arg("config") = py::none(), py::arg("out") = py::none(), py::arg("jobs") = py::none(),
      py::arg("seed") = py::none(), "Runs a command as the CLI does; returns its exit code.");
}
