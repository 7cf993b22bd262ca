#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "bnr/error.hpp"
#include "bnr/study.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Bayesian neural response toolkit"};
  app.require_subcommand(1);

  std::string config_path, out;
  int jobs = 0;
  std::uint64_t seed = 0;
  bool seed_set = false;

  for (const char* name : {"simulate", "fit", "isc", "score", "sweep"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("--config", config_path, "JSON run configuration");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option_function<std::uint64_t>("--seed", [&](const std::uint64_t& s) { seed = s; seed_set = true; }, "base seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? bnr::kExitOk : bnr::kExitConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    bnr::RunConfig cfg = config_path.empty() ? bnr::parse_run_config("{}", bnr::fs::current_path())
                                             : bnr::load_run_config(config_path);
    if (!out.empty()) cfg.out = bnr::fs::absolute(out).lexically_normal();
    if (jobs > 0) cfg.jobs = jobs;
    if (seed_set) cfg.seed = seed;
    const int rc = bnr::run_command(command, cfg);
    if (rc == bnr::kExitPartial) std::cerr << "bnr " << command << ": some ROIs failed; see report.json\n";
    return rc;
  } catch (const bnr::ConfigError& e) {
    std::cerr << "bnr " << command << ": config error: " << e.what() << '\n';
    return bnr::kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "bnr " << command << ": " << e.what() << '\n';
    return bnr::kExitError;
  }
}
