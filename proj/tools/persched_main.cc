#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "persched/io.h"

namespace {

namespace fs = std::filesystem;
using persched::ExperimentConfig;

constexpr int kExitConverged = 0;
constexpr int kExitError = 1;
constexpr int kExitIterationCap = 2;

struct Options {
  std::string command;
  std::string config;
  std::optional<std::string> out;
  int jobs = 1;
  std::optional<std::uint64_t> seed;
};

void SetupLogging() {
  auto logger = spdlog::stderr_color_mt("persched");
  spdlog::set_default_logger(logger);
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("PERSCHED_LOG")) {
    spdlog::set_level(spdlog::level::from_str(env));
  }
}

// Writes all files or none: on failure, files already written are removed.
void WriteOutputs(const fs::path& dir,
                  const std::map<std::string, std::string>& files) {
  fs::create_directories(dir);
  std::vector<fs::path> written;
  try {
    for (const auto& [name, content] : files) {
      const fs::path p = dir / name;
      std::ofstream out(p, std::ios::binary);
      if (!out) throw std::runtime_error("cannot write " + p.string());
      written.push_back(p);
      out << content;
      if (!out) throw std::runtime_error("cannot write " + p.string());
    }
  } catch (...) {
    for (const auto& p : written) fs::remove(p);
    throw;
  }
  for (const auto& [name, content] : files) {
    spdlog::info("wrote {}", (dir / name).string());
  }
}

fs::path OutputDir(const ExperimentConfig& cfg, const Options& opts) {
  return opts.out ? fs::path(*opts.out) : fs::path(cfg.output_dir);
}

int CmdValidate(const ExperimentConfig& cfg) {
  const persched::SystemModel sys = persched::BuildSystem(cfg);
  const auto report = persched::ValidateAssumptions(sys);
  std::cout << "states: " << sys.states() << "\nsensors: " << sys.sensors()
            << "\nR positive definite: " << report.r_positive_definite
            << "\nQ positive semidefinite: " << report.q_positive_semidefinite
            << "\ndetectable: " << report.detectable
            << "\nstabilizable: " << report.stabilizable << "\n";
  for (const auto& f : report.failures) std::cout << "failure: " << f << "\n";
  try {
    persched::ValidateConfig(cfg.admm, sys);
  } catch (const std::exception& e) {
    std::cout << "failure: admm: " << e.what() << "\n";
    return kExitError;
  }
  return report.ok() ? kExitConverged : kExitError;
}

int CmdRun(const ExperimentConfig& cfg, const Options& opts) {
  const persched::SystemModel sys = persched::BuildSystem(cfg);
  persched::ValidateConfig(cfg.admm, sys);
  const auto report = persched::RunAdmm(sys, cfg.admm);
  spdlog::info("converged={} iterations={} J_polished={} wall_time={:.3f}s",
               report.converged, report.iterations, report.J_polished,
               report.wall_time_s);
  WriteOutputs(OutputDir(cfg, opts),
               {{"report.json", persched::ReportToJson(report, cfg.resolved).dump(2) + "\n"},
                {"schedule.txt", persched::FormatSchedule(report.schedule)},
                {"trace.csv", persched::TraceCsv(report)}});
  return report.converged ? kExitConverged : kExitIterationCap;
}

int CmdSweep(const ExperimentConfig& cfg, const Options& opts) {
  if (cfg.gamma_list.empty()) throw persched::ConfigError("sweep.gamma_list: must not be empty");
  if (cfg.eta_list.empty()) throw persched::ConfigError("sweep.eta_list: must not be empty");
  const persched::SystemModel sys = persched::BuildSystem(cfg);
  for (double g : cfg.gamma_list) {
    for (int e : cfg.eta_list) {
      persched::AdmmConfig cell = cfg.admm;
      cell.gamma = g;
      cell.eta.assign(sys.sensors(), e);
      cell.init_schedule.reset();
      persched::ValidateConfig(cell, sys);
    }
  }
  const auto cells =
      persched::Sweep(sys, cfg.admm, cfg.gamma_list, cfg.eta_list, opts.jobs);
  bool all_converged = true;
  for (const auto& c : cells) {
    if (!c.report || !c.report->converged) all_converged = false;
    if (!c.error.empty()) spdlog::error("gamma={} eta={}: {}", c.gamma, c.eta, c.error);
  }
  WriteOutputs(OutputDir(cfg, opts), {{"tradeoff.csv", persched::TradeoffCsv(cells)}});
  return all_converged ? kExitConverged : kExitIterationCap;
}

int CmdCompare(const ExperimentConfig& cfg, const Options& opts) {
  const persched::SystemModel sys = persched::BuildSystem(cfg);
  persched::ValidateConfig(cfg.admm, sys);
  const auto report = persched::RunAdmm(sys, cfg.admm);
  const int total = report.schedule.Total();

  std::string csv = "method,J,J_std,total_activations,note\n";
  csv += "admm_polished," + persched::FormatNumber(report.J_polished) + ",," +
         std::to_string(total) + "," + (report.converged ? "" : "iteration cap hit") + "\n";
  nlohmann::json doc = {{"admm", persched::ReportToJson(report, cfg.resolved)}};

  if (cfg.compare.trials > 0) {
    const auto baseline =
        persched::RandomBaseline(sys, cfg.admm.K, cfg.admm.eta, total,
                                 cfg.compare.trials, cfg.seed, opts.jobs);
    csv += "random_mean," + persched::FormatNumber(baseline.mean_J) + "," +
           persched::FormatNumber(baseline.std_J) + "," + std::to_string(total) +
           "," + std::to_string(cfg.compare.trials) + " trials\n";
    doc["random"] = persched::BaselineToJson(baseline, cfg.resolved);
  } else {
    csv += "random_mean,,," + std::to_string(total) + ",omitted: trials = 0\n";
  }

  if (cfg.compare.oracle) {
    try {
      persched::OracleOptions oopts;
      oopts.budget = cfg.compare.budget;
      oopts.jobs = opts.jobs;
      const auto oracle =
          persched::ExhaustiveSearch(sys, cfg.admm.K, cfg.admm.eta, total, oopts);
      csv += "oracle," + persched::FormatNumber(oracle.best_J) + ",," +
             std::to_string(oracle.best.Total()) + "," +
             std::to_string(oracle.evaluated) + " candidates\n";
      doc["oracle"] = persched::OracleToJson(oracle, cfg.resolved);
    } catch (const persched::BudgetError& e) {
      spdlog::warn("oracle refused: {}", e.what());
      csv += "oracle,,," + std::to_string(total) + ",skipped: budget exceeded (" +
             persched::FormatNumber(e.candidates()) + " candidates)\n";
    }
  } else {
    csv += "oracle,,," + std::to_string(total) + ",skipped: not requested\n";
  }

  WriteOutputs(OutputDir(cfg, opts),
               {{"compare.csv", csv}, {"compare.json", doc.dump(2) + "\n"}});
  return report.converged ? kExitConverged : kExitIterationCap;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic sensor scheduling with sparse estimator gains"};
  app.require_subcommand(1);
  Options opts;
  for (const char* name : {"run", "sweep", "compare", "validate"}) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("config", opts.config, "JSON experiment config")->required();
    sub->add_option("--out", opts.out, "output directory (overrides output_dir)");
    sub->add_option("--jobs", opts.jobs, "worker threads for sweeps and baselines")
        ->check(CLI::PositiveNumber);
    sub->add_option("--seed", opts.seed, "random seed (overrides seed)");
    sub->callback([&opts, name] { opts.command = name; });
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // Usage errors share the generic failure status; --help still exits 0.
    return app.exit(e) == 0 ? 0 : kExitError;
  }
  SetupLogging();

  try {
    ExperimentConfig cfg = persched::LoadConfig(opts.config);
    if (opts.seed) {
      cfg.seed = *opts.seed;
      cfg.resolved["seed"] = cfg.seed;
    }
    if (opts.command == "validate") return CmdValidate(cfg);
    if (opts.command == "run") return CmdRun(cfg, opts);
    if (opts.command == "sweep") return CmdSweep(cfg, opts);
    return CmdCompare(cfg, opts);
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitError;
  }
}
