#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "persched/admm.h"
#include "persched/baselines.h"

namespace persched {

/// Malformed or inconsistent configuration; the message names the field.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FieldSpec {
  FieldGeometry geometry;
  double q_scale = 0.25;
  double r_scale = 1.0;
};

struct CompareSpec {
  int trials = 500;
  bool oracle = false;
  double budget = 1e6;
};

struct ExperimentConfig {
  std::optional<FieldSpec> field;
  std::optional<SystemModel> matrices;
  AdmmConfig admm;
  std::vector<double> gamma_list;
  std::vector<int> eta_list;
  CompareSpec compare;
  std::uint64_t seed = 0;
  std::string output_dir = "out";
  /// The configuration with every default filled in, for provenance.
  nlohmann::json resolved;
};

/// Parses a JSON experiment config. Matrices may be inline nested arrays or
/// paths (relative to the config file) of whitespace-delimited text files.
/// All referenced files are read here. Throws ConfigError.
ExperimentConfig LoadConfig(const std::filesystem::path& path);
ExperimentConfig ParseConfig(const nlohmann::json& doc,
                             const std::filesystem::path& base_dir);

SystemModel BuildSystem(const ExperimentConfig& cfg);

/// Whitespace-delimited rows; blank lines and lines starting with '#' are
/// skipped.
Matrix ReadMatrixFile(const std::filesystem::path& path);

/// K lines of M space-separated 0/1 entries.
std::string FormatSchedule(const Schedule& sched);
Schedule ParseSchedule(const std::string& text);

nlohmann::json MatrixToJson(const Matrix& X);
Matrix MatrixFromJson(const nlohmann::json& j, const std::string& field);
nlohmann::json ScheduleToJson(const Schedule& sched);

/// Report JSON. Wall time is left out so reports are reproducible.
nlohmann::json ReportToJson(const SolveReport& report,
                            const nlohmann::json& config);
nlohmann::json OracleToJson(const OracleResult& result,
                            const nlohmann::json& config);
nlohmann::json BaselineToJson(const BaselineResult& result,
                              const nlohmann::json& config);

std::string TraceCsv(const SolveReport& report);
std::string TradeoffCsv(const std::vector<SweepCell>& cells);

/// Formats a double with round-trip precision; non-finite values as "inf",
/// "-inf" or "nan".
std::string FormatNumber(double v);

}  // namespace persched
