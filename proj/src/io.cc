#include "persched/io.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace persched {

namespace {

using nlohmann::json;

void CheckKeys(const json& obj, const std::set<std::string>& allowed,
               const std::string& section) {
  if (!obj.is_object()) throw ConfigError(section + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (!allowed.count(key)) {
      throw ConfigError(section + ": unknown key '" + key + "'");
    }
  }
}

std::string Join(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

double GetNumber(const json& obj, const std::string& key,
                 const std::string& section, double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) throw ConfigError(Join(section, key) + ": expected a number");
  return v.get<double>();
}

int GetInt(const json& obj, const std::string& key, const std::string& section,
           int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) {
    throw ConfigError(Join(section, key) + ": expected an integer");
  }
  return v.get<int>();
}

std::string ReadText(const std::filesystem::path& path, const std::string& what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(what + ": cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Matrix MatrixFromSpec(const json& v, const std::string& field,
                      const std::filesystem::path& base_dir) {
  if (v.is_string()) {
    const std::filesystem::path p = base_dir / v.get<std::string>();
    if (!std::filesystem::exists(p)) {
      throw ConfigError(field + ": file '" + p.string() + "' does not exist");
    }
    try {
      return ReadMatrixFile(p);
    } catch (const ConfigError& e) {
      throw ConfigError(field + ": " + e.what());
    }
  }
  return MatrixFromJson(v, field);
}

std::vector<int> EtaFromSpec(const json& v, int sensors, const std::string& field) {
  if (v.is_number_integer()) return std::vector<int>(sensors, v.get<int>());
  if (v.is_array()) {
    std::vector<int> eta;
    for (const auto& e : v) {
      if (!e.is_number_integer()) throw ConfigError(field + ": expected integers");
      eta.push_back(e.get<int>());
    }
    if (static_cast<int>(eta.size()) != sensors) {
      throw ConfigError(field + ": expected " + std::to_string(sensors) +
                        " entries, got " + std::to_string(eta.size()));
    }
    return eta;
  }
  throw ConfigError(field + ": expected an integer or an array of integers");
}

json FieldToJson(const FieldSpec& f) {
  json sensors = json::array();
  for (int pos : f.geometry.sensor_positions) {
    sensors.push_back({pos / f.geometry.cols(), pos % f.geometry.cols()});
  }
  return {{"ell_h", f.geometry.ell_h}, {"ell_v", f.geometry.ell_v},
          {"h", f.geometry.h},         {"T", f.geometry.T},
          {"q", f.q_scale},            {"r", f.r_scale},
          {"sensors", sensors}};
}

json AdmmToJson(const AdmmConfig& a) {
  json out = {{"K", a.K},
              {"gamma", a.gamma},
              {"eta", a.eta},
              {"rho", a.rho},
              {"eps", a.eps},
              {"max_iters", a.max_iters},
              {"armijo_alpha", a.armijo_alpha},
              {"armijo_beta", a.armijo_beta},
              {"inner_tol_cap", a.inner_tol_cap},
              {"inner_tol_factor", a.inner_tol_factor},
              {"inner_tol_floor", a.inner_tol_floor},
              {"inner_max_iters", a.inner_max_iters}};
  if (a.init_schedule) out["init_schedule"] = ScheduleToJson(*a.init_schedule);
  return out;
}

json GainsToJson(const PeriodicGains& gains) {
  json out = json::array();
  for (const auto& L : gains.L) out.push_back(MatrixToJson(L));
  return out;
}

json NumberOrNull(double v) {
  return std::isfinite(v) ? json(v) : json(nullptr);
}

}  // namespace

Matrix ReadMatrixFile(const std::filesystem::path& path) {
  std::istringstream in(ReadText(path, "matrix file"));
  std::vector<std::vector<double>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    std::vector<double> row;
    std::string token;
    while (ls >> token) {
      double v = 0.0;
      const auto res = std::from_chars(token.data(), token.data() + token.size(), v);
      if (res.ec != std::errc() || res.ptr != token.data() + token.size()) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                          ": cannot parse '" + token + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": row has " + std::to_string(row.size()) +
                        " entries, expected " +
                        std::to_string(rows.front().size()));
    }
    rows.push_back(std::move(row));
  }
  const Eigen::Index r = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index c = rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size());
  Matrix X(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) X(i, j) = rows[i][j];
  }
  return X;
}

Matrix MatrixFromJson(const json& j, const std::string& field) {
  if (j.is_number()) return Matrix::Constant(1, 1, j.get<double>());
  if (!j.is_array()) throw ConfigError(field + ": expected a nested numeric array");
  const Eigen::Index r = static_cast<Eigen::Index>(j.size());
  if (r == 0) return Matrix(0, 0);
  if (!j[0].is_array()) throw ConfigError(field + ": expected an array of rows");
  const Eigen::Index c = static_cast<Eigen::Index>(j[0].size());
  Matrix X(r, c);
  for (Eigen::Index i = 0; i < r; ++i) {
    const json& row = j[i];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != c) {
      throw ConfigError(field + ": row " + std::to_string(i) +
                        " has the wrong length");
    }
    for (Eigen::Index k = 0; k < c; ++k) {
      if (!row[k].is_number()) {
        throw ConfigError(field + "[" + std::to_string(i) + "][" +
                          std::to_string(k) + "]: expected a number");
      }
      X(i, k) = row[k].get<double>();
    }
  }
  return X;
}

json MatrixToJson(const Matrix& X) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < X.cols(); ++j) row.push_back(NumberOrNull(X(i, j)));
    rows.push_back(std::move(row));
  }
  return rows;
}

json ScheduleToJson(const Schedule& sched) {
  json rows = json::array();
  for (int k = 0; k < sched.period(); ++k) {
    json row = json::array();
    for (int m = 0; m < sched.sensors(); ++m) row.push_back(sched.active(k, m) ? 1 : 0);
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string FormatSchedule(const Schedule& sched) {
  std::string out;
  for (int k = 0; k < sched.period(); ++k) {
    for (int m = 0; m < sched.sensors(); ++m) {
      if (m > 0) out += ' ';
      out += sched.active(k, m) ? '1' : '0';
    }
    out += '\n';
  }
  return out;
}

Schedule ParseSchedule(const std::string& text) {
  std::istringstream in(text);
  std::vector<std::vector<int>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::vector<int> row;
    std::string token;
    while (ls >> token) {
      if (token != "0" && token != "1") {
        throw ConfigError("schedule entry '" + token + "' is not 0 or 1");
      }
      row.push_back(token == "1");
    }
    if (row.empty()) continue;
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("schedule rows differ in length");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("schedule is empty");
  Schedule sched(static_cast<int>(rows.size()), static_cast<int>(rows[0].size()));
  for (std::size_t k = 0; k < rows.size(); ++k) {
    for (std::size_t m = 0; m < rows[k].size(); ++m) {
      sched.set(static_cast<int>(k), static_cast<int>(m), rows[k][m] != 0);
    }
  }
  return sched;
}

ExperimentConfig LoadConfig(const std::filesystem::path& path) {
  const std::string text = ReadText(path, "config");
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return ParseConfig(doc, path.parent_path());
}

ExperimentConfig ParseConfig(const json& doc,
                             const std::filesystem::path& base_dir) {
  CheckKeys(doc, {"system", "admm", "sweep", "compare", "seed", "output_dir"},
            "config");
  ExperimentConfig cfg;
  if (!doc.contains("system")) throw ConfigError("config: missing 'system'");
  const json& system = doc.at("system");
  CheckKeys(system, {"field", "matrices"}, "system");
  if (system.contains("field") == system.contains("matrices")) {
    throw ConfigError("system: specify exactly one of 'field' or 'matrices'");
  }

  int sensors = 0;
  if (system.contains("field")) {
    const json& f = system.at("field");
    CheckKeys(f, {"ell_h", "ell_v", "h", "T", "q", "r", "sensors"}, "system.field");
    FieldSpec spec;
    spec.geometry = DefaultFieldGeometry();
    spec.geometry.ell_h = GetInt(f, "ell_h", "system.field", spec.geometry.ell_h);
    spec.geometry.ell_v = GetInt(f, "ell_v", "system.field", spec.geometry.ell_v);
    spec.geometry.h = GetNumber(f, "h", "system.field", spec.geometry.h);
    spec.geometry.T = GetNumber(f, "T", "system.field", spec.geometry.T);
    spec.q_scale = GetNumber(f, "q", "system.field", spec.q_scale);
    spec.r_scale = GetNumber(f, "r", "system.field", spec.r_scale);
    if (f.contains("sensors")) {
      const json& s = f.at("sensors");
      if (!s.is_array()) throw ConfigError("system.field.sensors: expected an array");
      spec.geometry.sensor_positions.clear();
      for (const auto& p : s) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number_integer() ||
            !p[1].is_number_integer()) {
          throw ConfigError("system.field.sensors: expected [i, j] integer pairs");
        }
        const int i = p[0].get<int>();
        const int j = p[1].get<int>();
        if (i < 0 || i >= spec.geometry.rows() || j < 0 || j >= spec.geometry.cols()) {
          throw ConfigError("system.field.sensors: position [" + std::to_string(i) +
                            ", " + std::to_string(j) + "] is outside the lattice");
        }
        spec.geometry.sensor_positions.push_back(spec.geometry.Index(i, j));
      }
    } else if (spec.geometry.ell_h != 4 || spec.geometry.ell_v != 4) {
      throw ConfigError("system.field.sensors: required for a non-default lattice");
    }
    if (!(spec.q_scale > 0.0) || !(spec.r_scale > 0.0)) {
      throw ConfigError("system.field: q and r must be > 0");
    }
    try {
      ValidateGeometry(spec.geometry);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("system.field: ") + e.what());
    }
    sensors = static_cast<int>(spec.geometry.sensor_positions.size());
    cfg.field = spec;
  } else {
    const json& m = system.at("matrices");
    CheckKeys(m, {"A", "B", "C", "Q", "R"}, "system.matrices");
    for (const char* key : {"A", "C", "Q", "R"}) {
      if (!m.contains(key)) {
        throw ConfigError(std::string("system.matrices: missing '") + key + "'");
      }
    }
    Matrix A = MatrixFromSpec(m.at("A"), "system.matrices.A", base_dir);
    Matrix B = m.contains("B") ? MatrixFromSpec(m.at("B"), "system.matrices.B", base_dir)
                               : Matrix::Identity(A.rows(), A.rows());
    Matrix C = MatrixFromSpec(m.at("C"), "system.matrices.C", base_dir);
    Matrix Q = MatrixFromSpec(m.at("Q"), "system.matrices.Q", base_dir);
    Matrix R = MatrixFromSpec(m.at("R"), "system.matrices.R", base_dir);
    try {
      cfg.matrices = MakeSystem(A, B, C, Q, R);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string("system.matrices: ") + e.what());
    }
    sensors = static_cast<int>(C.rows());
  }

  const json admm = doc.value("admm", json::object());
  CheckKeys(admm,
            {"K", "gamma", "eta", "rho", "eps", "max_iters", "armijo_alpha",
             "armijo_beta", "inner_tol_cap", "inner_tol_factor",
             "inner_tol_floor", "inner_max_iters", "init_schedule"},
            "admm");
  AdmmConfig& a = cfg.admm;
  a.K = GetInt(admm, "K", "admm", a.K);
  a.gamma = GetNumber(admm, "gamma", "admm", a.gamma);
  a.eta = admm.contains("eta") ? EtaFromSpec(admm.at("eta"), sensors, "admm.eta")
                               : std::vector<int>(sensors, a.K);
  a.rho = GetNumber(admm, "rho", "admm", a.rho);
  a.eps = GetNumber(admm, "eps", "admm", a.eps);
  a.max_iters = GetInt(admm, "max_iters", "admm", a.max_iters);
  a.armijo_alpha = GetNumber(admm, "armijo_alpha", "admm", a.armijo_alpha);
  a.armijo_beta = GetNumber(admm, "armijo_beta", "admm", a.armijo_beta);
  a.inner_tol_cap = GetNumber(admm, "inner_tol_cap", "admm", a.inner_tol_cap);
  a.inner_tol_factor = GetNumber(admm, "inner_tol_factor", "admm", a.inner_tol_factor);
  a.inner_tol_floor = GetNumber(admm, "inner_tol_floor", "admm", a.inner_tol_floor);
  a.inner_max_iters = GetInt(admm, "inner_max_iters", "admm", a.inner_max_iters);
  if (admm.contains("init_schedule")) {
    const json& s = admm.at("init_schedule");
    if (s.is_string()) {
      const std::filesystem::path p = base_dir / s.get<std::string>();
      if (!std::filesystem::exists(p)) {
        throw ConfigError("admm.init_schedule: file '" + p.string() +
                          "' does not exist");
      }
      try {
        a.init_schedule = ParseSchedule(ReadText(p, "admm.init_schedule"));
      } catch (const ConfigError& e) {
        throw ConfigError(std::string("admm.init_schedule: ") + e.what());
      }
    } else {
      const Matrix grid = MatrixFromJson(s, "admm.init_schedule");
      Schedule sched(static_cast<int>(grid.rows()), static_cast<int>(grid.cols()));
      for (Eigen::Index k = 0; k < grid.rows(); ++k) {
        for (Eigen::Index m = 0; m < grid.cols(); ++m) {
          if (grid(k, m) != 0.0 && grid(k, m) != 1.0) {
            throw ConfigError("admm.init_schedule: entries must be 0 or 1");
          }
          sched.set(static_cast<int>(k), static_cast<int>(m), grid(k, m) == 1.0);
        }
      }
      a.init_schedule = sched;
    }
  }

  if (doc.contains("sweep")) {
    const json& s = doc.at("sweep");
    CheckKeys(s, {"gamma_list", "eta_list"}, "sweep");
    if (s.contains("gamma_list")) {
      if (!s.at("gamma_list").is_array()) {
        throw ConfigError("sweep.gamma_list: expected an array");
      }
      for (const auto& g : s.at("gamma_list")) {
        if (!g.is_number()) throw ConfigError("sweep.gamma_list: expected numbers");
        cfg.gamma_list.push_back(g.get<double>());
      }
    }
    if (s.contains("eta_list")) {
      if (!s.at("eta_list").is_array()) {
        throw ConfigError("sweep.eta_list: expected an array");
      }
      for (const auto& e : s.at("eta_list")) {
        if (!e.is_number_integer()) throw ConfigError("sweep.eta_list: expected integers");
        cfg.eta_list.push_back(e.get<int>());
      }
    }
  }

  if (doc.contains("compare")) {
    const json& c = doc.at("compare");
    CheckKeys(c, {"trials", "oracle", "budget"}, "compare");
    cfg.compare.trials = GetInt(c, "trials", "compare", cfg.compare.trials);
    cfg.compare.budget = GetNumber(c, "budget", "compare", cfg.compare.budget);
    if (c.contains("oracle")) {
      if (!c.at("oracle").is_boolean()) throw ConfigError("compare.oracle: expected a boolean");
      cfg.compare.oracle = c.at("oracle").get<bool>();
    }
    if (cfg.compare.trials < 0) throw ConfigError("compare.trials: must be >= 0");
  }

  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) {
      throw ConfigError("seed: expected a non-negative integer");
    }
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (doc.contains("output_dir")) {
    if (!doc.at("output_dir").is_string()) throw ConfigError("output_dir: expected a string");
    cfg.output_dir = doc.at("output_dir").get<std::string>();
  }

  json sys_json;
  if (cfg.field) {
    sys_json["field"] = FieldToJson(*cfg.field);
  } else {
    const SystemModel& s = *cfg.matrices;
    sys_json["matrices"] = {{"A", MatrixToJson(s.A)}, {"B", MatrixToJson(s.B)},
                            {"C", MatrixToJson(s.C)}, {"Q", MatrixToJson(s.Q)},
                            {"R", MatrixToJson(s.R)}};
  }
  cfg.resolved = {{"system", sys_json},
                  {"admm", AdmmToJson(cfg.admm)},
                  {"sweep", {{"gamma_list", cfg.gamma_list}, {"eta_list", cfg.eta_list}}},
                  {"compare",
                   {{"trials", cfg.compare.trials},
                    {"oracle", cfg.compare.oracle},
                    {"budget", cfg.compare.budget}}},
                  {"seed", cfg.seed},
                  {"output_dir", cfg.output_dir}};
  return cfg;
}

SystemModel BuildSystem(const ExperimentConfig& cfg) {
  if (cfg.field) {
    return BuildDiffusionSystem(cfg.field->geometry, cfg.field->q_scale,
                                cfg.field->r_scale);
  }
  if (cfg.matrices) return *cfg.matrices;
  throw ConfigError("config has no system");
}

std::string FormatNumber(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json ReportToJson(const SolveReport& r, const json& config) {
  json trace = json::array();
  for (const auto& it : r.trace) {
    trace.push_back({{"iteration", it.iteration},
                     {"primal_residual", it.primal_residual},
                     {"g_change", it.g_change},
                     {"phi", NumberOrNull(it.phi)},
                     {"cardinality", it.cardinality},
                     {"inner_iterations", it.inner_iterations},
                     {"inner_grad_norm", it.inner_grad_norm}});
  }
  json out = {{"kind", "admm"},
              {"config", config},
              {"gamma", r.gamma},
              {"eta", r.eta},
              {"converged", r.converged},
              {"iterations", r.iterations},
              {"line_search_failed", r.line_search_failed},
              {"J_raw", NumberOrNull(r.J_raw)},
              {"J_polished", NumberOrNull(r.J_polished)},
              {"polished", r.polished},
              {"total_activations", r.schedule.Total()},
              {"schedule", ScheduleToJson(r.schedule)},
              {"gains",
               {{"raw", GainsToJson(r.raw_gains)},
                {"polished", GainsToJson(r.polished_gains)}}},
              {"trace", trace}};
  if (!r.polish_error.empty()) out["polish_error"] = r.polish_error;
  return out;
}

json OracleToJson(const OracleResult& r, const json& config) {
  return {{"kind", "oracle"},
          {"config", config},
          {"J_polished", NumberOrNull(r.best_J)},
          {"total_activations", r.best.Total()},
          {"schedule", ScheduleToJson(r.best)},
          {"evaluated", r.evaluated},
          {"skipped", r.skipped}};
}

json BaselineToJson(const BaselineResult& r, const json& config) {
  json trials = json::array();
  for (double v : r.trial_J) trials.push_back(NumberOrNull(v));
  return {{"kind", "random_baseline"},
          {"config", config},
          {"J_mean", NumberOrNull(r.mean_J)},
          {"J_std", NumberOrNull(r.std_J)},
          {"trials", trials},
          {"skipped", r.skipped}};
}

std::string TraceCsv(const SolveReport& r) {
  std::string out = "iteration,primal_residual,g_change,phi,cardinality\n";
  for (const auto& it : r.trace) {
    out += std::to_string(it.iteration) + "," + FormatNumber(it.primal_residual) +
           "," + FormatNumber(it.g_change) + "," + FormatNumber(it.phi) + "," +
           std::to_string(it.cardinality) + "\n";
  }
  return out;
}

std::string TradeoffCsv(const std::vector<SweepCell>& cells) {
  std::string out =
      "gamma,eta,total_activations,J_raw,J_polished,iterations,converged,status\n";
  for (const auto& c : cells) {
    out += FormatNumber(c.gamma) + "," + std::to_string(c.eta) + ",";
    if (c.report) {
      const auto& r = *c.report;
      std::string status = r.converged ? "ok" : "iteration_cap";
      if (!r.polished) status = "polish_failed";
      out += std::to_string(r.schedule.Total()) + "," + FormatNumber(r.J_raw) + "," +
             FormatNumber(r.J_polished) + "," + std::to_string(r.iterations) + "," +
             (r.converged ? "1" : "0") + "," + status + "\n";
    } else {
      std::string msg = c.error;
      for (char& ch : msg) {
        if (ch == ',' || ch == '\n' || ch == '"') ch = ' ';
      }
      out += ",,,,0,error: " + msg + "\n";
    }
  }
  return out;
}

}  // namespace persched
