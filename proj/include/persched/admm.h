#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "persched/g_step.h"
#include "persched/l_step.h"
#include "persched/periodic.h"

namespace persched {

struct AdmmConfig {
  int K = 10;
  double gamma = 0.0;
  std::vector<int> eta;  // one bound per sensor
  double rho = 10.0;
  double eps = 1e-3;
  int max_iters = 200;
  double armijo_alpha = 0.3;
  double armijo_beta = 0.5;
  /// Inner gradient tolerance: clamp(factor · primal residual, floor, cap).
  double inner_tol_cap = 1e-6;
  double inner_tol_factor = 0.1;
  double inner_tol_floor = 1e-9;
  int inner_max_iters = 500;
  std::optional<Schedule> init_schedule;
};

/// Throws InputError when rho <= 0, eps <= 0, gamma < 0, K < 1, or a bound
/// lies outside [1, K]; DimensionError when eta does not match the sensors.
void ValidateConfig(const AdmmConfig& cfg, const SystemModel& sys);

/// Iterates of one ADMM run.
struct AdmmState {
  std::vector<Matrix> L;
  std::vector<Matrix> G;
  std::vector<Matrix> Lambda;
  int iteration = 0;
};

struct IterationRecord {
  int iteration = 0;
  double primal_residual = 0.0;  // Σ_k ‖L_k - G_k‖_F
  double g_change = 0.0;         // Σ_k ‖G_k^{i+1} - G_k^i‖_F
  double phi = 0.0;              // L-step objective at its exit point
  int cardinality = 0;           // nonzero columns of {G_k}
  int inner_iterations = 0;
  double inner_grad_norm = 0.0;
};

struct SolveReport {
  double gamma = 0.0;
  std::vector<int> eta;
  PeriodicGains raw_gains;       // ADMM L
  PeriodicGains sparse_gains;    // ADMM G, exactly feasible
  PeriodicGains polished_gains;  // Riccati gains on the extracted schedule
  Schedule schedule;
  double J_raw = 0.0;            // mean trace under raw_gains
  double J_polished = 0.0;       // mean trace under polished_gains
  bool polished = false;
  std::string polish_error;
  std::vector<IterationRecord> trace;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  double wall_time_s = 0.0;
};

/// Round-robin schedule: sensor m is active at m, m + ⌈K/η_m⌉, … (mod K) until
/// it has η_m activations, moving to the next free step on collisions. When
/// Σ η_m >= K, activations are then shifted from crowded steps into empty
/// ones. Throws InputError for an all-zero request and InitializationError
/// if the result leaves an unstable mode undetectable.
Schedule DefaultInitSchedule(const SystemModel& sys, int K,
                             const std::vector<int>& eta);

/// Runs the ADMM scheduler: Riccati initialization, then alternating L-step,
/// G-step and dual updates until both residuals are <= eps or the iteration
/// cap is hit. Without convergence the G iterate with the smallest
/// Σ tr P + γ card(G) is reported.
SolveReport RunAdmm(const SystemModel& sys, const AdmmConfig& cfg);

/// Optional per-iteration observer, called after each dual update.
using AdmmObserver = std::function<void(const AdmmState&, const IterationRecord&)>;
SolveReport RunAdmm(const SystemModel& sys, const AdmmConfig& cfg,
                    const AdmmObserver& observer);

struct SweepCell {
  double gamma = 0.0;
  int eta = 0;
  std::optional<SolveReport> report;
  std::string error;
};

/// One run per (γ, η) pair, γ-major. Cell failures are recorded, not thrown.
std::vector<SweepCell> Sweep(const SystemModel& sys, const AdmmConfig& base,
                             const std::vector<double>& gamma_list,
                             const std::vector<int>& eta_list, int jobs = 1);

}  // namespace persched
