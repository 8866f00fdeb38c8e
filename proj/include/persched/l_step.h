#pragma once

#include <stdexcept>
#include <vector>

#include "persched/periodic.h"

namespace persched {

/// Armijo backtracking fell below the minimum step size.
class LineSearchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// minimize φ({L_k}) = Σ_k tr P_k + (ρ/2) Σ_k ‖L_k - U_k‖²_F over stabilizing
/// periodic gains, where {P_k} is the covariance limit cycle of {L_k}.
struct LStepProblem {
  const SystemModel& sys;
  std::vector<Matrix> U;
  double rho = 0.0;

  int period() const { return static_cast<int>(U.size()); }
};

struct LStepOptions {
  double tol = 1e-6;
  int max_iters = 500;
  double armijo_alpha = 0.3;
  double armijo_beta = 0.5;
  double min_step = 1e-12;
  /// Trial gains with monodromy radius >= 1 - stability_margin get φ = +∞.
  double stability_margin = 1e-9;
};

struct LStepResult {
  PeriodicGains gains;
  double phi = 0.0;
  double grad_norm = 0.0;
  int iterations = 0;
  std::vector<double> step_sizes;
  /// φ at the initial point followed by φ after each accepted step.
  std::vector<double> phi_history;
  /// φ(L_{t+1}) - φ(L_t) for each accepted step, computed without
  /// subtracting the two φ values.
  std::vector<double> phi_changes;
  /// ⟨∇Φ, L̃⟩ at each iterate where a step was attempted.
  std::vector<double> descent_products;
  bool converged = false;
  bool line_search_failed = false;
};

/// Σ_k tr(A_kᵀ B_k).
double Inner(const std::vector<Matrix>& a, const std::vector<Matrix>& b);

/// sqrt(Σ_k ‖X_k‖²_F).
double SequenceNorm(const std::vector<Matrix>& x);

/// Throws InstabilityError for non-stabilizing gains.
double PhiValue(const LStepProblem& prob, const PeriodicGains& gains);

/// ∇_{L_k}φ = 2 V_{k+1} L_k R - 2 V_{k+1} (A - L_k C) P_k Cᵀ + ρ (L_k - U_k).
std::vector<Matrix> GradientPhi(const LStepProblem& prob,
                                const PeriodicGains& gains);

/// Freezes {P_k}, {V_k} at `gains` and solves, for each k,
///   2 V_{k+1} L (R + C P_k Cᵀ) + ρ L = 2 V_{k+1} A P_k Cᵀ + ρ U_k.
PeriodicGains AndersonMooreUpdate(const LStepProblem& prob,
                                  const PeriodicGains& gains);

/// Largest s in {1, β, β², …} with
///   φ(L + s D) < φ(L) + α s ⟨∇Φ(L), D⟩.
/// Destabilizing trial points are rejected. Throws LineSearchError once s
/// drops below options.min_step.
double ArmijoStep(const LStepProblem& prob, const PeriodicGains& gains,
                  const std::vector<Matrix>& direction, double alpha,
                  double beta, const LStepOptions& options = {});

/// Anderson-Moore iteration with Armijo steps from a stabilizing `init`.
/// A line-search failure ends the loop with the last accepted iterate and
/// line_search_failed set.
LStepResult SolveLStep(const LStepProblem& prob, const PeriodicGains& init,
                       const LStepOptions& options = {});

}  // namespace persched
