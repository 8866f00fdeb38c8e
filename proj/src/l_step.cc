#include "persched/l_step.h"

#include <cmath>
#include <limits>
#include <string>

namespace persched {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

// Quantities frozen at one iterate of the Anderson-Moore method.
struct Linearization {
  std::vector<Matrix> maps;
  CovarianceCycle cycle;
  std::vector<Matrix> V;
};

Linearization Linearize(const LStepProblem& prob, const PeriodicGains& gains) {
  Linearization lin;
  lin.maps = ClosedLoopMaps(prob.sys, gains);
  lin.cycle = CovarianceLimitCycle(prob.sys, gains);
  lin.V = ValueCycle(prob.sys, gains);
  return lin;
}

void RequireShapes(const LStepProblem& prob, const PeriodicGains& gains) {
  if (gains.period() != prob.period()) {
    throw DimensionError("gain period " + std::to_string(gains.period()) +
                         " differs from problem period " +
                         std::to_string(prob.period()));
  }
  for (int k = 0; k < prob.period(); ++k) {
    if (prob.U[k].rows() != gains[k].rows() ||
        prob.U[k].cols() != gains[k].cols()) {
      throw DimensionError("U_k and L_k differ in shape");
    }
  }
}

double Penalty(const LStepProblem& prob, const PeriodicGains& gains) {
  double sum = 0.0;
  for (int k = 0; k < prob.period(); ++k) {
    sum += (gains[k] - prob.U[k]).squaredNorm();
  }
  return 0.5 * prob.rho * sum;
}

double PhiFromCycle(const LStepProblem& prob, const PeriodicGains& gains,
                    const CovarianceCycle& cycle) {
  double traces = 0.0;
  for (const auto& P : cycle.P) traces += P.trace();
  return traces + Penalty(prob, gains);
}

PeriodicGains Step(const PeriodicGains& gains,
                   const std::vector<Matrix>& direction, double s) {
  PeriodicGains out = gains;
  for (int k = 0; k < out.period(); ++k) out[k] += s * direction[k];
  return out;
}

// φ(L + s D) - φ(L) without cancellation: the covariance difference solves a
// periodic Lyapunov equation under the trial closed loop, forced by terms that
// are all O(s). Returns +∞ for destabilizing trial gains.
double PhiChange(const LStepProblem& prob, const PeriodicGains& gains,
                 const Linearization& lin, const std::vector<Matrix>& direction,
                 double s, double margin) {
  const PeriodicGains trial = Step(gains, direction, s);
  if (!(MonodromyRadius(prob.sys, trial) < 1.0 - margin)) return kInfinity;
  const auto& sys = prob.sys;
  const int K = prob.period();
  const std::vector<Matrix> trial_maps = ClosedLoopMaps(sys, trial);
  std::vector<Matrix> forcing(K);
  double penalty_change = 0.0;
  for (int k = 0; k < K; ++k) {
    const Matrix& D = direction[k];
    const Matrix& P = lin.cycle.P[k];
    const Matrix DC = D * sys.C;
    const Matrix cross = DC * P * lin.maps[k].transpose() - gains[k] * sys.R * D.transpose();
    forcing[k] = Symmetrize(-s * (cross + cross.transpose()) +
                            s * s * (DC * P * DC.transpose() + D * sys.R * D.transpose()));
    penalty_change += 2.0 * s * ((gains[k] - prob.U[k]).array() * D.array()).sum() +
                      s * s * D.squaredNorm();
  }
  double trace_change = 0.0;
  try {
    for (const auto& X : PeriodicLyapunovCycle(trial_maps, forcing)) {
      trace_change += X.trace();
    }
  } catch (const InstabilityError&) {
    return kInfinity;
  }
  return trace_change + 0.5 * prob.rho * penalty_change;
}

std::vector<Matrix> Gradient(const LStepProblem& prob,
                             const PeriodicGains& gains,
                             const Linearization& lin) {
  const int K = prob.period();
  const auto& sys = prob.sys;
  std::vector<Matrix> grad(K);
  for (int k = 0; k < K; ++k) {
    const Matrix& Vn = lin.V[(k + 1) % K];
    grad[k] = 2.0 * Vn * gains[k] * sys.R -
              2.0 * Vn * lin.maps[k] * lin.cycle.P[k] * sys.C.transpose() +
              prob.rho * (gains[k] - prob.U[k]);
  }
  return grad;
}

PeriodicGains Update(const LStepProblem& prob, const Linearization& lin) {
  const int K = prob.period();
  const auto& sys = prob.sys;
  PeriodicGains next;
  next.L.resize(K);
  for (int k = 0; k < K; ++k) {
    const Matrix& Vn = lin.V[(k + 1) % K];
    const Matrix& P = lin.cycle.P[k];
    const Matrix D = sys.R + sys.C * P * sys.C.transpose();
    const Matrix rhs =
        2.0 * Vn * sys.A * P * sys.C.transpose() + prob.rho * prob.U[k];
    next[k] = SolveGainSylvester(Vn, D, prob.rho, rhs);
  }
  return next;
}

struct Accepted {
  double step = 0.0;
  double change = 0.0;
};

Accepted Backtrack(const LStepProblem& prob, const PeriodicGains& gains,
                   const Linearization& lin,
                   const std::vector<Matrix>& direction, double slope,
                   double alpha, double beta,
                   const LStepOptions& options) {
  if (!(alpha >= 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
    throw InputError("Armijo parameters need alpha in [0,1) and beta in (0,1)");
  }
  double s = 1.0;
  while (s >= options.min_step) {
    const double change =
        PhiChange(prob, gains, lin, direction, s, options.stability_margin);
    if (change < alpha * s * slope) return {s, change};
    s *= beta;
  }
  throw LineSearchError("Armijo step fell below " +
                        std::to_string(options.min_step));
}

}  // namespace

double Inner(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double sum = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) sum += (a[k].array() * b[k].array()).sum();
  return sum;
}

double SequenceNorm(const std::vector<Matrix>& x) {
  double sum = 0.0;
  for (const auto& m : x) sum += m.squaredNorm();
  return std::sqrt(sum);
}

double PhiValue(const LStepProblem& prob, const PeriodicGains& gains) {
  RequireShapes(prob, gains);
  return PhiFromCycle(prob, gains, CovarianceLimitCycle(prob.sys, gains));
}

std::vector<Matrix> GradientPhi(const LStepProblem& prob,
                                const PeriodicGains& gains) {
  RequireShapes(prob, gains);
  return Gradient(prob, gains, Linearize(prob, gains));
}

PeriodicGains AndersonMooreUpdate(const LStepProblem& prob,
                                  const PeriodicGains& gains) {
  RequireShapes(prob, gains);
  return Update(prob, Linearize(prob, gains));
}

double ArmijoStep(const LStepProblem& prob, const PeriodicGains& gains,
                  const std::vector<Matrix>& direction, double alpha,
                  double beta, const LStepOptions& options) {
  RequireShapes(prob, gains);
  const auto lin = Linearize(prob, gains);
  const double slope = Inner(Gradient(prob, gains, lin), direction);
  return Backtrack(prob, gains, lin, direction, slope, alpha, beta, options)
      .step;
}

LStepResult SolveLStep(const LStepProblem& prob, const PeriodicGains& init,
                       const LStepOptions& options) {
  RequireShapes(prob, init);
  if (!MonodromyStable(prob.sys, init)) {
    throw InstabilityError("L-step initial gains are not stabilizing");
  }

  LStepResult result;
  result.gains = init;
  for (int t = 0;; ++t) {
    const auto lin = Linearize(prob, result.gains);
    result.phi = PhiFromCycle(prob, result.gains, lin.cycle);
    if (t == 0) result.phi_history.push_back(result.phi);
    const auto grad = Gradient(prob, result.gains, lin);
    result.grad_norm = SequenceNorm(grad);
    if (result.grad_norm <= options.tol) {
      result.converged = true;
      break;
    }
    if (t >= options.max_iters) break;

    const PeriodicGains candidate = Update(prob, lin);
    std::vector<Matrix> direction(prob.period());
    for (int k = 0; k < prob.period(); ++k) {
      direction[k] = candidate[k] - result.gains[k];
    }
    const double slope = Inner(grad, direction);
    result.descent_products.push_back(slope);
    // A non-negative slope away from stationarity can only come from
    // round-off in nearly stationary iterates.
    if (!(slope < 0.0)) break;

    Accepted accepted;
    try {
      accepted = Backtrack(prob, result.gains, lin, direction, slope,
                           options.armijo_alpha, options.armijo_beta, options);
    } catch (const LineSearchError&) {
      result.line_search_failed = true;
      break;
    }
    result.gains = Step(result.gains, direction, accepted.step);
    result.step_sizes.push_back(accepted.step);
    result.phi_history.push_back(result.phi + accepted.change);
    result.phi_changes.push_back(accepted.change);
    ++result.iterations;
  }
  return result;
}

}  // namespace persched
