#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "persched/linalg.h"
#include "persched/system_model.h"

namespace persched {

/// A periodic estimator cannot be initialized for a schedule, typically
/// because the masked periodic pair is not detectable.
class InitializationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// K-periodic estimator gains L_0 … L_{K-1}; L_{k+K} = L_k is implicit.
struct PeriodicGains {
  std::vector<Matrix> L;

  int period() const { return static_cast<int>(L.size()); }
  const Matrix& operator[](int k) const { return L[k]; }
  Matrix& operator[](int k) { return L[k]; }

  static PeriodicGains Zero(int K, Eigen::Index n, Eigen::Index m);
};

/// Error covariances P_0 … P_{K-1} of the periodic steady state.
struct CovarianceCycle {
  std::vector<Matrix> P;

  int period() const { return static_cast<int>(P.size()); }
  double MeanTrace() const;
};

/// K×M binary sensor activation mask.
class Schedule {
 public:
  Schedule() = default;
  Schedule(int period, int sensors);

  static Schedule AllOn(int period, int sensors);

  int period() const { return period_; }
  int sensors() const { return sensors_; }

  bool active(int k, int m) const { return bits_[Offset(k, m)] != 0; }
  void set(int k, int m, bool on) { bits_[Offset(k, m)] = on ? 1 : 0; }

  int ActivationsOf(int m) const;
  int ActiveAt(int k) const;
  int Total() const;

  /// Σ_k ζ_{k,m} <= eta[m] for all m.
  bool SatisfiesBounds(std::span<const int> eta) const;

  /// Row-major bits, k major and m fast.
  const std::vector<std::uint8_t>& bits() const { return bits_; }

  /// Column indices of active sensors at step k.
  std::vector<int> ActiveSensors(int k) const;

  friend bool operator==(const Schedule&, const Schedule&) = default;

 private:
  std::size_t Offset(int k, int m) const {
    return static_cast<std::size_t>(k) * sensors_ + m;
  }

  int period_ = 0;
  int sensors_ = 0;
  std::vector<std::uint8_t> bits_;
};

/// cyclic = true: block (k+1 mod K, k) holds blocks[k] (the block-cyclic
/// arrangement T·diag{X_k}). cyclic = false: block diagonal.
Matrix LiftCyclic(std::span<const Matrix> blocks, bool cyclic);

/// Closed-loop maps F_k = A - L_k C.
std::vector<Matrix> ClosedLoopMaps(const SystemModel& sys,
                                   const PeriodicGains& gains);

/// (A - L_{K-1} C) ⋯ (A - L_0 C).
Matrix Monodromy(const SystemModel& sys, const PeriodicGains& gains);

/// Spectral radius of the monodromy matrix.
double MonodromyRadius(const SystemModel& sys, const PeriodicGains& gains);

bool MonodromyStable(const SystemModel& sys, const PeriodicGains& gains);

/// How periodic Lyapunov cycles are computed.
enum class CycleMethod {
  /// Solve the period map's fixed point for k = 0 and sweep the recursion.
  kCyclic,
  /// Solve one Lyapunov equation on the KN×KN block-cyclic lift.
  kLifted,
};

/// Periodic solution of X_{k+1} = F_k X_k F_kᵀ + W_k, X_K = X_0, via the
/// period map's fixed point for X_0 and a forward sweep. Throws
/// InstabilityError when F_{K-1} ⋯ F_0 is not Schur.
std::vector<Matrix> PeriodicLyapunovCycle(std::span<const Matrix> maps,
                                          std::span<const Matrix> forcing);

/// Periodic solution of P_{k+1} = F_k P_k F_kᵀ + B Q Bᵀ + L_k R L_kᵀ.
/// Throws InstabilityError when the monodromy is not Schur.
CovarianceCycle CovarianceLimitCycle(const SystemModel& sys,
                                     const PeriodicGains& gains,
                                     CycleMethod method = CycleMethod::kCyclic);

/// Periodic solution of V_k = F_kᵀ V_{k+1} F_k + I.
std::vector<Matrix> ValueCycle(const SystemModel& sys,
                               const PeriodicGains& gains,
                               CycleMethod method = CycleMethod::kCyclic);

/// (1/K) Σ_k tr P_k over the covariance limit cycle.
double ObjectiveJ(const SystemModel& sys, const PeriodicGains& gains);

/// ζ_{k,m} = 1 iff ‖column m of L_k‖₂ > zero_tol.
Schedule ScheduleFromGains(const PeriodicGains& gains, double zero_tol);

/// 1e-6 times the largest column norm across the sequence.
double DefaultZeroTolerance(const PeriodicGains& gains);

/// Observation matrices C(k) with rows of inactive sensors zeroed.
std::vector<Matrix> MaskedObservations(const SystemModel& sys,
                                       const Schedule& sched);

/// PBH detectability of the lifted pair (T·diag{A}, diag{C(k)}).
bool PeriodicDetectable(const SystemModel& sys, const Schedule& sched);

struct PeriodicRiccatiOptions {
  double tol = 1e-12;
  int max_cycles = 10000;
};

/// Riccati-optimal periodic gains for a fixed schedule, computed by cyclic
/// fixed-point iteration of the K coupled Riccati recursions. Inactive sensor
/// columns are exactly zero. Throws InitializationError when the iteration
/// fails or the resulting estimator is not stabilizing.
PeriodicGains InitGainsForSchedule(const SystemModel& sys,
                                   const Schedule& sched,
                                   const PeriodicRiccatiOptions& options = {});

/// The same gains via a single DARE on the block-cyclic lift (the lifted
/// observation matrix keeps only active rows). Cross-check for small KN.
PeriodicGains InitGainsForScheduleLifted(const SystemModel& sys,
                                         const Schedule& sched);

struct ScheduleEvaluation {
  double J = 0.0;
  PeriodicGains gains;
  CovarianceCycle cycle;
};

/// Riccati-optimal gains for `sched` and the mean trace they induce.
ScheduleEvaluation EvaluateSchedule(const SystemModel& sys,
                                    const Schedule& sched,
                                    const PeriodicRiccatiOptions& options = {});

}  // namespace persched
