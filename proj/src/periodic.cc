#include "persched/periodic.h"

#include <algorithm>
#include <cmath>
#include <string>

namespace persched {

namespace {

// The monodromy Lyapunov equations are N×N; doubling beats the n²×n²
// Kronecker solve well before N reaches the kernel's default threshold.
LyapunovOptions CycleLyapunovOptions() {
  LyapunovOptions options;
  options.kronecker_max_dim = 8;
  return options;
}

void RequireCompatible(const SystemModel& sys, const PeriodicGains& gains) {
  if (gains.period() < 1) throw InputError("gain sequence is empty");
  for (const auto& L : gains.L) {
    if (L.rows() != sys.states() || L.cols() != sys.sensors()) {
      throw DimensionError("gain has shape " + std::to_string(L.rows()) + "x" +
                           std::to_string(L.cols()) + ", expected " +
                           std::to_string(sys.states()) + "x" +
                           std::to_string(sys.sensors()));
    }
  }
}

std::vector<Matrix> ProcessForcing(const SystemModel& sys,
                                   const PeriodicGains& gains) {
  const Matrix noise = sys.ProcessNoise();
  std::vector<Matrix> forcing;
  forcing.reserve(gains.period());
  for (const auto& L : gains.L) {
    forcing.push_back(Symmetrize(noise + L * sys.R * L.transpose()));
  }
  return forcing;
}

std::vector<Matrix> DiagonalBlocks(const Matrix& lifted, int K, Eigen::Index n) {
  std::vector<Matrix> blocks;
  blocks.reserve(K);
  for (int k = 0; k < K; ++k) blocks.push_back(lifted.block(k * n, k * n, n, n));
  return blocks;
}

}  // namespace

PeriodicGains PeriodicGains::Zero(int K, Eigen::Index n, Eigen::Index m) {
  return PeriodicGains{std::vector<Matrix>(K, Matrix::Zero(n, m))};
}

double CovarianceCycle::MeanTrace() const {
  double sum = 0.0;
  for (const auto& p : P) sum += p.trace();
  return P.empty() ? 0.0 : sum / static_cast<double>(P.size());
}

Schedule::Schedule(int period, int sensors)
    : period_(period), sensors_(sensors) {
  if (period < 1 || sensors < 0) {
    throw InputError("schedule needs period >= 1 and sensors >= 0");
  }
  bits_.assign(static_cast<std::size_t>(period) * sensors, 0);
}

Schedule Schedule::AllOn(int period, int sensors) {
  Schedule s(period, sensors);
  std::fill(s.bits_.begin(), s.bits_.end(), 1);
  return s;
}

int Schedule::ActivationsOf(int m) const {
  int count = 0;
  for (int k = 0; k < period_; ++k) count += active(k, m);
  return count;
}

int Schedule::ActiveAt(int k) const {
  int count = 0;
  for (int m = 0; m < sensors_; ++m) count += active(k, m);
  return count;
}

int Schedule::Total() const {
  int count = 0;
  for (auto b : bits_) count += b;
  return count;
}

bool Schedule::SatisfiesBounds(std::span<const int> eta) const {
  if (static_cast<int>(eta.size()) != sensors_) return false;
  for (int m = 0; m < sensors_; ++m) {
    if (ActivationsOf(m) > eta[m]) return false;
  }
  return true;
}

std::vector<int> Schedule::ActiveSensors(int k) const {
  std::vector<int> out;
  for (int m = 0; m < sensors_; ++m) {
    if (active(k, m)) out.push_back(m);
  }
  return out;
}

Matrix LiftCyclic(std::span<const Matrix> blocks, bool cyclic) {
  if (blocks.empty()) throw DimensionError("cannot lift an empty sequence");
  const Eigen::Index r = blocks[0].rows();
  const Eigen::Index c = blocks[0].cols();
  for (const auto& b : blocks) {
    if (b.rows() != r || b.cols() != c) {
      throw DimensionError("lifted blocks must share one shape");
    }
  }
  const Eigen::Index K = static_cast<Eigen::Index>(blocks.size());
  Matrix lifted = Matrix::Zero(K * r, K * c);
  for (Eigen::Index k = 0; k < K; ++k) {
    const Eigen::Index row = cyclic ? (k + 1) % K : k;
    lifted.block(row * r, k * c, r, c) = blocks[k];
  }
  return lifted;
}

std::vector<Matrix> ClosedLoopMaps(const SystemModel& sys,
                                   const PeriodicGains& gains) {
  RequireCompatible(sys, gains);
  std::vector<Matrix> maps;
  maps.reserve(gains.period());
  for (const auto& L : gains.L) maps.push_back(sys.A - L * sys.C);
  return maps;
}

Matrix Monodromy(const SystemModel& sys, const PeriodicGains& gains) {
  const auto maps = ClosedLoopMaps(sys, gains);
  Matrix product = Matrix::Identity(sys.states(), sys.states());
  for (const auto& F : maps) product = F * product;
  return product;
}

double MonodromyRadius(const SystemModel& sys, const PeriodicGains& gains) {
  return SpectralRadius(Monodromy(sys, gains));
}

bool MonodromyStable(const SystemModel& sys, const PeriodicGains& gains) {
  return MonodromyRadius(sys, gains) < 1.0;
}

std::vector<Matrix> PeriodicLyapunovCycle(std::span<const Matrix> maps,
                                          std::span<const Matrix> forcing) {
  const int K = static_cast<int>(maps.size());
  if (K == 0 || forcing.size() != maps.size()) {
    throw DimensionError("need one forcing term per closed-loop map");
  }
  const Eigen::Index n = maps[0].rows();
  Matrix period_map = Matrix::Identity(n, n);
  Matrix accumulated = Matrix::Zero(n, n);
  for (int k = 0; k < K; ++k) {
    period_map = maps[k] * period_map;
    accumulated = maps[k] * accumulated * maps[k].transpose() + forcing[k];
  }
  std::vector<Matrix> X(K);
  X[0] = SolveDiscreteLyapunov(period_map, Symmetrize(accumulated),
                               CycleLyapunovOptions());
  for (int k = 0; k + 1 < K; ++k) {
    X[k + 1] = Symmetrize(maps[k] * X[k] * maps[k].transpose() + forcing[k]);
  }
  return X;
}

CovarianceCycle CovarianceLimitCycle(const SystemModel& sys,
                                     const PeriodicGains& gains,
                                     CycleMethod method) {
  const auto maps = ClosedLoopMaps(sys, gains);
  const auto forcing = ProcessForcing(sys, gains);
  const int K = gains.period();
  const Eigen::Index n = sys.states();

  if (method == CycleMethod::kLifted) {
    // Block (k+1) of the lifted forcing receives W_k.
    std::vector<Matrix> shifted(K);
    for (int k = 0; k < K; ++k) shifted[(k + 1) % K] = forcing[k];
    LyapunovOptions options;
    options.method = LyapunovMethod::kKronecker;
    const Matrix lifted = SolveDiscreteLyapunov(
        LiftCyclic(maps, true), LiftCyclic(shifted, false), options);
    return CovarianceCycle{DiagonalBlocks(lifted, K, n)};
  }

  return CovarianceCycle{PeriodicLyapunovCycle(maps, forcing)};
}

std::vector<Matrix> ValueCycle(const SystemModel& sys,
                               const PeriodicGains& gains, CycleMethod method) {
  const auto maps = ClosedLoopMaps(sys, gains);
  const int K = gains.period();
  const Eigen::Index n = sys.states();
  const Matrix I = Matrix::Identity(n, n);

  if (method == CycleMethod::kLifted) {
    LyapunovOptions options;
    options.method = LyapunovMethod::kKronecker;
    const Matrix lifted_map = LiftCyclic(maps, true);
    const Matrix lifted = SolveDiscreteLyapunov(
        lifted_map.transpose(), Matrix::Identity(K * n, K * n), options);
    return DiagonalBlocks(lifted, K, n);
  }

  // V_0 = Φᵀ V_0 Φ + W with Φ the monodromy and W the value of the backward
  // sweep started from V_K = 0.
  Matrix period_map = I;
  Matrix accumulated = Matrix::Zero(n, n);
  for (int k = K - 1; k >= 0; --k) {
    period_map = period_map * maps[k];
    accumulated = maps[k].transpose() * accumulated * maps[k] + I;
  }
  std::vector<Matrix> V(K);
  V[0] = SolveDiscreteLyapunov(period_map.transpose(), Symmetrize(accumulated),
                               CycleLyapunovOptions());
  Matrix next = V[0];
  for (int k = K - 1; k >= 1; --k) {
    V[k] = Symmetrize(maps[k].transpose() * next * maps[k] + I);
    next = V[k];
  }
  return V;
}

double ObjectiveJ(const SystemModel& sys, const PeriodicGains& gains) {
  return CovarianceLimitCycle(sys, gains).MeanTrace();
}

Schedule ScheduleFromGains(const PeriodicGains& gains, double zero_tol) {
  if (gains.period() < 1) throw InputError("gain sequence is empty");
  const int M = static_cast<int>(gains[0].cols());
  Schedule sched(gains.period(), M);
  for (int k = 0; k < gains.period(); ++k) {
    for (int m = 0; m < M; ++m) {
      sched.set(k, m, gains[k].col(m).norm() > zero_tol);
    }
  }
  return sched;
}

double DefaultZeroTolerance(const PeriodicGains& gains) {
  double largest = 0.0;
  for (const auto& L : gains.L) {
    for (Eigen::Index m = 0; m < L.cols(); ++m) {
      largest = std::max(largest, L.col(m).norm());
    }
  }
  return 1e-6 * largest;
}

std::vector<Matrix> MaskedObservations(const SystemModel& sys,
                                       const Schedule& sched) {
  std::vector<Matrix> out;
  out.reserve(sched.period());
  for (int k = 0; k < sched.period(); ++k) {
    Matrix Ck = sys.C;
    for (int m = 0; m < sched.sensors(); ++m) {
      if (!sched.active(k, m)) Ck.row(m).setZero();
    }
    out.push_back(std::move(Ck));
  }
  return out;
}

bool PeriodicDetectable(const SystemModel& sys, const Schedule& sched) {
  if (SpectralRadius(sys.A) < 1.0) return true;
  const int K = sched.period();
  std::vector<Matrix> as(K, sys.A);
  return IsDetectable(LiftCyclic(as, true),
                      LiftCyclic(MaskedObservations(sys, sched), false));
}

namespace {

void RequireScheduleFits(const SystemModel& sys, const Schedule& sched) {
  if (sched.sensors() != sys.sensors()) {
    throw DimensionError("schedule has " + std::to_string(sched.sensors()) +
                         " sensors, system has " +
                         std::to_string(sys.sensors()));
  }
}

[[noreturn]] void ThrowInitFailure(const SystemModel& sys,
                                   const Schedule& sched,
                                   const std::string& cause) {
  if (!PeriodicDetectable(sys, sched)) {
    throw InitializationError(
        "schedule leaves an unstable mode unobserved (lifted PBH test "
        "failed); use a denser initial schedule");
  }
  throw InitializationError("periodic Riccati initialization failed: " + cause);
}

}  // namespace

PeriodicGains InitGainsForSchedule(const SystemModel& sys,
                                   const Schedule& sched,
                                   const PeriodicRiccatiOptions& options) {
  RequireScheduleFits(sys, sched);
  const int K = sched.period();
  const Eigen::Index n = sys.states();
  const Matrix noise = sys.ProcessNoise();

  std::vector<std::vector<int>> active(K);
  std::vector<Matrix> C_active(K), R_active(K);
  for (int k = 0; k < K; ++k) {
    active[k] = sched.ActiveSensors(k);
    C_active[k] = sys.C(active[k], Eigen::all);
    R_active[k] = sys.R(active[k], active[k]);
  }

  // One Riccati step; returns the gain on the active columns.
  auto step = [&](int k, const Matrix& P, Matrix& next) -> Matrix {
    const Matrix APAt = sys.A * P * sys.A.transpose();
    if (active[k].empty()) {
      next = Symmetrize(APAt + noise);
      return Matrix::Zero(n, 0);
    }
    Matrix gain = PredictorGain(sys.A, C_active[k], P, R_active[k]);
    next = Symmetrize(APAt + noise - gain * (C_active[k] * P * sys.A.transpose()));
    return gain;
  };

  Matrix P0 = noise;
  bool converged = false;
  for (int cycle = 0; cycle < options.max_cycles; ++cycle) {
    Matrix P = P0;
    Matrix next;
    for (int k = 0; k < K; ++k) {
      step(k, P, next);
      P = std::move(next);
    }
    if (!P.allFinite() || P.norm() > 1e14) {
      ThrowInitFailure(sys, sched, "covariance diverged");
    }
    const double change = (P - P0).norm();
    P0 = std::move(P);
    if (change <= options.tol * std::max(1.0, P0.norm())) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    ThrowInitFailure(sys, sched, "no convergence within " +
                                     std::to_string(options.max_cycles) +
                                     " periods");
  }

  PeriodicGains gains = PeriodicGains::Zero(K, n, sys.sensors());
  Matrix P = P0;
  Matrix next;
  for (int k = 0; k < K; ++k) {
    const Matrix gain = step(k, P, next);
    for (std::size_t j = 0; j < active[k].size(); ++j) {
      gains[k].col(active[k][j]) = gain.col(static_cast<Eigen::Index>(j));
    }
    P = std::move(next);
  }
  if (!MonodromyStable(sys, gains)) {
    ThrowInitFailure(sys, sched, "resulting estimator is not stabilizing");
  }
  return gains;
}

PeriodicGains InitGainsForScheduleLifted(const SystemModel& sys,
                                         const Schedule& sched) {
  RequireScheduleFits(sys, sched);
  const int K = sched.period();
  const Eigen::Index n = sys.states();
  const int total = sched.Total();

  std::vector<Matrix> as(K, sys.A);
  std::vector<Matrix> noise(K, sys.ProcessNoise());
  const Matrix A_lift = LiftCyclic(as, true);
  const Matrix Q_lift = LiftCyclic(noise, false);
  Matrix C_lift = Matrix::Zero(total, K * n);
  Matrix R_lift = Matrix::Zero(total, total);
  std::vector<int> offset(K + 1, 0);
  for (int k = 0; k < K; ++k) {
    const auto idx = sched.ActiveSensors(k);
    const int rows = static_cast<int>(idx.size());
    offset[k + 1] = offset[k] + rows;
    C_lift.block(offset[k], k * n, rows, n) = sys.C(idx, Eigen::all);
    R_lift.block(offset[k], offset[k], rows, rows) = sys.R(idx, idx);
  }

  Matrix P;
  try {
    DareOptions options;
    options.tol = 1e-13;
    options.max_iters = 200000;
    P = SolveDare(A_lift, C_lift, Q_lift, R_lift, options);
  } catch (const std::exception& e) {
    ThrowInitFailure(sys, sched, e.what());
  }
  const Matrix L_lift = PredictorGain(A_lift, C_lift, P, R_lift);

  PeriodicGains gains = PeriodicGains::Zero(K, n, sys.sensors());
  for (int k = 0; k < K; ++k) {
    const auto idx = sched.ActiveSensors(k);
    const int row = (k + 1) % K;
    for (std::size_t j = 0; j < idx.size(); ++j) {
      gains[k].col(idx[j]) =
          L_lift.block(row * n, offset[k] + static_cast<int>(j), n, 1);
    }
  }
  return gains;
}

ScheduleEvaluation EvaluateSchedule(const SystemModel& sys,
                                    const Schedule& sched,
                                    const PeriodicRiccatiOptions& options) {
  ScheduleEvaluation eval;
  eval.gains = InitGainsForSchedule(sys, sched, options);
  eval.cycle = CovarianceLimitCycle(sys, eval.gains);
  eval.J = eval.cycle.MeanTrace();
  return eval;
}

}  // namespace persched
