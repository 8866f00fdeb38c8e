#include "persched/periodic.h"

#include <Eigen/Eigenvalues>
#include <gtest/gtest.h>

#include "test_util.h"

namespace persched {
namespace {

using testing::Gen;
using testing::MaxAbs;

SystemModel Scalar(double a, double c, double q, double r) {
  return MakeSystem(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, 1.0),
                    Matrix::Constant(1, 1, c), Matrix::Constant(1, 1, q),
                    Matrix::Constant(1, 1, r));
}

PeriodicGains Constant(int K, const Matrix& L) {
  PeriodicGains g;
  g.L.assign(K, L);
  return g;
}

// Runs the covariance recursion forward for `steps` periods from P = BQBᵀ.
std::vector<Matrix> ForwardRecursion(const SystemModel& sys,
                                     const PeriodicGains& gains, int periods) {
  const int K = gains.period();
  Matrix P = sys.ProcessNoise();
  std::vector<Matrix> cycle(K);
  for (int step = 0; step < periods * K; ++step) {
    const int k = step % K;
    cycle[k] = P;
    const Matrix F = sys.A - gains[k] * sys.C;
    P = F * P * F.transpose() + sys.ProcessNoise() +
        gains[k] * sys.R * gains[k].transpose();
  }
  return cycle;
}

// Runs V_k = F_kᵀ V_{k+1} F_k + I backwards for `periods` periods.
std::vector<Matrix> BackwardRecursion(const SystemModel& sys,
                                      const PeriodicGains& gains, int periods) {
  const int K = gains.period();
  const Eigen::Index n = sys.states();
  Matrix V = Matrix::Identity(n, n);
  std::vector<Matrix> cycle(K);
  for (int step = periods * K - 1; step >= 0; --step) {
    const int k = step % K;
    const Matrix F = sys.A - gains[k] * sys.C;
    V = F.transpose() * V * F + Matrix::Identity(n, n);
    cycle[k] = V;
  }
  return cycle;
}

// Kalman predictor recursion under a schedule, iterated to its limit cycle.
std::vector<Matrix> ScheduledRiccatiGains(const SystemModel& sys,
                                          const Schedule& sched, int periods) {
  const int K = sched.period();
  Matrix P = sys.ProcessNoise();
  std::vector<Matrix> gains(K);
  for (int step = 0; step < periods * K; ++step) {
    const int k = step % K;
    Matrix L = Matrix::Zero(sys.states(), sys.sensors());
    const auto idx = sched.ActiveSensors(k);
    if (!idx.empty()) {
      Matrix Ca(idx.size(), sys.states());
      Matrix Ra(idx.size(), idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        Ca.row(i) = sys.C.row(idx[i]);
        for (std::size_t j = 0; j < idx.size(); ++j) Ra(i, j) = sys.R(idx[i], idx[j]);
      }
      const Matrix La = sys.A * P * Ca.transpose() *
                        (Ca * P * Ca.transpose() + Ra).inverse();
      for (std::size_t i = 0; i < idx.size(); ++i) L.col(idx[i]) = La.col(i);
    }
    gains[k] = L;
    const Matrix F = sys.A - L * sys.C;
    P = F * P * F.transpose() + sys.ProcessNoise() + L * sys.R * L.transpose();
  }
  return gains;
}

Schedule RandomSchedule(Gen& gen, int K, int M) {
  Schedule s(K, M);
  for (int k = 0; k < K; ++k)
    for (int m = 0; m < M; ++m) s.set(k, m, gen.Coin());
  return s;
}

TEST(LiftCyclic, Examples) {
  Gen gen(1);
  const Matrix X = gen.Mat(2, 3);
  std::vector<Matrix> one{X};
  EXPECT_EQ(LiftCyclic(one, true), X);

  const Matrix X0 = gen.Mat(2, 2);
  const Matrix X1 = gen.Mat(2, 2);
  std::vector<Matrix> two{X0, X1};
  Matrix expected = Matrix::Zero(4, 4);
  expected.block(0, 2, 2, 2) = X1;
  expected.block(2, 0, 2, 2) = X0;
  EXPECT_EQ(LiftCyclic(two, true), expected);

  Matrix diag = Matrix::Zero(4, 4);
  diag.block(0, 0, 2, 2) = X0;
  diag.block(2, 2, 2, 2) = X1;
  EXPECT_EQ(LiftCyclic(two, false), diag);

  std::vector<Matrix> ids(3, Matrix::Identity(2, 2));
  const Matrix T = LiftCyclic(ids, true);
  EXPECT_NE(T, Matrix::Identity(6, 6));
  EXPECT_EQ(T * T * T, Matrix::Identity(6, 6));

  std::vector<Matrix> bad{Matrix::Zero(2, 2), Matrix::Zero(3, 3)};
  EXPECT_THROW(LiftCyclic(bad, true), DimensionError);
}

TEST(Monodromy, Examples) {
  Gen gen(2);
  const SystemModel stable = gen.StableSystem(3, 2);
  EXPECT_TRUE(MonodromyStable(stable, PeriodicGains::Zero(4, 3, 2)));
  const SystemModel unstable = Scalar(2.0, 1.0, 1.0, 1.0);
  EXPECT_FALSE(MonodromyStable(unstable, PeriodicGains::Zero(1, 1, 1)));
}

TEST(Monodromy, LiftedEigenvaluesAreKthRoots) {
  Gen gen(3);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = gen.Int(1, 4);
    const SystemModel sys = gen.StableSystem(gen.Int(1, 4), gen.Int(1, 3), 1.2);
    PeriodicGains g;
    for (int k = 0; k < K; ++k) g.L.push_back(gen.Mat(sys.states(), sys.sensors(), 0.5));
    const auto maps = ClosedLoopMaps(sys, g);
    const double lifted = SpectralRadius(LiftCyclic(maps, true));
    EXPECT_NEAR(std::pow(lifted, K), MonodromyRadius(sys, g),
                1e-9 * std::max(1.0, MonodromyRadius(sys, g)));
  }
}

TEST(CovarianceLimitCycle, ScalarDeadbeat) {
  const SystemModel sys = Scalar(0.5, 1.0, 1.0, 1.0);
  const auto cycle = CovarianceLimitCycle(sys, Constant(1, Matrix::Constant(1, 1, 0.5)));
  EXPECT_NEAR(cycle.P[0](0, 0), 1.25, 1e-14);
  EXPECT_NEAR(ObjectiveJ(sys, Constant(1, Matrix::Constant(1, 1, 0.5))), 1.25, 1e-14);

  const SystemModel noisy = Scalar(0.5, 1.0, 1.0, 2.0);
  EXPECT_NEAR(ObjectiveJ(noisy, Constant(1, Matrix::Constant(1, 1, 0.5))), 1.5, 1e-14);
}

TEST(CovarianceLimitCycle, EqualGainsCollapseToSinglePeriod) {
  Gen gen(4);
  const SystemModel sys = gen.StableSystem(3, 2);
  const PeriodicGains one = gen.SmallGains(sys, 1, 0.3);
  const auto c1 = CovarianceLimitCycle(sys, one);
  const auto c2 = CovarianceLimitCycle(sys, Constant(2, one[0]));
  EXPECT_LE(MaxAbs(c2.P[0] - c1.P[0]), 1e-12);
  EXPECT_LE(MaxAbs(c2.P[1] - c1.P[0]), 1e-12);
}

TEST(CovarianceLimitCycle, MatchesLongRunRecursion) {
  const SystemModel sys = Scalar(0.9, 1.0, 1.0, 1.0);
  PeriodicGains g;
  g.L = {Matrix::Constant(1, 1, 0.3), Matrix::Constant(1, 1, 0.7)};
  const auto cycle = CovarianceLimitCycle(sys, g);
  const auto oracle = ForwardRecursion(sys, g, 5000);  // 10,000 steps
  EXPECT_NEAR(cycle.P[0](0, 0), oracle[0](0, 0), 1e-12);
  EXPECT_NEAR(cycle.P[1](0, 0), oracle[1](0, 0), 1e-12);
}

TEST(CovarianceLimitCycle, LiftedAgreesWithCyclicAndHasWraparound) {
  Gen gen(5);
  for (int trial = 0; trial < 40; ++trial) {
    const int K = gen.Int(1, 5);
    const int n = gen.Int(1, 60 / K > 6 ? 6 : 60 / K);
    const SystemModel sys = gen.StableSystem(n, gen.Int(1, 3), gen.Uniform(0.3, 0.92));
    const PeriodicGains g = gen.SmallGains(sys, K, 0.6);
    const auto cyc = CovarianceLimitCycle(sys, g, CycleMethod::kCyclic);
    const auto lift = CovarianceLimitCycle(sys, g, CycleMethod::kLifted);
    for (int k = 0; k < K; ++k) {
      EXPECT_LE(MaxAbs(cyc.P[k] - lift.P[k]), 1e-8 * std::max(1.0, MaxAbs(lift.P[k])));
      EXPECT_LE(MaxAbs(cyc.P[k] - cyc.P[k].transpose()), 1e-9);
      Eigen::SelfAdjointEigenSolver<Matrix> eig(cyc.P[k]);
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-9);
    }
    const Matrix F = sys.A - g[K - 1] * sys.C;
    const Matrix wrapped = F * cyc.P[K - 1] * F.transpose() + sys.ProcessNoise() +
                           g[K - 1] * sys.R * g[K - 1].transpose();
    EXPECT_LE((cyc.P[0] - wrapped).norm(), 1e-8 * std::max(1.0, cyc.P[0].norm()));

    const auto v_cyc = ValueCycle(sys, g, CycleMethod::kCyclic);
    const auto v_lift = ValueCycle(sys, g, CycleMethod::kLifted);
    for (int k = 0; k < K; ++k) {
      EXPECT_LE(MaxAbs(v_cyc[k] - v_lift[k]), 1e-8 * std::max(1.0, MaxAbs(v_lift[k])));
    }
  }
}

TEST(CovarianceLimitCycle, RejectsUnstableGains) {
  EXPECT_THROW(CovarianceLimitCycle(Scalar(2.0, 1.0, 1.0, 1.0),
                                    PeriodicGains::Zero(2, 1, 1)),
               InstabilityError);
  EXPECT_THROW(ValueCycle(Scalar(2.0, 1.0, 1.0, 1.0), PeriodicGains::Zero(2, 1, 1)),
               InstabilityError);
}

TEST(ValueCycle, Examples) {
  // A - L C = 0 with A = C = I, L = I.
  const SystemModel sys = MakeSystem(Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                     Matrix::Identity(2, 2), Matrix::Identity(2, 2),
                                     Matrix::Identity(2, 2));
  for (const auto& V : ValueCycle(sys, Constant(3, Matrix::Identity(2, 2)))) {
    EXPECT_LE(MaxAbs(V - Matrix::Identity(2, 2)), 1e-15);
  }
  const auto v = ValueCycle(Scalar(0.5, 1.0, 1.0, 1.0), PeriodicGains::Zero(1, 1, 1));
  EXPECT_NEAR(v[0](0, 0), 4.0 / 3.0, 1e-14);
}

TEST(ValueCycle, MatchesBackwardIteration) {
  Gen gen(6);
  for (int trial = 0; trial < 10; ++trial) {
    const SystemModel sys = gen.StableSystem(3, 2);
    const PeriodicGains g = gen.SmallGains(sys, 3, 0.4);
    const auto V = ValueCycle(sys, g);
    const auto oracle = BackwardRecursion(sys, g, 3000);
    for (int k = 0; k < 3; ++k) {
      EXPECT_LE(MaxAbs(V[k] - oracle[k]), 1e-10 * std::max(1.0, MaxAbs(oracle[k])));
      Eigen::SelfAdjointEigenSolver<Matrix> eig(V[k] - Matrix::Identity(3, 3));
      EXPECT_GE(eig.eigenvalues().minCoeff(), -1e-10);
    }
  }
}

TEST(ObjectiveJ, RotationInvariant) {
  Gen gen(7);
  for (int trial = 0; trial < 10; ++trial) {
    const int K = gen.Int(2, 5);
    const SystemModel sys = gen.StableSystem(3, 2);
    PeriodicGains g = gen.SmallGains(sys, K, 0.5);
    const double J = ObjectiveJ(sys, g);
    std::rotate(g.L.begin(), g.L.begin() + 1, g.L.end());
    EXPECT_NEAR(ObjectiveJ(sys, g), J, 1e-10 * J);
  }
}

TEST(ObjectiveJ, KalmanGainGivesDareTrace) {
  Gen gen(8);
  for (int trial = 0; trial < 10; ++trial) {
    const SystemModel sys = gen.StableSystem(4, 2, 1.2);
    const Matrix P = SolveDare(sys.A, sys.C, sys.ProcessNoise(), sys.R);
    const Matrix L = PredictorGain(sys.A, sys.C, P, sys.R);
    EXPECT_NEAR(ObjectiveJ(sys, Constant(1, L)), P.trace(), 1e-8 * P.trace());
  }
}

TEST(ScheduleFromGains, Thresholding) {
  EXPECT_EQ(ScheduleFromGains(PeriodicGains::Zero(3, 2, 4), 0.0).Total(), 0);

  PeriodicGains g = PeriodicGains::Zero(2, 2, 3);
  g[0](1, 2) = 0.5;
  const Schedule s = ScheduleFromGains(g, 0.0);
  EXPECT_EQ(s.Total(), 1);
  EXPECT_TRUE(s.active(0, 2));

  g[1](0, 0) = 5e-7;
  g[1](0, 1) = 2e-6;
  const Schedule t = ScheduleFromGains(g, 1e-6);
  EXPECT_FALSE(t.active(1, 0));
  EXPECT_TRUE(t.active(1, 1));
  EXPECT_DOUBLE_EQ(DefaultZeroTolerance(g), 0.5e-6);
}

TEST(Schedule, CountsAndBounds) {
  Schedule s(3, 2);
  s.set(0, 0, true);
  s.set(2, 0, true);
  s.set(1, 1, true);
  EXPECT_EQ(s.ActivationsOf(0), 2);
  EXPECT_EQ(s.ActiveAt(1), 1);
  EXPECT_EQ(s.Total(), 3);
  const std::vector<int> ok{2, 1};
  const std::vector<int> tight{1, 1};
  EXPECT_TRUE(s.SatisfiesBounds(ok));
  EXPECT_FALSE(s.SatisfiesBounds(tight));
  EXPECT_EQ(s.ActiveSensors(0), std::vector<int>{0});
  EXPECT_EQ(Schedule::AllOn(3, 2).Total(), 6);
}

TEST(InitGainsForSchedule, AllOnSinglePeriodIsKalmanGain) {
  Gen gen(9);
  for (int trial = 0; trial < 10; ++trial) {
    const SystemModel sys = gen.StableSystem(gen.Int(1, 5), gen.Int(1, 3), 1.3);
    const Matrix P = SolveDare(sys.A, sys.C, sys.ProcessNoise(), sys.R);
    const Matrix L = PredictorGain(sys.A, sys.C, P, sys.R);
    const auto g = InitGainsForSchedule(sys, Schedule::AllOn(1, sys.sensors()));
    EXPECT_LE(MaxAbs(g[0] - L), 1e-8 * std::max(1.0, MaxAbs(L)));
  }
}

TEST(InitGainsForSchedule, InactiveSensorHasZeroColumn) {
  Gen gen(10);
  const SystemModel sys = gen.StableSystem(3, 3);
  Schedule s = Schedule::AllOn(4, 3);
  for (int k = 0; k < 4; ++k) s.set(k, 1, false);
  s.set(2, 0, false);
  const auto g = InitGainsForSchedule(sys, s);
  for (int k = 0; k < 4; ++k) EXPECT_EQ(g[k].col(1).norm(), 0.0);
  EXPECT_EQ(g[2].col(0).norm(), 0.0);
  EXPECT_EQ(ScheduleFromGains(g, 0.0), s);
  EXPECT_TRUE(MonodromyStable(sys, g));
}

TEST(InitGainsForSchedule, ScalarAlternatingMatchesCoupledRecursions) {
  const SystemModel sys = Scalar(1.2, 1.0, 1.0, 1.0);
  Schedule s(2, 1);
  s.set(0, 0, true);
  const auto g = InitGainsForSchedule(sys, s);
  const auto oracle = ScheduledRiccatiGains(sys, s, 2000);
  EXPECT_NEAR(g[0](0, 0), oracle[0](0, 0), 1e-10);
  EXPECT_EQ(g[1](0, 0), 0.0);
}

TEST(InitGainsForSchedule, MatchesScheduledRecursionAndLiftedDare) {
  Gen gen(11);
  for (int trial = 0; trial < 20; ++trial) {
    const int K = gen.Int(1, 4);
    const SystemModel sys = gen.StableSystem(gen.Int(1, 4), gen.Int(1, 3), 0.9);
    const Schedule s = RandomSchedule(gen, K, static_cast<int>(sys.sensors()));
    const auto g = InitGainsForSchedule(sys, s);
    const auto oracle = ScheduledRiccatiGains(sys, s, 3000);
    const auto lifted = InitGainsForScheduleLifted(sys, s);
    for (int k = 0; k < K; ++k) {
      EXPECT_LE(MaxAbs(g[k] - oracle[k]), 1e-9);
      EXPECT_LE(MaxAbs(g[k] - lifted[k]), 1e-8);
    }
  }
}

TEST(InitGainsForSchedule, UndetectableScheduleFails) {
  const SystemModel sys = Scalar(1.5, 1.0, 1.0, 1.0);
  EXPECT_FALSE(PeriodicDetectable(sys, Schedule(3, 1)));
  EXPECT_THROW(InitGainsForSchedule(sys, Schedule(3, 1)), InitializationError);
  Schedule once(3, 1);
  once.set(1, 0, true);
  EXPECT_TRUE(PeriodicDetectable(sys, once));
  EXPECT_NO_THROW(InitGainsForSchedule(sys, once));
}

TEST(MaskedObservations, ZeroesInactiveRows) {
  Gen gen(12);
  const SystemModel sys = gen.StableSystem(3, 2);
  Schedule s(2, 2);
  s.set(0, 1, true);
  const auto C = MaskedObservations(sys, s);
  EXPECT_EQ(C[0].row(0).norm(), 0.0);
  EXPECT_EQ(C[0].row(1), sys.C.row(1));
  EXPECT_EQ(C[1].norm(), 0.0);
}

TEST(EvaluateSchedule, EmptyScheduleIsOpenLoopLyapunov) {
  Gen gen(13);
  const SystemModel sys = gen.StableSystem(4, 2);
  const Matrix P = SolveDiscreteLyapunov(sys.A, sys.ProcessNoise());
  EXPECT_NEAR(EvaluateSchedule(sys, Schedule(3, 2)).J, P.trace(), 1e-10 * P.trace());
}

TEST(EvaluateSchedule, AllOnIsBest) {
  Gen gen(14);
  for (int trial = 0; trial < 5; ++trial) {
    const SystemModel sys = gen.StableSystem(3, 3);
    const int K = gen.Int(1, 4);
    const double best = EvaluateSchedule(sys, Schedule::AllOn(K, 3)).J;
    for (int draw = 0; draw < 20; ++draw) {
      EXPECT_LE(best, EvaluateSchedule(sys, RandomSchedule(gen, K, 3)).J + 1e-12);
    }
  }
}

TEST(EvaluateSchedule, FieldInstanceIsDeterministic) {
  const SystemModel sys = BuildDiffusionSystem(DefaultFieldGeometry(), 0.25, 1.0);
  const Schedule s = Schedule::AllOn(10, 10);
  const auto a = EvaluateSchedule(sys, s);
  const auto b = EvaluateSchedule(sys, s);
  EXPECT_TRUE(std::isfinite(a.J));
  EXPECT_EQ(a.J, b.J);
  for (int k = 0; k < 10; ++k) EXPECT_EQ(a.gains[k], b.gains[k]);
}

}  // namespace
}  // namespace persched
