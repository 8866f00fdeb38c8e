// Acceptance checks for the scheduler. Prints one PASS/FAIL line per
// criterion and exits non-zero if any criterion fails. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

#include "persched/admm.h"
#include "persched/baselines.h"
#include "persched/g_step.h"
#include "persched/l_step.h"
#include "test_util.h"

namespace persched {
namespace {

using testing::Gen;
using testing::MaxAbs;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string Fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

SystemModel FieldInstance() {
  return BuildDiffusionSystem(DefaultFieldGeometry(), 0.25, 1.0);
}

AdmmConfig FieldConfig(double gamma, int eta) {
  AdmmConfig cfg;
  cfg.K = 10;
  cfg.gamma = gamma;
  cfg.eta.assign(10, eta);
  cfg.rho = 10.0;
  cfg.eps = 1e-3;
  return cfg;
}

std::vector<Matrix> RandomU(Gen& gen, const SystemModel& sys, int K, double scale) {
  std::vector<Matrix> U;
  for (int k = 0; k < K; ++k) U.push_back(gen.Mat(sys.states(), sys.sensors(), scale));
  return U;
}

// 1. Analytic gradient against central differences of φ.
Outcome GradientCorrectness() {
  constexpr double kStep = 1e-5, kTol = 1e-5;
  Gen gen(101);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const SystemModel sys = gen.StableSystem(gen.Int(1, 4), gen.Int(1, 3), gen.Uniform(0.3, 0.9));
    const int K = gen.Int(1, 3);
    const PeriodicGains L = gen.SmallGains(sys, K, 0.3);
    const LStepProblem prob{sys, RandomU(gen, sys, K, 0.5), gen.Uniform(0.1, 20.0)};
    const auto grad = GradientPhi(prob, L);
    double err = 0.0, ref = 0.0;
    for (int k = 0; k < K; ++k) {
      for (Eigen::Index i = 0; i < L[k].size(); ++i) {
        PeriodicGains plus = L, minus = L;
        plus[k](i) += kStep;
        minus[k](i) -= kStep;
        const double fd = (PhiValue(prob, plus) - PhiValue(prob, minus)) / (2.0 * kStep);
        err += (grad[k](i) - fd) * (grad[k](i) - fd);
        ref += fd * fd;
      }
    }
    worst = std::max(worst, std::sqrt(err / ref));
  }
  return {worst <= kTol, Fmt("20 instances, worst relative error %.2e (tol %.0e)", worst, kTol)};
}

// 2. Anderson-Moore directions descend and every accepted step lowers φ.
Outcome DescentProperty() {
  Gen gen(202);
  int steps = 0, bad_slopes = 0, bad_changes = 0, stalled = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const SystemModel sys = gen.StableSystem(gen.Int(2, 4), gen.Int(1, 3), gen.Uniform(0.3, 0.95));
    const int K = gen.Int(1, 3);
    const LStepProblem prob{sys, RandomU(gen, sys, K, 0.5), gen.Uniform(0.5, 20.0)};
    const auto res = SolveLStep(prob, gen.SmallGains(sys, K, 0.3));
    for (double slope : res.descent_products) bad_slopes += !(slope < 0.0);
    for (double change : res.phi_changes) bad_changes += !(change < 0.0);
    steps += static_cast<int>(res.phi_changes.size());
    stalled += !res.converged;
  }
  const bool pass = bad_slopes == 0 && bad_changes == 0 && steps > 0;
  return {pass, Fmt("50 solves, %d steps, %d non-descent directions, %d non-decreasing "
                    "steps, %d unconverged",
                    steps, bad_slopes, bad_changes, stalled)};
}

// 3. G-step against brute-force support enumeration.
Outcome GStepExactness() {
  constexpr double kTol = 1e-12;
  Gen gen(303);
  double worst = 0.0;
  int infeasible = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int K = gen.Int(1, 4), M = gen.Int(1, 4);
    const Eigen::Index n = gen.Int(1, 3);
    GStepProblem prob;
    for (int k = 0; k < K; ++k) prob.S.push_back(gen.Mat(n, M));
    prob.gamma = gen.Uniform(0.0, 2.0);
    prob.rho = gen.Uniform(0.1, 20.0);
    for (int m = 0; m < M; ++m) prob.eta.push_back(gen.Int(0, K));
    const auto G = GStep(prob);

    double best = 0.0, got = 0.0;
    for (int m = 0; m < M; ++m) {
      double sensor_best = std::numeric_limits<double>::infinity();
      for (unsigned mask = 0; mask < (1u << K); ++mask) {
        if (__builtin_popcount(mask) > prob.eta[m]) continue;
        double cost = 0.0;
        for (int k = 0; k < K; ++k) {
          cost += (mask >> k) & 1u ? prob.gamma
                                   : 0.5 * prob.rho * prob.S[k].col(m).squaredNorm();
        }
        sensor_best = std::min(sensor_best, cost);
      }
      best += sensor_best;
      int active = 0;
      for (int k = 0; k < K; ++k) {
        const bool on = G[k].col(m).norm() > 0.0;
        active += on;
        got += on ? prob.gamma : 0.0;
        got += 0.5 * prob.rho * (G[k].col(m) - prob.S[k].col(m)).squaredNorm();
      }
      infeasible += active > prob.eta[m];
    }
    worst = std::max(worst, std::abs(got - best));
  }
  return {worst <= kTol && infeasible == 0,
          Fmt("200 instances, worst |psi - brute force| %.1e (tol %.0e), %d infeasible",
              worst, kTol, infeasible)};
}

// 4. Lifted and cyclic periodic solvers agree; K = 1 reproduces the DARE gain.
Outcome PeriodicCrossValidation() {
  constexpr double kTol = 1e-8;
  Gen gen(404);
  double worst = 0.0;
  int instances = 0;
  for (int trial = 0; trial < 40; ++trial) {
    const int n = gen.Int(1, 6);
    const int K = gen.Int(1, 60 / n);
    const SystemModel sys = gen.StableSystem(n, gen.Int(1, 3), gen.Uniform(0.3, 0.92));
    const PeriodicGains g = gen.SmallGains(sys, K, 0.3);
    const auto cyc = CovarianceLimitCycle(sys, g, CycleMethod::kCyclic);
    const auto lift = CovarianceLimitCycle(sys, g, CycleMethod::kLifted);
    const auto vc = ValueCycle(sys, g, CycleMethod::kCyclic);
    const auto vl = ValueCycle(sys, g, CycleMethod::kLifted);
    for (int k = 0; k < K; ++k) {
      worst = std::max(worst, MaxAbs(cyc.P[k] - lift.P[k]) / MaxAbs(lift.P[k]));
      worst = std::max(worst, MaxAbs(vc[k] - vl[k]) / MaxAbs(vl[k]));
    }

    // Riccati initialization on a random detectable schedule, unstable plants included.
    const SystemModel plant = MakeSystem(gen.WithRadius(n, gen.Uniform(0.5, 1.2)),
                                         sys.B, sys.C, sys.Q, sys.R);
    Schedule sched(K, plant.sensors());
    for (int k = 0; k < K; ++k) {
      for (int m = 0; m < plant.sensors(); ++m) sched.set(k, m, gen.Coin());
    }
    if (!PeriodicDetectable(plant, sched)) continue;
    const PeriodicGains a = InitGainsForSchedule(plant, sched);
    const PeriodicGains b = InitGainsForScheduleLifted(plant, sched);
    for (int k = 0; k < K; ++k) {
      worst = std::max(worst, MaxAbs(a[k] - b[k]) / std::max(1.0, MaxAbs(b[k])));
    }
    ++instances;
  }
  double dare = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const int n = gen.Int(1, 6);
    const SystemModel sys = gen.StableSystem(n, gen.Int(1, 3), gen.Uniform(0.3, 1.3));
    const PeriodicGains g = InitGainsForSchedule(sys, Schedule::AllOn(1, sys.sensors()));
    const Matrix P = SolveDare(sys.A, sys.C, sys.ProcessNoise(), sys.R);
    const Matrix L = PredictorGain(sys.A, sys.C, P, sys.R);
    dare = std::max(dare, MaxAbs(g[0] - L) / std::max(1.0, MaxAbs(L)));
  }
  return {worst <= kTol && dare <= kTol,
          Fmt("40 cycles + %d Riccati schedules: lifted vs cyclic %.1e, K=1 vs DARE %.1e "
              "(tol %.0e)",
              instances, worst, dare, kTol)};
}

// 5. Small instances: ADMM at γ = 0 against the exhaustive oracle.
Outcome SmallInstanceOptimality() {
  constexpr double kGap = 0.05, kExact = 1e-9;
  Gen gen(505);
  int instances = 0, exact = 0, near = 0;
  double worst = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    FieldGeometry geom;
    const bool square = gen.Coin();
    geom.ell_h = square ? 1 : 0;
    geom.ell_v = square ? 1 : 3;
    geom.T = gen.Uniform(0.25, 1.0);
    const int M = gen.Int(2, 3);
    std::vector<int> nodes = {0, 1, 2, 3};
    std::shuffle(nodes.begin(), nodes.end(), gen.engine());
    geom.sensor_positions.assign(nodes.begin(), nodes.begin() + M);
    const SystemModel sys = BuildDiffusionSystem(geom, gen.Uniform(0.1, 1.0), 1.0);
    AdmmConfig cfg;
    cfg.K = 4;
    cfg.gamma = 0.0;
    for (int m = 0; m < M; ++m) cfg.eta.push_back(gen.Int(1, 3));
    const auto rep = RunAdmm(sys, cfg);
    const auto oracle = ExhaustiveSearch(sys, cfg.K, cfg.eta);
    const double gap = (rep.J_polished - oracle.best_J) / oracle.best_J;
    worst = std::max(worst, gap);
    exact += gap <= kExact;
    near += gap <= 1e-5;
    ++instances;
  }
  const bool pass = worst <= kGap && 2 * exact > instances;
  return {pass, Fmt("%d instances, worst gap %.2e%% (tol %.0f%%), exactly optimal "
                    "(rel %.0e) in %d, within 1e-5 in %d; majority needed",
                    instances, 100.0 * worst, 100.0 * kGap, kExact, exact, near)};
}

// 6. Field instance: ADMM against matched-cardinality random schedules.
Outcome RandomBaselineDominance() {
  constexpr double kImprovement = 0.02;
  const SystemModel sys = FieldInstance();
  bool pass = true;
  std::string detail;
  for (double gamma : {0.1, 0.15}) {
    for (int eta : {1, 5, 8}) {
      const auto rep = RunAdmm(sys, FieldConfig(gamma, eta));
      const int total = rep.schedule.Total();
      const auto base = RandomBaseline(sys, 10, std::vector<int>(10, eta), total, 500, 2024);
      const double improvement = (base.mean_J - rep.J_polished) / base.mean_J;
      pass &= rep.J_polished <= base.mean_J && improvement >= kImprovement;
      detail += Fmt(" g=%.2f,eta=%d: card %d, J %.4f vs %.4f (%.2f%%);", gamma, eta, total,
                    rep.J_polished, base.mean_J, 100.0 * improvement);
    }
  }
  return {pass, "need >= 2% improvement;" + detail};
}

// 7. γ = 0 activates every sensor η times.
Outcome ZeroGammaSaturation() {
  const SystemModel sys = FieldInstance();
  const auto rep = RunAdmm(sys, FieldConfig(0.0, 5));
  int off = 0;
  for (int m = 0; m < 10; ++m) off += rep.schedule.ActivationsOf(m) != 5;
  return {off == 0, Fmt("eta = 5: %d of 10 sensors below the bound, %d activations", off,
                        rep.schedule.Total())};
}

// 8. Very large γ empties the schedule.
Outcome SparsityLimit() {
  const auto rep = RunAdmm(FieldInstance(), FieldConfig(1e6, 5));
  return {rep.schedule.Total() == 0, Fmt("gamma = 1e6: %d activations", rep.schedule.Total())};
}

// 9. Polished J does not increase with η at γ = 0.
Outcome EtaMonotonicity() {
  constexpr double kRel = 1e-12;
  const SystemModel sys = FieldInstance();
  std::vector<double> J;
  std::string values;
  for (int eta = 1; eta <= 10; ++eta) {
    J.push_back(RunAdmm(sys, FieldConfig(0.0, eta)).J_polished);
    values += Fmt(" %.4f", J.back());
  }
  int violations = 0;
  for (std::size_t i = 1; i < J.size(); ++i) violations += J[i] > J[i - 1] * (1.0 + kRel);
  return {violations == 0, Fmt("%d increases; J(eta=1..10):", violations) + values};
}

bool Alternates(const Schedule& s) {
  for (int k = 0; k < s.period(); ++k) {
    if (s.ActiveAt(k) != 1) return false;
    const int next = (k + 1) % s.period();
    for (int m = 0; m < s.sensors(); ++m) {
      if (s.active(k, m) && s.active(next, m)) return false;
    }
  }
  return true;
}

// 10. Symmetric two-sensor instance staggers its sensors.
Outcome TwoSensorStaggering() {
  // 3×3 lattice, sensors mirror-symmetric about the centre column.
  FieldGeometry geom;
  geom.ell_h = 2;
  geom.ell_v = 2;
  geom.sensor_positions = {geom.Index(1, 0), geom.Index(1, 2)};
  const SystemModel sys = BuildDiffusionSystem(geom, 0.25, 1.0);
  bool pass = true;
  std::string detail;
  for (int K : {4, 6}) {
    AdmmConfig cfg;
    cfg.K = K;
    cfg.gamma = 0.0;
    cfg.eta = {K / 2, K / 2};
    const auto rep = RunAdmm(sys, cfg);
    const bool alternates = Alternates(rep.schedule);
    pass &= alternates;
    detail += Fmt(" K=%d: %s (J %.6f)", K, alternates ? "alternating" : "not alternating",
                  rep.J_polished);
    if (K == 4) {
      const auto oracle = ExhaustiveSearch(sys, K, cfg.eta);
      const bool optimal = rep.J_polished <= oracle.best_J * (1.0 + 1e-9);
      pass &= optimal && Alternates(oracle.best);
      detail += Fmt(", oracle J %.6f %s;", oracle.best_J,
                    Alternates(oracle.best) ? "alternating" : "not alternating");
    }
  }
  return {pass, detail};
}

// 11. Field instance converges within 60 iterations.
Outcome ConvergenceEnvelope() {
  constexpr int kCap = 60;
  const SystemModel sys = FieldInstance();
  bool pass = true;
  std::string detail;
  for (double gamma : {0.0, 0.15}) {
    const auto rep = RunAdmm(sys, FieldConfig(gamma, 5));
    pass &= rep.converged && rep.iterations <= kCap;
    detail += Fmt(" gamma=%.2f: %s in %d iterations;", gamma,
                  rep.converged ? "converged" : "not converged", rep.iterations);
  }
  return {pass, Fmt("rho = 10, eps = 1e-3, eta = 5, cap %d:", kCap) + detail};
}

struct Criterion {
  int id;
  const char* name;
  std::function<Outcome()> run;
};

}  // namespace
}  // namespace persched

int main(int argc, char** argv) {
  using namespace persched;
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness", GradientCorrectness},
      {2, "descent property", DescentProperty},
      {3, "g-step exactness", GStepExactness},
      {4, "periodic solver cross-validation", PeriodicCrossValidation},
      {5, "small-instance optimality", SmallInstanceOptimality},
      {6, "random-baseline dominance", RandomBaselineDominance},
      {7, "gamma = 0 saturation", ZeroGammaSaturation},
      {8, "sparsity limit", SparsityLimit},
      {9, "monotonicity in eta", EtaMonotonicity},
      {10, "two-sensor staggering", TwoSensorStaggering},
      {11, "convergence envelope", ConvergenceEnvelope},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::stoi(argv[i]));

  int failed = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = c.run();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%s %2d %s: %s [%.1f s]\n", out.pass ? "PASS" : "FAIL", c.id, c.name,
                out.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !out.pass;
  }
  return failed == 0 ? 0 : 1;
}
