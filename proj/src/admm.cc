#include "persched/admm.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>

#include <spdlog/spdlog.h>

#include "persched/parallel.h"

namespace persched {

void ValidateConfig(const AdmmConfig& cfg, const SystemModel& sys) {
  if (cfg.K < 1) throw InputError("period K must be >= 1");
  if (!(cfg.rho > 0.0)) throw InputError("rho must be > 0");
  if (!(cfg.eps > 0.0)) throw InputError("eps must be > 0");
  if (!(cfg.gamma >= 0.0)) throw InputError("gamma must be >= 0");
  if (cfg.max_iters < 1) throw InputError("max_iters must be >= 1");
  if (!(cfg.armijo_alpha > 0.0 && cfg.armijo_alpha < 1.0)) {
    throw InputError("armijo_alpha must lie in (0, 1)");
  }
  if (!(cfg.armijo_beta > 0.0 && cfg.armijo_beta < 1.0)) {
    throw InputError("armijo_beta must lie in (0, 1)");
  }
  if (static_cast<Eigen::Index>(cfg.eta.size()) != sys.sensors()) {
    throw DimensionError("need one frequency bound per sensor, got " +
                         std::to_string(cfg.eta.size()) + " for " +
                         std::to_string(sys.sensors()) + " sensors");
  }
  for (int e : cfg.eta) {
    if (e < 1 || e > cfg.K) {
      throw InputError("frequency bound " + std::to_string(e) +
                       " outside [1, " + std::to_string(cfg.K) + "]");
    }
  }
  if (cfg.init_schedule) {
    if (cfg.init_schedule->period() != cfg.K ||
        cfg.init_schedule->sensors() != sys.sensors()) {
      throw DimensionError("initial schedule shape does not match K x M");
    }
  }
}

Schedule DefaultInitSchedule(const SystemModel& sys, int K,
                             const std::vector<int>& eta) {
  const int M = static_cast<int>(sys.sensors());
  if (K < 1) throw InputError("period K must be >= 1");
  if (static_cast<int>(eta.size()) != M) {
    throw DimensionError("need one frequency bound per sensor");
  }
  int requested = 0;
  for (int e : eta) {
    if (e < 0 || e > K) throw InputError("frequency bound outside [0, K]");
    requested += e;
  }
  if (requested == 0) throw InputError("initial schedule has no activations");

  Schedule sched(K, M);
  for (int m = 0; m < M; ++m) {
    if (eta[m] == 0) continue;
    const int stride = (K + eta[m] - 1) / eta[m];
    for (int a = 0; a < eta[m]; ++a) {
      int k = (m + a * stride) % K;
      while (sched.active(k, m)) k = (k + 1) % K;
      sched.set(k, m, true);
    }
  }

  if (requested >= K) {
    for (int k = 0; k < K; ++k) {
      if (sched.ActiveAt(k) > 0) continue;
      bool moved = false;
      for (int donor = 0; donor < K && !moved; ++donor) {
        if (sched.ActiveAt(donor) < 2) continue;
        for (int m = 0; m < M && !moved; ++m) {
          if (sched.active(donor, m) && !sched.active(k, m)) {
            sched.set(donor, m, false);
            sched.set(k, m, true);
            moved = true;
          }
        }
      }
    }
  }

  if (!PeriodicDetectable(sys, sched)) {
    throw InitializationError(
        "default initial schedule is not periodically detectable; supply "
        "init_schedule explicitly");
  }
  return sched;
}

namespace {

std::vector<Matrix> Combine(const std::vector<Matrix>& x, double a,
                            const std::vector<Matrix>& y) {
  std::vector<Matrix> out(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) out[k] = x[k] + a * y[k];
  return out;
}

double DistanceSum(const std::vector<Matrix>& x, const std::vector<Matrix>& y) {
  double sum = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) sum += (x[k] - y[k]).norm();
  return sum;
}

int Cardinality(const std::vector<Matrix>& G) {
  int count = 0;
  for (const auto& Gk : G) {
    for (Eigen::Index m = 0; m < Gk.cols(); ++m) {
      if (Gk.col(m).norm() > 0.0) ++count;
    }
  }
  return count;
}

}  // namespace

SolveReport RunAdmm(const SystemModel& sys, const AdmmConfig& cfg) {
  return RunAdmm(sys, cfg, AdmmObserver{});
}

SolveReport RunAdmm(const SystemModel& sys, const AdmmConfig& cfg,
                    const AdmmObserver& observer) {
  const auto start = std::chrono::steady_clock::now();
  ValidateConfig(cfg, sys);
  const AssumptionReport assumptions = ValidateAssumptions(sys);
  if (!assumptions.ok()) {
    std::string msg = "system violates standing assumptions:";
    for (const auto& f : assumptions.failures) msg += " " + f + ";";
    throw InputError(msg);
  }

  const int K = cfg.K;
  const Eigen::Index n = sys.states();
  const Eigen::Index M = sys.sensors();
  const Schedule init = cfg.init_schedule
                            ? *cfg.init_schedule
                            : DefaultInitSchedule(sys, K, cfg.eta);

  AdmmState state;
  state.L = InitGainsForSchedule(sys, init).L;
  state.G.assign(K, Matrix::Zero(n, M));
  state.Lambda.assign(K, Matrix::Zero(n, M));

  SolveReport report;
  report.gamma = cfg.gamma;
  report.eta = cfg.eta;

  LStepOptions lopts;
  lopts.armijo_alpha = cfg.armijo_alpha;
  lopts.armijo_beta = cfg.armijo_beta;
  lopts.max_iters = cfg.inner_max_iters;

  std::vector<Matrix> best_G;
  std::vector<Matrix> best_L;
  double best_merit = std::numeric_limits<double>::infinity();

  for (int it = 1; it <= cfg.max_iters; ++it) {
    state.iteration = it;
    const double prev_primal = DistanceSum(state.L, state.G);
    lopts.tol = std::clamp(cfg.inner_tol_factor * prev_primal,
                           cfg.inner_tol_floor, cfg.inner_tol_cap);

    LStepProblem lprob{sys, Combine(state.G, -1.0 / cfg.rho, state.Lambda),
                       cfg.rho};
    const LStepResult lres =
        SolveLStep(lprob, PeriodicGains{state.L}, lopts);
    state.L = lres.gains.L;
    if (lres.line_search_failed) report.line_search_failed = true;

    GStepProblem gprob{Combine(state.L, 1.0 / cfg.rho, state.Lambda),
                       cfg.gamma, cfg.rho, cfg.eta};
    std::vector<Matrix> G_new = GStep(gprob);
    for (int k = 0; k < K; ++k) {
      state.Lambda[k] += cfg.rho * (state.L[k] - G_new[k]);
    }

    IterationRecord rec;
    rec.iteration = it;
    rec.primal_residual = DistanceSum(state.L, G_new);
    rec.g_change = DistanceSum(G_new, state.G);
    rec.phi = lres.phi;
    rec.cardinality = Cardinality(G_new);
    rec.inner_iterations = lres.iterations;
    rec.inner_grad_norm = lres.grad_norm;
    state.G = std::move(G_new);
    report.trace.push_back(rec);
    if (observer) observer(state, rec);
    spdlog::debug("admm it={} r_p={:.3e} dG={:.3e} phi={:.6g} card={}", it,
                  rec.primal_residual, rec.g_change, rec.phi, rec.cardinality);

    double penalty = 0.0;
    for (int k = 0; k < K; ++k) {
      penalty += (state.L[k] - lprob.U[k]).squaredNorm();
    }
    const double merit =
        lres.phi - 0.5 * cfg.rho * penalty + cfg.gamma * rec.cardinality;
    if (merit < best_merit) {
      best_merit = merit;
      best_G = state.G;
      best_L = state.L;
    }

    report.iterations = it;
    if (rec.primal_residual <= cfg.eps && rec.g_change <= cfg.eps) {
      report.converged = true;
      break;
    }
  }

  if (report.converged || best_G.empty()) {
    report.raw_gains.L = state.L;
    report.sparse_gains.L = state.G;
  } else {
    report.raw_gains.L = best_L;
    report.sparse_gains.L = best_G;
  }
  report.schedule = ScheduleFromGains(report.sparse_gains, 0.0);
  try {
    report.J_raw = ObjectiveJ(sys, report.raw_gains);
  } catch (const InstabilityError&) {
    report.J_raw = std::numeric_limits<double>::infinity();
  }
  try {
    ScheduleEvaluation eval = EvaluateSchedule(sys, report.schedule);
    report.J_polished = eval.J;
    report.polished_gains = std::move(eval.gains);
    report.polished = true;
  } catch (const std::exception& e) {
    report.J_polished = std::numeric_limits<double>::infinity();
    report.polish_error = e.what();
  }
  report.wall_time_s = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - start)
                           .count();
  return report;
}

std::vector<SweepCell> Sweep(const SystemModel& sys, const AdmmConfig& base,
                             const std::vector<double>& gamma_list,
                             const std::vector<int>& eta_list, int jobs) {
  std::vector<SweepCell> cells;
  for (double g : gamma_list) {
    for (int e : eta_list) cells.push_back(SweepCell{g, e, std::nullopt, {}});
  }
  ParallelFor(cells.size(), jobs, [&](std::size_t i) {
    AdmmConfig cfg = base;
    cfg.gamma = cells[i].gamma;
    cfg.eta.assign(sys.sensors(), cells[i].eta);
    cfg.init_schedule.reset();
    try {
      cells[i].report = RunAdmm(sys, cfg);
    } catch (const std::exception& e) {
      cells[i].error = e.what();
    }
  });

  // Soft check: more activations should not increase polished J.
  for (std::size_t i = 0; i < cells.size(); ++i) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (!cells[i].report || !cells[j].report) continue;
      const auto& a = *cells[i].report;
      const auto& b = *cells[j].report;
      if (a.schedule.Total() > b.schedule.Total() &&
          a.J_polished > b.J_polished * (1.0 + 1e-9)) {
        spdlog::warn(
            "tradeoff not monotone: gamma={} eta={} uses {} activations with "
            "J={:.6g}, gamma={} eta={} uses {} with J={:.6g}",
            cells[i].gamma, cells[i].eta, a.schedule.Total(), a.J_polished,
            cells[j].gamma, cells[j].eta, b.schedule.Total(), b.J_polished);
      }
    }
  }
  return cells;
}

}  // namespace persched
