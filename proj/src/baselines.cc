#include "persched/baselines.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <string>

#include "persched/parallel.h"

namespace persched {

namespace {

constexpr double kInfinity = std::numeric_limits<double>::infinity();

void RequireBounds(int K, const std::vector<int>& eta) {
  if (K < 1) throw InputError("period K must be >= 1");
  for (int e : eta) {
    if (e < 0 || e > K) throw InputError("frequency bound outside [0, K]");
  }
}

double Binomial(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double b = 1.0;
  for (int i = 1; i <= k; ++i) b = b * (n - k + i) / i;
  return std::round(b);
}

// ways[m][t]: masks of sensors m … M-1 with t activations in total.
std::vector<std::vector<double>> SuffixCounts(int K,
                                              const std::vector<int>& eta) {
  const int M = static_cast<int>(eta.size());
  const int max_total = K * M;
  std::vector<std::vector<double>> ways(M + 1,
                                        std::vector<double>(max_total + 1, 0));
  ways[M][0] = 1.0;
  for (int m = M - 1; m >= 0; --m) {
    for (int t = 0; t <= max_total; ++t) {
      double sum = 0.0;
      for (int c = 0; c <= std::min(eta[m], t); ++c) {
        sum += Binomial(K, c) * ways[m + 1][t - c];
      }
      ways[m][t] = sum;
    }
  }
  return ways;
}

double EvaluateOrInfinity(const SystemModel& sys, const Schedule& sched) {
  if (!PeriodicDetectable(sys, sched)) return kInfinity;
  try {
    return EvaluateSchedule(sys, sched).J;
  } catch (const InitializationError&) {
    return kInfinity;
  } catch (const InstabilityError&) {
    return kInfinity;
  }
}

}  // namespace

double CountFeasibleMasks(int K, const std::vector<int>& eta,
                          std::optional<int> total) {
  RequireBounds(K, eta);
  if (!total) {
    double count = 1.0;
    for (int e : eta) {
      double per = 0.0;
      for (int c = 0; c <= e; ++c) per += Binomial(K, c);
      count *= per;
    }
    return count;
  }
  const int M = static_cast<int>(eta.size());
  if (*total < 0 || *total > K * M) return 0.0;
  return SuffixCounts(K, eta)[0][*total];
}

std::vector<Schedule> EnumerateFeasibleMasks(int K,
                                             const std::vector<int>& eta,
                                             std::optional<int> total) {
  RequireBounds(K, eta);
  const int M = static_cast<int>(eta.size());
  std::vector<Schedule> out;
  Schedule current(K, M);
  std::vector<int> used(M, 0);
  // Remaining capacity of sensors after each slot, for pruning on `total`.
  const int slots = K * M;
  int active = 0;

  auto capacity_after = [&](int slot) {
    // Upper bound on activations still placeable in slots > slot.
    int cap = 0;
    const int k = slot / std::max(M, 1);
    const int m_pos = slot % std::max(M, 1);
    for (int m = 0; m < M; ++m) {
      const int later = (K - 1 - k) + (m > m_pos ? 1 : 0);
      cap += std::min(eta[m] - used[m], later);
    }
    return cap;
  };

  std::function<void(int)> visit = [&](int slot) {
    if (slot == slots) {
      if (!total || active == *total) out.push_back(current);
      return;
    }
    const int k = slot / M;
    const int m = slot % M;
    // Bit 0 first for lexicographic order.
    if (!total || active + capacity_after(slot) >= *total) visit(slot + 1);
    if (used[m] < eta[m] && (!total || active < *total)) {
      current.set(k, m, true);
      ++used[m];
      ++active;
      visit(slot + 1);
      --active;
      --used[m];
      current.set(k, m, false);
    }
  };
  if (M == 0) {
    if (!total || *total == 0) out.push_back(current);
    return out;
  }
  visit(0);
  return out;
}

OracleResult ExhaustiveSearch(const SystemModel& sys, int K,
                              const std::vector<int>& eta,
                              std::optional<int> total,
                              const OracleOptions& options) {
  if (static_cast<Eigen::Index>(eta.size()) != sys.sensors()) {
    throw DimensionError("need one frequency bound per sensor");
  }
  const double count = CountFeasibleMasks(K, eta, total);
  if (count > options.budget) {
    throw BudgetError("exhaustive search needs " + std::to_string(count) +
                          " evaluations, budget is " +
                          std::to_string(options.budget),
                      count);
  }
  const auto masks = EnumerateFeasibleMasks(K, eta, total);
  std::vector<double> J(masks.size(), kInfinity);
  ParallelFor(masks.size(), options.jobs,
              [&](std::size_t i) { J[i] = EvaluateOrInfinity(sys, masks[i]); });

  OracleResult result;
  result.evaluated = static_cast<int>(masks.size());
  result.best_J = kInfinity;
  std::size_t best = masks.size();
  for (std::size_t i = 0; i < masks.size(); ++i) {
    if (!std::isfinite(J[i])) {
      ++result.skipped;
      continue;
    }
    if (J[i] < result.best_J) {
      result.best_J = J[i];
      best = i;
    }
  }
  if (best == masks.size()) {
    throw ConvergenceError("no feasible schedule yields a stable estimator");
  }
  result.best = masks[best];
  return result;
}

Schedule SampleFeasibleMask(int K, const std::vector<int>& eta, int total,
                            std::mt19937_64& rng) {
  RequireBounds(K, eta);
  const int M = static_cast<int>(eta.size());
  if (total < 0 || total > K * M) {
    throw InputError("activation count " + std::to_string(total) +
                     " is infeasible");
  }
  const auto ways = SuffixCounts(K, eta);
  if (!(ways[0][total] > 0.0)) {
    throw InputError("no feasible mask has " + std::to_string(total) +
                     " activations");
  }
  Schedule sched(K, M);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<int> slots(K);
  int remaining = total;
  for (int m = 0; m < M; ++m) {
    // P(c_m = c) ∝ C(K, c) · ways[m+1][remaining - c].
    const double u = unit(rng) * ways[m][remaining];
    double acc = 0.0;
    int chosen = -1;
    int last_valid = -1;
    for (int c = 0; c <= std::min(eta[m], remaining); ++c) {
      const double w = Binomial(K, c) * ways[m + 1][remaining - c];
      if (w <= 0.0) continue;
      last_valid = c;
      acc += w;
      if (u < acc) {
        chosen = c;
        break;
      }
    }
    if (chosen < 0) chosen = last_valid;
    std::iota(slots.begin(), slots.end(), 0);
    // Partial Fisher-Yates: the first `chosen` entries form a uniform subset.
    for (int i = 0; i < chosen; ++i) {
      std::uniform_int_distribution<int> pick(i, K - 1);
      std::swap(slots[i], slots[pick(rng)]);
      sched.set(slots[i], m, true);
    }
    remaining -= chosen;
  }
  return sched;
}

BaselineResult RandomBaseline(const SystemModel& sys, int K,
                              const std::vector<int>& eta, int total,
                              int trials, std::uint64_t seed, int jobs) {
  if (static_cast<Eigen::Index>(eta.size()) != sys.sensors()) {
    throw DimensionError("need one frequency bound per sensor");
  }
  if (trials < 0) throw InputError("trials must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<Schedule> masks;
  masks.reserve(trials);
  for (int t = 0; t < trials; ++t) {
    masks.push_back(SampleFeasibleMask(K, eta, total, rng));
  }
  std::vector<double> J(masks.size(), kInfinity);
  ParallelFor(masks.size(), jobs,
              [&](std::size_t i) { J[i] = EvaluateOrInfinity(sys, masks[i]); });

  BaselineResult result;
  result.trial_J = J;
  std::vector<double> finite;
  for (double v : J) {
    if (std::isfinite(v)) {
      finite.push_back(v);
    } else {
      ++result.skipped;
    }
  }
  if (!finite.empty()) {
    result.mean_J =
        std::accumulate(finite.begin(), finite.end(), 0.0) / finite.size();
    double ss = 0.0;
    for (double v : finite) ss += (v - result.mean_J) * (v - result.mean_J);
    result.std_J =
        finite.size() > 1 ? std::sqrt(ss / (finite.size() - 1)) : 0.0;
  } else {
    result.mean_J = kInfinity;
  }
  return result;
}

}  // namespace persched
