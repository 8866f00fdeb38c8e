#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <vector>

#include "persched/periodic.h"

namespace persched {

/// Exhaustive search refused because the candidate count exceeds the budget.
class BudgetError : public std::runtime_error {
 public:
  BudgetError(const std::string& what, double candidates)
      : std::runtime_error(what), candidates_(candidates) {}
  double candidates() const { return candidates_; }

 private:
  double candidates_;
};

/// Number of K×M masks with at most eta[m] activations per sensor and, when
/// given, exactly `total` activations overall. Returned as a double so that
/// large counts do not overflow.
double CountFeasibleMasks(int K, const std::vector<int>& eta,
                          std::optional<int> total = std::nullopt);

/// All feasible masks in lexicographic order of their k-major, sensor-fast
/// bit strings.
std::vector<Schedule> EnumerateFeasibleMasks(
    int K, const std::vector<int>& eta, std::optional<int> total = std::nullopt);

struct OracleResult {
  Schedule best;
  double best_J = 0.0;
  int evaluated = 0;
  /// Candidates with an undetectable masked pair or a failed Riccati solve;
  /// they are ranked with J = +∞.
  int skipped = 0;
};

struct OracleOptions {
  double budget = 1e6;
  int jobs = 1;
};

/// Evaluates every feasible mask with EvaluateSchedule and returns the
/// minimizer, ties going to the lexicographically smaller mask. Throws
/// BudgetError before evaluating anything if the count exceeds the budget,
/// and ConvergenceError if no candidate yields a finite J.
OracleResult ExhaustiveSearch(const SystemModel& sys, int K,
                              const std::vector<int>& eta,
                              std::optional<int> total = std::nullopt,
                              const OracleOptions& options = {});

/// Draws a mask uniformly from the feasible masks with exactly `total`
/// activations. Throws InputError if none exists.
Schedule SampleFeasibleMask(int K, const std::vector<int>& eta, int total,
                            std::mt19937_64& rng);

struct BaselineResult {
  double mean_J = 0.0;
  double std_J = 0.0;  // sample standard deviation
  std::vector<double> trial_J;
  /// Draws whose estimator could not be formed; excluded from the statistics.
  int skipped = 0;
};

/// Monte-Carlo baseline over uniformly drawn feasible masks. Masks are drawn
/// sequentially from a mt19937_64 seeded with `seed`, then evaluated
/// (optionally in parallel), so results do not depend on `jobs`.
BaselineResult RandomBaseline(const SystemModel& sys, int K,
                              const std::vector<int>& eta, int total,
                              int trials, std::uint64_t seed, int jobs = 1);

}  // namespace persched
