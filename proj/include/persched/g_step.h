#pragma once

#include <vector>

#include "persched/linalg.h"

namespace persched {

/// The m-th columns of S_0 … S_{K-1} and their 2-norms.
struct ColumnStack {
  std::vector<Vector> columns;
  std::vector<double> norms;

  static ColumnStack FromSequence(const std::vector<Matrix>& S, int m);
  int period() const { return static_cast<int>(columns.size()); }
};

/// Columns with norm at or below this are structurally zero.
inline constexpr double kStructuralZero = 1e-14;

/// κ: number of columns with norm above kStructuralZero.
int StructuralCardinality(const ColumnStack& stack);

/// Time indices ordered by decreasing norm, ties by increasing index.
std::vector<int> RankColumns(const ColumnStack& stack);

/// Keeps the min(q, κ) largest columns verbatim and zeroes the rest.
/// Throws InputError unless 0 <= q <= K.
std::vector<Vector> SolveEqualityConstrained(const ColumnStack& stack, int q);

struct ColumnSelection {
  int q_star = 0;
  std::vector<Vector> solution;
};

/// q* is the largest q in {0, …, min(eta, κ)} with γ <= (ρ/2)‖[S]_q‖², where
/// [S]_q is the q-th largest column; the boundary case keeps the column.
ColumnSelection SelectByGamma(const ColumnStack& stack, double gamma,
                              double rho, int eta);

struct GStepProblem {
  std::vector<Matrix> S;  // S_k = L_k + Λ_k / ρ
  double gamma = 0.0;
  double rho = 1.0;
  std::vector<int> eta;   // one bound per sensor
};

/// Minimizes γ Σ_k card(G_k) + (ρ/2) Σ_k ‖G_k - S_k‖²_F subject to each
/// sensor being active at most eta[m] times, one sensor at a time.
std::vector<Matrix> GStep(const GStepProblem& prob);

/// The G-step objective ψ at G, counting columns with nonzero norm.
double GStepObjective(const GStepProblem& prob, const std::vector<Matrix>& G);

}  // namespace persched
