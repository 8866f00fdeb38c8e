#include "persched/g_step.h"

#include <algorithm>
#include <numeric>
#include <string>

namespace persched {

ColumnStack ColumnStack::FromSequence(const std::vector<Matrix>& S, int m) {
  ColumnStack stack;
  stack.columns.reserve(S.size());
  stack.norms.reserve(S.size());
  for (const auto& Sk : S) {
    if (m < 0 || m >= Sk.cols()) throw DimensionError("sensor index out of range");
    stack.columns.push_back(Sk.col(m));
    stack.norms.push_back(stack.columns.back().norm());
  }
  return stack;
}

int StructuralCardinality(const ColumnStack& stack) {
  return static_cast<int>(std::count_if(
      stack.norms.begin(), stack.norms.end(),
      [](double n) { return n > kStructuralZero; }));
}

std::vector<int> RankColumns(const ColumnStack& stack) {
  std::vector<int> order(stack.period());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return stack.norms[a] > stack.norms[b];
  });
  return order;
}

std::vector<Vector> SolveEqualityConstrained(const ColumnStack& stack, int q) {
  const int K = stack.period();
  if (q < 0 || q > K) {
    throw InputError("support size " + std::to_string(q) + " outside [0, " +
                     std::to_string(K) + "]");
  }
  std::vector<Vector> out;
  out.reserve(K);
  for (const auto& c : stack.columns) out.push_back(Vector::Zero(c.size()));
  const int keep = std::min(q, StructuralCardinality(stack));
  const auto order = RankColumns(stack);
  for (int i = 0; i < keep; ++i) out[order[i]] = stack.columns[order[i]];
  return out;
}

ColumnSelection SelectByGamma(const ColumnStack& stack, double gamma,
                              double rho, int eta) {
  if (!(gamma >= 0.0)) throw InputError("gamma must be >= 0");
  if (!(rho > 0.0)) throw InputError("rho must be > 0");
  const int limit = std::min(std::max(eta, 0), StructuralCardinality(stack));
  const auto order = RankColumns(stack);
  ColumnSelection sel;
  for (int q = 1; q <= limit; ++q) {
    const double norm = stack.norms[order[q - 1]];
    if (gamma <= 0.5 * rho * norm * norm) {
      sel.q_star = q;
    } else {
      break;
    }
  }
  sel.solution = SolveEqualityConstrained(stack, sel.q_star);
  return sel;
}

std::vector<Matrix> GStep(const GStepProblem& prob) {
  const int K = static_cast<int>(prob.S.size());
  if (K == 0) return {};
  const Eigen::Index n = prob.S[0].rows();
  const Eigen::Index M = prob.S[0].cols();
  if (static_cast<Eigen::Index>(prob.eta.size()) != M) {
    throw DimensionError("need one frequency bound per sensor");
  }
  for (int e : prob.eta) {
    if (e < 0 || e > K) throw InputError("frequency bound outside [0, K]");
  }
  std::vector<Matrix> G(K, Matrix::Zero(n, M));
  for (Eigen::Index m = 0; m < M; ++m) {
    const auto stack = ColumnStack::FromSequence(prob.S, static_cast<int>(m));
    const auto sel = SelectByGamma(stack, prob.gamma, prob.rho, prob.eta[m]);
    for (int k = 0; k < K; ++k) G[k].col(m) = sel.solution[k];
  }
  return G;
}

double GStepObjective(const GStepProblem& prob, const std::vector<Matrix>& G) {
  double value = 0.0;
  for (std::size_t k = 0; k < G.size(); ++k) {
    for (Eigen::Index m = 0; m < G[k].cols(); ++m) {
      if (G[k].col(m).norm() > 0.0) value += prob.gamma;
    }
    value += 0.5 * prob.rho * (G[k] - prob.S[k]).squaredNorm();
  }
  return value;
}

}  // namespace persched
