#include "persched/system_model.h"

#include <algorithm>
#include <complex>
#include <set>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace persched {

namespace {

using ComplexMatrix = Eigen::MatrixXcd;

// Eigenvalues on or outside the unit circle, with a small inward margin so
// that marginal modes are tested too.
std::vector<std::complex<double>> UnstableEigenvalues(const Matrix& A) {
  std::vector<std::complex<double>> out;
  if (A.rows() == 0) return out;
  Eigen::EigenSolver<Matrix> solver(A, false);
  for (Eigen::Index i = 0; i < solver.eigenvalues().size(); ++i) {
    const auto lambda = solver.eigenvalues()(i);
    if (std::abs(lambda) >= 1.0 - 1e-12) out.push_back(lambda);
  }
  return out;
}

Eigen::Index NumericalRank(const ComplexMatrix& X) {
  Eigen::JacobiSVD<ComplexMatrix> svd(X);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return 0;
  const double tol = 1e-9 * std::max(1.0, s(0));
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > tol) ++rank;
  }
  return rank;
}

bool IsStabilizable(const Matrix& A, const Matrix& input) {
  const Eigen::Index n = A.rows();
  for (const auto& lambda : UnstableEigenvalues(A)) {
    ComplexMatrix pencil(n, n + input.cols());
    pencil.leftCols(n) = A.cast<std::complex<double>>() -
                         lambda * ComplexMatrix::Identity(n, n);
    pencil.rightCols(input.cols()) = input.cast<std::complex<double>>();
    if (NumericalRank(pencil) < n) return false;
  }
  return true;
}

double MinEigenvalue(const Matrix& X) {
  if (X.rows() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Matrix> solver(Symmetrize(X), Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

}  // namespace

bool IsDetectable(const Matrix& A, const Matrix& C) {
  const Eigen::Index n = A.rows();
  for (const auto& lambda : UnstableEigenvalues(A)) {
    ComplexMatrix pencil(n + C.rows(), n);
    pencil.topRows(n) = A.cast<std::complex<double>>() -
                        lambda * ComplexMatrix::Identity(n, n);
    pencil.bottomRows(C.rows()) = C.cast<std::complex<double>>();
    if (NumericalRank(pencil) < n) return false;
  }
  return true;
}

SystemModel MakeSystem(Matrix A, Matrix B, Matrix C, Matrix Q, Matrix R) {
  RequireSquare(A, "A");
  RequireSquare(Q, "Q");
  RequireSquare(R, "R");
  const Eigen::Index n = A.rows();
  if (B.rows() != n) throw DimensionError("B must have as many rows as A");
  if (C.cols() != n) throw DimensionError("C must have as many columns as A");
  if (Q.rows() != B.cols()) throw DimensionError("Q must be p×p where B is N×p");
  if (R.rows() != C.rows()) throw DimensionError("R must be M×M where C is M×N");
  for (const auto* m : {&A, &B, &C, &Q, &R}) RequireFinite(*m, "system matrix");
  if ((Q - Q.transpose()).norm() > 1e-9 * std::max(1.0, Q.norm())) {
    throw InputError("Q is not symmetric");
  }
  if ((R - R.transpose()).norm() > 1e-9 * std::max(1.0, R.norm())) {
    throw InputError("R is not symmetric");
  }
  return SystemModel{std::move(A), std::move(B), std::move(C), std::move(Q),
                     std::move(R)};
}

void ValidateGeometry(const FieldGeometry& geom) {
  if (geom.ell_h < 0 || geom.ell_v < 0) {
    throw InputError("lattice extents must be non-negative");
  }
  if (!(geom.h > 0.0)) throw InputError("lattice spacing h must be positive");
  if (!(geom.T >= 0.0)) throw InputError("sampling interval T must be >= 0");
  std::set<int> seen;
  for (int pos : geom.sensor_positions) {
    if (pos < 0 || pos >= geom.nodes()) {
      throw InputError("sensor position " + std::to_string(pos) +
                       " lies outside the lattice");
    }
    if (!seen.insert(pos).second) {
      throw InputError("duplicate sensor position " + std::to_string(pos));
    }
  }
}

Matrix BuildLaplacian(const FieldGeometry& geom) {
  ValidateGeometry(geom);
  const int n = geom.nodes();
  const double scale = 1.0 / (geom.h * geom.h);
  Matrix lap = Matrix::Zero(n, n);
  for (int i = 0; i < geom.rows(); ++i) {
    for (int j = 0; j < geom.cols(); ++j) {
      const int node = geom.Index(i, j);
      lap(node, node) = -4.0 * scale;
      const int di[] = {-1, 1, 0, 0};
      const int dj[] = {0, 0, -1, 1};
      for (int d = 0; d < 4; ++d) {
        const int ni = i + di[d];
        const int nj = j + dj[d];
        if (ni < 0 || nj < 0 || ni >= geom.rows() || nj >= geom.cols()) continue;
        lap(node, geom.Index(ni, nj)) = scale;
      }
    }
  }
  return lap;
}

SystemModel BuildDiffusionSystem(const FieldGeometry& geom, double q_scale,
                                 double r_scale) {
  if (!(q_scale > 0.0) || !(r_scale > 0.0)) {
    throw InputError("noise scales must be positive");
  }
  const Matrix lap = BuildLaplacian(geom);
  const int n = geom.nodes();
  const int m = static_cast<int>(geom.sensor_positions.size());
  Matrix C = Matrix::Zero(m, n);
  for (int s = 0; s < m; ++s) C(s, geom.sensor_positions[s]) = 1.0;
  return MakeSystem(MatrixExponential(lap * geom.T), Matrix::Identity(n, n),
                    std::move(C), q_scale * Matrix::Identity(n, n),
                    r_scale * Matrix::Identity(m, m));
}

FieldGeometry DefaultFieldGeometry() {
  FieldGeometry geom;
  geom.ell_h = 4;
  geom.ell_v = 4;
  geom.h = 1.0;
  geom.T = 0.5;
  const int layout[10][2] = {{0, 0}, {0, 3}, {1, 1}, {1, 4}, {2, 0},
                             {1, 2}, {3, 2}, {3, 4}, {4, 1}, {4, 3}};
  for (const auto& ij : layout) {
    geom.sensor_positions.push_back(geom.Index(ij[0], ij[1]));
  }
  return geom;
}

AssumptionReport ValidateAssumptions(const SystemModel& sys) {
  AssumptionReport report;
  {
    Eigen::LLT<Matrix> llt(Symmetrize(sys.R));
    report.r_positive_definite =
        sys.R.rows() == 0 || llt.info() == Eigen::Success;
    if (report.r_positive_definite && sys.R.rows() > 0) {
      // LLT accepts some numerically singular matrices; require a margin.
      Eigen::SelfAdjointEigenSolver<Matrix> eig(Symmetrize(sys.R),
                                                Eigen::EigenvaluesOnly);
      report.r_positive_definite =
          eig.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff());
    }
  }
  if (!report.r_positive_definite) {
    report.failures.push_back("R is not symmetric positive definite");
  }
  report.q_positive_semidefinite = MinEigenvalue(sys.Q) >= -1e-12 * std::max(1.0, sys.Q.norm());
  if (!report.q_positive_semidefinite) {
    report.failures.push_back("Q is not positive semidefinite");
  }
  report.detectable = IsDetectable(sys.A, sys.C);
  if (!report.detectable) {
    report.failures.push_back("(A, C) is not detectable");
  }
  report.stabilizable = IsStabilizable(sys.A, sys.ProcessNoise());
  if (!report.stabilizable) {
    report.failures.push_back("(A, Sigma) is not stabilizable");
  }
  return report;
}

}  // namespace persched
