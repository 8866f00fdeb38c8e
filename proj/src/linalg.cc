#include "persched/linalg.h"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

namespace persched {

void RequireSquare(const Matrix& X, const char* what) {
  if (X.rows() != X.cols()) {
    throw DimensionError(std::string(what) + " must be square, got " +
                         std::to_string(X.rows()) + "x" +
                         std::to_string(X.cols()));
  }
}

void RequireFinite(const Matrix& X, const char* what) {
  if (!X.allFinite()) {
    throw InputError(std::string(what) + " has non-finite entries");
  }
}

namespace {

constexpr int kPadeDegree = 6;

bool IsSymmetric(const Matrix& X, double rel_tol) {
  return (X - X.transpose()).norm() <= rel_tol * std::max(1.0, X.norm());
}

}  // namespace

Matrix MatrixExponential(const Matrix& X) {
  RequireSquare(X, "matrix_exponential argument");
  RequireFinite(X, "matrix_exponential argument");
  const Eigen::Index n = X.rows();
  if (n == 0) return X;

  const double norm1 = X.cwiseAbs().colwise().sum().maxCoeff();
  int squarings = 0;
  if (norm1 > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm1 / 0.5)));
  }
  const Matrix scaled = X / std::ldexp(1.0, squarings);

  // c_{j+1} = c_j (q - j) / ((2q - j)(j + 1)), c_0 = 1.
  double c[kPadeDegree + 1];
  c[0] = 1.0;
  for (int j = 0; j < kPadeDegree; ++j) {
    c[j + 1] = c[j] * (kPadeDegree - j) / ((2.0 * kPadeDegree - j) * (j + 1));
  }

  const Matrix I = Matrix::Identity(n, n);
  Matrix power = I;
  Matrix numer = c[0] * I;
  Matrix denom = c[0] * I;
  for (int j = 1; j <= kPadeDegree; ++j) {
    power = power * scaled;
    numer += c[j] * power;
    denom += ((j % 2 == 0) ? c[j] : -c[j]) * power;
  }
  Matrix result = denom.partialPivLu().solve(numer);
  for (int s = 0; s < squarings; ++s) {
    result = result * result;
  }
  return result;
}

double SpectralRadius(const Matrix& X) {
  RequireSquare(X, "spectral_radius argument");
  if (X.rows() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> solver(X, /*computeEigenvectors=*/false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

Matrix SolveDiscreteLyapunov(const Matrix& F, const Matrix& W,
                             const LyapunovOptions& options) {
  RequireSquare(F, "Lyapunov transition F");
  RequireSquare(W, "Lyapunov forcing W");
  if (F.rows() != W.rows()) {
    throw DimensionError("Lyapunov operands F and W differ in size");
  }
  RequireFinite(F, "Lyapunov transition F");
  RequireFinite(W, "Lyapunov forcing W");
  if (!IsSymmetric(W, 1e-9)) {
    throw InputError("Lyapunov forcing W is not symmetric");
  }
  const Eigen::Index n = F.rows();
  if (n == 0) return W;
  const double radius = SpectralRadius(F);
  if (!(radius < 1.0)) {
    throw InstabilityError("Lyapunov transition has spectral radius " +
                           std::to_string(radius) + " >= 1");
  }

  LyapunovMethod method = options.method;
  if (method == LyapunovMethod::kAuto) {
    method = n <= options.kronecker_max_dim ? LyapunovMethod::kKronecker
                                            : LyapunovMethod::kDoubling;
  }

  Matrix X;
  if (method == LyapunovMethod::kKronecker) {
    const Eigen::Index nn = n * n;
    Matrix system = Matrix::Identity(nn, nn);
    // vec(F X Fᵀ) = (F ⊗ F) vec(X) with column-major vec.
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        system.block(i * n, j * n, n, n) -= F(i, j) * F;
      }
    }
    const Vector w = Eigen::Map<const Vector>(W.data(), nn);
    const Vector x = system.partialPivLu().solve(w);
    X = Eigen::Map<const Matrix>(x.data(), n, n);
  } else {
    X = W;
    Matrix power = F;
    int iter = 0;
    for (; iter < options.doubling_max_iters; ++iter) {
      const Matrix delta = power * X * power.transpose();
      X += delta;
      if (delta.norm() <= options.doubling_tol * std::max(1.0, X.norm())) {
        break;
      }
      power = power * power;
    }
    if (iter == options.doubling_max_iters) {
      throw ConvergenceError("Lyapunov doubling did not converge");
    }
  }
  return Symmetrize(X);
}

Matrix SolveGainSylvester(const Matrix& V, const Matrix& D, double rho,
                          const Matrix& rhs) {
  RequireSquare(V, "Sylvester factor V");
  RequireSquare(D, "Sylvester factor D");
  if (rhs.rows() != V.rows() || rhs.cols() != D.rows()) {
    throw DimensionError("Sylvester right-hand side has the wrong shape");
  }
  if (!(rho >= 0.0)) throw InputError("Sylvester weight rho must be >= 0");

  Eigen::SelfAdjointEigenSolver<Matrix> v_eig(Symmetrize(V));
  Eigen::SelfAdjointEigenSolver<Matrix> d_eig(Symmetrize(D));
  const Vector& lv = v_eig.eigenvalues();
  const Vector& ld = d_eig.eigenvalues();
  if (lv.size() > 0 && !(lv.minCoeff() > 1e-14 * std::max(1.0, lv.maxCoeff()))) {
    throw InputError("Sylvester factor V is not positive definite");
  }
  if (ld.size() > 0 && !(ld.minCoeff() > 1e-14 * std::max(1.0, ld.maxCoeff()))) {
    throw InputError("Sylvester factor D is not positive definite");
  }

  Matrix rotated = v_eig.eigenvectors().transpose() * rhs * d_eig.eigenvectors();
  for (Eigen::Index j = 0; j < rotated.cols(); ++j) {
    for (Eigen::Index i = 0; i < rotated.rows(); ++i) {
      rotated(i, j) /= 2.0 * lv(i) * ld(j) + rho;
    }
  }
  return v_eig.eigenvectors() * rotated * d_eig.eigenvectors().transpose();
}

Matrix PredictorGain(const Matrix& A, const Matrix& C, const Matrix& P,
                     const Matrix& R) {
  if (C.rows() == 0) return Matrix::Zero(A.rows(), 0);
  const Matrix S = C * P * C.transpose() + R;
  // (A P Cᵀ) S⁻¹ = (S⁻¹ C P Aᵀ)ᵀ since S is symmetric.
  return S.ldlt().solve(C * P * A.transpose()).transpose();
}

Matrix SolveDare(const Matrix& A, const Matrix& C, const Matrix& Q,
                 const Matrix& R, const DareOptions& options) {
  RequireSquare(A, "DARE state matrix A");
  RequireSquare(Q, "DARE forcing Q");
  RequireSquare(R, "DARE noise R");
  if (C.cols() != A.rows() || Q.rows() != A.rows() || R.rows() != C.rows()) {
    throw DimensionError("DARE operands have inconsistent shapes");
  }
  Eigen::LLT<Matrix> r_llt(Symmetrize(R));
  if (r_llt.info() != Eigen::Success) {
    throw InputError("DARE measurement noise R is not positive definite");
  }

  Matrix P = Q;
  for (int iter = 0; iter < options.max_iters; ++iter) {
    const Matrix gain = PredictorGain(A, C, P, R);
    Matrix next = Q + A * P * A.transpose() - gain * (C * P * A.transpose());
    next = Symmetrize(next);
    const double change = (next - P).norm();
    const double scale = std::max(1.0, P.norm());
    P = std::move(next);
    if (!P.allFinite()) break;
    if (change <= options.tol * scale) {
      const Matrix closed = A - PredictorGain(A, C, P, R) * C;
      if (SpectralRadius(closed) >= 1.0) {
        throw ConvergenceError("DARE iteration converged to a non-stabilizing solution");
      }
      return P;
    }
  }
  throw ConvergenceError("DARE iteration did not converge within " +
                         std::to_string(options.max_iters) + " iterations");
}

}  // namespace persched
