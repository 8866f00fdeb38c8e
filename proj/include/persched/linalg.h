#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace persched {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Operand shapes do not fit the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An input violates a documented precondition (symmetry, definiteness, ...).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A closed loop or transition map is not Schur stable.
class InstabilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An iterative solver hit its iteration cap.
class ConvergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Throws DimensionError unless X is square.
void RequireSquare(const Matrix& X, const char* what);

/// Throws InputError if any entry of X is NaN or infinite.
void RequireFinite(const Matrix& X, const char* what);

/// (X + Xᵀ)/2.
inline Matrix Symmetrize(const Matrix& X) {
  return 0.5 * (X + X.transpose());
}

/// e^X by scaling and squaring with a degree-6 diagonal Padé approximant.
/// The argument is scaled by 2^-s so that its 1-norm is at most 1/2.
Matrix MatrixExponential(const Matrix& X);

/// max |λ_i(X)|.
double SpectralRadius(const Matrix& X);

/// Algorithm used by SolveDiscreteLyapunov.
enum class LyapunovMethod {
  kAuto,       ///< Kronecker when n <= kronecker_max_dim, doubling otherwise.
  kKronecker,  ///< Direct solve of (I - F⊗F) vec X = vec W.
  kDoubling,   ///< Smith doubling X ← X + F X Fᵀ, F ← F².
};

struct LyapunovOptions {
  LyapunovMethod method = LyapunovMethod::kAuto;
  int kronecker_max_dim = 64;
  double doubling_tol = 1e-15;
  int doubling_max_iters = 200;
};

/// Unique solution X of X = F X Fᵀ + W. Requires spectral_radius(F) < 1 and
/// W symmetric (to 1e-9 relative). The result is re-symmetrized.
Matrix SolveDiscreteLyapunov(const Matrix& F, const Matrix& W,
                             const LyapunovOptions& options = {});

/// Unique L solving 2 V L D + rho L = rhs for symmetric positive definite V
/// (n×n) and D (m×m), rho >= 0. Uses the eigenbases of V and D, in which the
/// operator is diagonal.
Matrix SolveGainSylvester(const Matrix& V, const Matrix& D, double rho,
                          const Matrix& rhs);

struct DareOptions {
  double tol = 1e-10;
  int max_iters = 10000;
};

/// Stabilizing solution of the filtering Riccati equation
///   P = Q + A P Aᵀ - A P Cᵀ (C P Cᵀ + R)⁻¹ C P Aᵀ
/// obtained by iterating the recursion from P₀ = Q.
Matrix SolveDare(const Matrix& A, const Matrix& C, const Matrix& Q,
                 const Matrix& R, const DareOptions& options = {});

/// A P Cᵀ (C P Cᵀ + R)⁻¹, the one-step predictor gain.
Matrix PredictorGain(const Matrix& A, const Matrix& C, const Matrix& P,
                     const Matrix& R);

}  // namespace persched
