#pragma once

#include <string>
#include <vector>

#include "persched/linalg.h"

namespace persched {

/// Discrete-time plant x_{k+1} = A x_k + B w_k, y_k = C x_k + v_k with
/// w ~ N(0, Q), v ~ N(0, R). Row m of C is the measurement of sensor m.
struct SystemModel {
  Matrix A;  // N×N
  Matrix B;  // N×p
  Matrix C;  // M×N
  Matrix Q;  // p×p
  Matrix R;  // M×M

  Eigen::Index states() const { return A.rows(); }
  Eigen::Index sensors() const { return C.rows(); }
  Eigen::Index noise_inputs() const { return B.cols(); }

  /// B Q Bᵀ, the process-noise covariance seen by the state.
  Matrix ProcessNoise() const { return B * Q * B.transpose(); }
};

/// Checks shapes, finiteness and symmetry of Q and R; throws DimensionError
/// or InputError. Definiteness and detectability are left to
/// ValidateAssumptions so that degenerate plants can still be reported on.
SystemModel MakeSystem(Matrix A, Matrix B, Matrix C, Matrix Q, Matrix R);

/// Rectangular lattice of (ell_h + 1) × (ell_v + 1) interior field points.
struct FieldGeometry {
  int ell_h = 4;
  int ell_v = 4;
  double h = 1.0;
  double T = 0.5;
  /// Row-major lattice index i * (ell_v + 1) + j of each sensor.
  std::vector<int> sensor_positions;

  int rows() const { return ell_h + 1; }
  int cols() const { return ell_v + 1; }
  int nodes() const { return rows() * cols(); }
  int Index(int i, int j) const { return i * cols() + j; }
};

/// Throws InputError if the lattice is empty, spacing or sampling interval
/// are invalid, or a sensor lies outside the lattice or is duplicated.
void ValidateGeometry(const FieldGeometry& geom);

/// 5-point Laplacian on the lattice with zero Dirichlet boundary, scaled by
/// 1/h².
Matrix BuildLaplacian(const FieldGeometry& geom);

/// A = exp(A_Δ T), B = I, Q = q_scale I, R = r_scale I, and one C row per
/// sensor selecting its lattice point.
SystemModel BuildDiffusionSystem(const FieldGeometry& geom, double q_scale,
                                 double r_scale);

/// 5×5 lattice, T = 0.5 with a ten-sensor layout. The layout is illustrative:
/// sensors 6 and 7 (1-based) sit next to the centre, the rest are spread
/// towards the boundary.
FieldGeometry DefaultFieldGeometry();

struct AssumptionReport {
  bool r_positive_definite = false;
  bool q_positive_semidefinite = false;
  bool detectable = false;    // (A, C)
  bool stabilizable = false;  // (A, Σ) with ΣΣᵀ = B Q Bᵀ
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
};

/// PBH rank tests at every eigenvalue of A with modulus >= 1, plus
/// definiteness checks on Q and R.
AssumptionReport ValidateAssumptions(const SystemModel& sys);

/// PBH detectability of (A, C): rank [A - λI; C] = n for all |λ| >= 1.
bool IsDetectable(const Matrix& A, const Matrix& C);

}  // namespace persched
