#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sosync/errors.hpp"
#include "sosync/rng.hpp"
#include "sosync/tolerances.hpp"

namespace sosync {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Skew-symmetric matrix with X^T == -X holding exactly (bitwise).
// All arithmetic provided here preserves exact antisymmetry, so results can
// be fed back without re-checking.
class SkewMatrix {
 public:
  // Validates exact antisymmetry; throws DomainError otherwise.
  explicit SkewMatrix(Matrix m);

  static SkewMatrix zero(int n);

  const Matrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }
  double norm() const { return m_.norm(); }

  SkewMatrix operator+(const SkewMatrix& o) const { return SkewMatrix(Matrix(m_ + o.m_), Trusted{}); }
  SkewMatrix operator-(const SkewMatrix& o) const { return SkewMatrix(Matrix(m_ - o.m_), Trusted{}); }
  SkewMatrix operator*(double s) const { return SkewMatrix(Matrix(m_ * s), Trusted{}); }
  SkewMatrix operator-() const { return SkewMatrix(Matrix(-m_), Trusted{}); }

 private:
  struct Trusted {};
  SkewMatrix(Matrix m, Trusted) : m_(std::move(m)) {}
  Matrix m_;

  friend SkewMatrix skew_part(const Matrix&);
};

inline SkewMatrix operator*(double s, const SkewMatrix& x) { return x * s; }

// Element of SO(n): Q^T Q = I within 1e-10 (Frobenius) and det Q = +1.
class Rotation {
 public:
  static Rotation identity(int n);

  // Validates the invariants; throws DomainError if violated.
  static Rotation from_matrix(const Matrix& q);

  // No validation. For compositions of already-valid rotations.
  static Rotation trusted(Matrix q) { return Rotation(std::move(q)); }

  const Matrix& matrix() const { return m_; }
  int dim() const { return static_cast<int>(m_.rows()); }

  Rotation transposed() const { return Rotation(m_.transpose()); }
  Rotation operator*(const Rotation& o) const { return Rotation(m_ * o.m_); }
  Vector operator*(const Vector& v) const { return m_ * v; }

  // ||Q^T Q - I||_F
  double orthogonality_residual() const;
  bool is_valid(double tolerance = tol::invariant) const;

 private:
  explicit Rotation(Matrix m) : m_(std::move(m)) {}
  Matrix m_;
};

// (M - M^T)/2. Throws DimensionError for non-square input.
SkewMatrix skew_part(const Matrix& m);

// Matrix exponential of a skew matrix. Closed form for n = 2, 3
// (Rodrigues), scaling-and-squaring Pade otherwise. Output is a valid
// rotation to construction accuracy.
Rotation exp_skew(const SkewMatrix& x);

// Nearest rotation in Frobenius norm (orthogonal Procrustes): SVD with the
// smallest singular direction sign-flipped when the orthogonal factor has
// determinant -1. Throws SingularityError when M is numerically
// rank-deficient (the minimizer is not unique).
Rotation project_to_rotation(const Matrix& m);

// Orthonormal basis of so(n): (E_ab - E_ba)/sqrt(2) for a < b in
// lexicographic order; n(n-1)/2 elements, orthonormal under tr(A^T B).
std::vector<SkewMatrix> so_basis(int n);

// Rotation by `angle` about unit axis (Rodrigues), counter-clockwise about
// the axis:  rotation_about_axis(e_z, t) = [[cos t, -sin t, 0],
// [sin t, cos t, 0], [0, 0, 1]].  Fixes the axis.
Rotation rotation_about_axis(const Vector& axis, double angle);

// Haar-distributed rotation: QR-style orthonormalization of a Gaussian
// matrix with sign correction on the R diagonal, then a last-column flip
// when det = -1.
Rotation random_rotation(int n, Rng& rng);
Rotation random_rotation(int n, std::uint64_t seed);

// Random skew matrix with the given Frobenius norm (direction uniform on
// the unit sphere of so(n)).
SkewMatrix random_skew(int n, double frobenius_norm, Rng& rng);

// Uniform direction on S^{n-1}.
Vector random_unit_vector(int n, Rng& rng);

}  // namespace sosync
