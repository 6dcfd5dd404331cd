#include "sosync/liegroup.hpp"

#include <Eigen/SVD>
#include <cmath>
#include <unsupported/Eigen/MatrixFunctions>

namespace sosync {

SkewMatrix::SkewMatrix(Matrix m) : m_(std::move(m)) {
  if (m_.rows() != m_.cols()) throw DimensionError("SkewMatrix: matrix must be square");
  for (int i = 0; i < m_.rows(); ++i) {
    for (int j = 0; j <= i; ++j) {
      if (m_(i, j) != -m_(j, i))
        throw DomainError("SkewMatrix: X^T == -X must hold exactly; use skew_part to antisymmetrize");
    }
  }
}

SkewMatrix SkewMatrix::zero(int n) { return SkewMatrix(Matrix::Zero(n, n)); }

SkewMatrix skew_part(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("skew_part: matrix must be square");
  const int n = static_cast<int>(m.rows());
  Matrix x(n, n);
  for (int i = 0; i < n; ++i) {
    x(i, i) = 0.0;
    for (int j = i + 1; j < n; ++j) {
      const double v = 0.5 * (m(i, j) - m(j, i));
      x(i, j) = v;
      x(j, i) = -v;
    }
  }
  return SkewMatrix(std::move(x), SkewMatrix::Trusted{});
}

Rotation Rotation::identity(int n) { return Rotation(Matrix::Identity(n, n)); }

Rotation Rotation::from_matrix(const Matrix& q) {
  if (q.rows() != q.cols()) throw DimensionError("Rotation: matrix must be square");
  Rotation r{Matrix(q)};
  if (!r.is_valid())
    throw DomainError("Rotation: Q^T Q = I and det Q = +1 must hold within 1e-10");
  return r;
}

double Rotation::orthogonality_residual() const {
  const int n = dim();
  return (m_.transpose() * m_ - Matrix::Identity(n, n)).norm();
}

bool Rotation::is_valid(double tolerance) const {
  return orthogonality_residual() <= tolerance &&
         std::abs(m_.determinant() - 1.0) <= tolerance;
}

namespace {

Matrix exp_skew_2(const Matrix& x) {
  const double a = x(0, 1);
  Matrix r(2, 2);
  r << std::cos(a), std::sin(a), -std::sin(a), std::cos(a);
  return r;
}

// Rodrigues with series fallback for small angles.
Matrix exp_skew_3(const Matrix& x) {
  const double theta = std::sqrt(x(2, 1) * x(2, 1) + x(0, 2) * x(0, 2) + x(1, 0) * x(1, 0));
  double a, b;  // sin(t)/t, (1-cos(t))/t^2
  if (theta < 1e-4) {
    const double t2 = theta * theta;
    a = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    b = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / (theta * theta);
  }
  return Matrix::Identity(3, 3) + a * x + b * (x * x);
}

}  // namespace

Rotation exp_skew(const SkewMatrix& x) {
  const int n = x.dim();
  if (n == 2) return Rotation::trusted(exp_skew_2(x.matrix()));
  if (n == 3) return Rotation::trusted(exp_skew_3(x.matrix()));
  return Rotation::trusted(x.matrix().exp());
}

Rotation project_to_rotation(const Matrix& m) {
  if (m.rows() != m.cols()) throw DimensionError("project_to_rotation: matrix must be square");
  const int n = static_cast<int>(m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& s = svd.singularValues();
  if (s(0) <= 0.0 || s(n - 1) <= tol::rank_rel * s(0))
    throw SingularityError("project_to_rotation: rank-deficient input, nearest rotation not unique");
  Matrix u = svd.matrixU();
  Matrix v = svd.matrixV();
  if ((u * v.transpose()).determinant() < 0.0) u.col(n - 1) *= -1.0;
  return Rotation::trusted(u * v.transpose());
}

std::vector<SkewMatrix> so_basis(int n) {
  if (n < 2) throw DomainError("so_basis: n must be at least 2");
  std::vector<SkewMatrix> basis;
  basis.reserve(n * (n - 1) / 2);
  const double c = 1.0 / std::sqrt(2.0);
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      Matrix e = Matrix::Zero(n, n);
      e(a, b) = c;
      e(b, a) = -c;
      basis.push_back(SkewMatrix(std::move(e)));
    }
  }
  return basis;
}

Rotation rotation_about_axis(const Vector& axis, double angle) {
  if (axis.size() != 3) throw DimensionError("rotation_about_axis: axis must be in R^3");
  if (std::abs(axis.norm() - 1.0) > tol::construction)
    throw DomainError("rotation_about_axis: axis must be a unit vector");
  Matrix k(3, 3);
  k << 0.0, -axis(2), axis(1), axis(2), 0.0, -axis(0), -axis(1), axis(0), 0.0;
  return Rotation::trusted(Matrix::Identity(3, 3) + std::sin(angle) * k +
                           (1.0 - std::cos(angle)) * (k * k));
}

Rotation random_rotation(int n, Rng& rng) {
  if (n < 2) throw DomainError("random_rotation: n must be at least 2");
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = gaussian(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ();
  Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int j = 0; j < n; ++j)
    if (r(j, j) < 0.0) q.col(j) *= -1.0;
  if (q.determinant() < 0.0) q.col(n - 1) *= -1.0;
  return Rotation::trusted(std::move(q));
}

Rotation random_rotation(int n, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  return random_rotation(n, rng);
}

SkewMatrix random_skew(int n, double frobenius_norm, Rng& rng) {
  Matrix g(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) g(i, j) = gaussian(rng);
  SkewMatrix x = skew_part(g);
  const double nrm = x.norm();
  if (nrm == 0.0) return SkewMatrix::zero(n);
  return x * (frobenius_norm / nrm);
}

Vector random_unit_vector(int n, Rng& rng) {
  Vector v(n);
  do {
    for (int i = 0; i < n; ++i) v(i) = gaussian(rng);
  } while (v.norm() < 1e-12);
  return v / v.norm();
}

}  // namespace sosync
