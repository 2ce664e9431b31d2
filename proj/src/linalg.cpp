#include "luq/linalg.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

namespace luq {
namespace {

// LU factorization with partial pivoting of the tridiagonal T - shift*I.
class ShiftedTridiagonal {
 public:
  ShiftedTridiagonal(const Vector& diag, const Vector& sub, double shift, double tiny) : n_(diag.size()) {
    u0_.resize(n_);
    u1_ = Vector::Zero(n_);
    u2_ = Vector::Zero(n_);
    mult_ = Vector::Zero(n_);
    swap_.assign(static_cast<std::size_t>(n_), false);
    double x0 = diag(0) - shift;
    double x1 = n_ > 1 ? sub(0) : 0.0;
    double x2 = 0.0;
    for (Eigen::Index i = 0; i + 1 < n_; ++i) {
      const double c = sub(i);
      const double a = diag(i + 1) - shift;
      const double b = i + 2 < n_ ? sub(i + 1) : 0.0;
      if (std::abs(x0) >= std::abs(c)) {
        if (x0 == 0.0) x0 = tiny;
        const double m = c / x0;
        u0_(i) = x0;
        u1_(i) = x1;
        u2_(i) = x2;
        mult_(i) = m;
        x0 = a - m * x1;
        x1 = b - m * x2;
        x2 = 0.0;
      } else {
        const double m = x0 / c;
        u0_(i) = c;
        u1_(i) = a;
        u2_(i) = b;
        mult_(i) = m;
        swap_[static_cast<std::size_t>(i)] = true;
        const double nx0 = x1 - m * a;
        const double nx1 = x2 - m * b;
        x0 = nx0;
        x1 = nx1;
        x2 = 0.0;
      }
    }
    u0_(n_ - 1) = x0 == 0.0 ? tiny : x0;
    for (Eigen::Index i = 0; i < n_; ++i) {
      if (std::abs(u0_(i)) < tiny) u0_(i) = std::copysign(tiny, u0_(i));
    }
  }

  void solve(Vector& rhs) const {
    for (Eigen::Index i = 0; i + 1 < n_; ++i) {
      if (swap_[static_cast<std::size_t>(i)]) std::swap(rhs(i), rhs(i + 1));
      rhs(i + 1) -= mult_(i) * rhs(i);
    }
    for (Eigen::Index i = n_ - 1; i >= 0; --i) {
      double v = rhs(i);
      if (i + 1 < n_) v -= u1_(i) * rhs(i + 1);
      if (i + 2 < n_) v -= u2_(i) * rhs(i + 2);
      rhs(i) = v / u0_(i);
    }
  }

 private:
  Eigen::Index n_;
  Vector u0_, u1_, u2_, mult_;
  std::vector<bool> swap_;
};

}  // namespace

Vector symmetric_eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) throw ValidationError("eigenvalues need a square matrix");
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigenvalue iteration did not converge");
  return es.eigenvalues().reverse();
}

std::pair<Vector, Matrix> leading_eigenpairs(const Matrix& a, int count) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n) throw ValidationError("eigenpairs need a square matrix");
  if (count < 1 || count > n) throw ValidationError("requested eigenpair count out of range");
  if (n == 1) return {a.col(0), Matrix::Ones(1, 1)};

  Eigen::Tridiagonalization<Matrix> tri(a);
  const Vector diag = tri.diagonal();
  const Vector sub = tri.subDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> es;
  es.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) throw NumericalError("symmetric eigenvalue iteration did not converge");
  const Vector values = es.eigenvalues().reverse().head(count);

  const double norm = std::max({diag.cwiseAbs().maxCoeff(), sub.cwiseAbs().maxCoeff(), 1e-300});
  const double eps = std::numeric_limits<double>::epsilon();
  const double tiny = eps * norm;
  const double cluster_gap = 1e-3 * norm;

  Matrix x(n, count);
  for (int k = 0; k < count; ++k) {
    // Shift slightly off the eigenvalue so the factorization stays regular.
    const double shift = values(k) + 2.0 * eps * norm * (1 + k);
    const ShiftedTridiagonal lu(diag, sub, shift, tiny);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = 1.0 + 0.5 * std::sin(0.7 * static_cast<double>(i) + 1.3 * k);
    v.normalize();
    for (int it = 0; it < 5; ++it) {
      lu.solve(v);
      for (int j = 0; j < k; ++j) {
        if (std::abs(values(j) - values(k)) < cluster_gap) v -= x.col(j).dot(v) * x.col(j);
      }
      const double len = v.norm();
      if (!std::isfinite(len) || len == 0.0) throw NumericalError("inverse iteration broke down");
      v /= len;
    }
    x.col(k) = v;
  }
  Matrix vectors = tri.matrixQ() * x;
  return {values, vectors};
}

}  // namespace luq
