#pragma once

#include "luq/common.hpp"

#include <utility>

namespace luq {

/// All eigenvalues of a symmetric matrix, descending.
Vector symmetric_eigenvalues(const Matrix& a);

/// Leading `count` eigenpairs of a symmetric matrix (values descending,
/// orthonormal vectors as columns). Householder tridiagonalization, then
/// inverse iteration on the tridiagonal form and back-transformation.
std::pair<Vector, Matrix> leading_eigenpairs(const Matrix& a, int count);

}  // namespace luq
