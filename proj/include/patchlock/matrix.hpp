#pragma once

#include <vector>

#include "patchlock/error.hpp"

namespace patchlock {

// Dense real matrix, row-major, double precision.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int rows, int cols);

  double& operator()(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
  double operator()(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }

  bool same_shape(const Matrix& other) const {
    return rows == other.rows && cols == other.cols;
  }

  static Matrix identity(int n);
};

Matrix multiply(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);

// Inverse via LU factorization with partial pivoting. Throws SingularError
// when a pivot falls below 1e-12 relative to its row's scale.
Matrix inverse(const Matrix& m);

// kappa_1(m) = ||m||_1 * ||m^-1||_1, computed via explicit inversion.
double condition_estimate(const Matrix& m);

// Induced norms.
double norm_1(const Matrix& m);    // max absolute column sum
double norm_inf(const Matrix& m);  // max absolute row sum
double frobenius_norm(const Matrix& m);

double max_abs_diff(const Matrix& a, const Matrix& b);

// ||a*b - I||_inf; the residual used to vet inverse pairs.
double identity_residual(const Matrix& a, const Matrix& b);

}  // namespace patchlock
