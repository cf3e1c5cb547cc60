#include "patchlock/matrix.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace patchlock {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows << "x" << m.cols;
  return os.str();
}

void require_square(const Matrix& m, const char* what) {
  if (m.rows != m.cols) {
    std::ostringstream os;
    os << what << " requires a square matrix, got " << shape_str(m);
    throw ShapeError(os.str());
  }
}

// Relative pivot threshold below which a matrix is treated as singular.
constexpr double kPivotTolerance = 1e-12;

}  // namespace

Matrix::Matrix(int rows_, int cols_) : rows(rows_), cols(cols_) {
  if (rows < 0 || cols < 0) {
    throw InvalidArgument("matrix dimensions must be non-negative");
  }
  data.assign(static_cast<size_t>(rows) * cols, 0.0);
}

Matrix Matrix::identity(int n) {
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols != b.rows) {
    std::ostringstream os;
    os << "cannot multiply " << shape_str(a) << " by " << shape_str(b);
    throw ShapeError(os.str());
  }
  Matrix out(a.rows, b.cols);
  // i-k-j order streams rows of b; noticeably faster than i-j-k for row-major data.
  for (int i = 0; i < a.rows; ++i) {
    for (int k = 0; k < a.cols; ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) {
        out(i, j) += aik * b(k, j);
      }
    }
  }
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << "cannot add " << shape_str(a) << " and " << shape_str(b);
    throw ShapeError(os.str());
  }
  Matrix out = a;
  for (size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
  return out;
}

Matrix transpose(const Matrix& m) {
  Matrix out(m.cols, m.rows);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) out(j, i) = m(i, j);
  return out;
}

Matrix inverse(const Matrix& m) {
  require_square(m, "inverse");
  const int n = m.rows;
  if (n == 0) return Matrix(0, 0);

  // Row scales from the original matrix; pivots are judged against these.
  std::vector<double> scale(n, 0.0);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) scale[i] = std::max(scale[i], std::abs(m(i, j)));
    if (scale[i] == 0.0) {
      std::ostringstream os;
      os << "singular matrix: row " << i << " is all zeros";
      throw SingularError(os.str());
    }
  }

  Matrix lu = m;
  std::vector<int> perm(n);  // perm[k] = original row now in position k
  for (int i = 0; i < n; ++i) perm[i] = i;

  for (int k = 0; k < n; ++k) {
    int pivot_row = k;
    double pivot_mag = std::abs(lu(k, k));
    for (int r = k + 1; r < n; ++r) {
      const double mag = std::abs(lu(r, k));
      if (mag > pivot_mag) {
        pivot_mag = mag;
        pivot_row = r;
      }
    }
    if (pivot_mag < kPivotTolerance * scale[perm[pivot_row]]) {
      std::ostringstream os;
      os << "numerically singular matrix: pivot " << pivot_mag << " at column " << k
         << " below tolerance";
      throw SingularError(os.str());
    }
    if (pivot_row != k) {
      for (int j = 0; j < n; ++j) std::swap(lu(k, j), lu(pivot_row, j));
      std::swap(perm[k], perm[pivot_row]);
    }
    const double pivot = lu(k, k);
    for (int r = k + 1; r < n; ++r) {
      const double f = lu(r, k) / pivot;
      lu(r, k) = f;
      for (int j = k + 1; j < n; ++j) lu(r, j) -= f * lu(k, j);
    }
  }

  // Solve lu * X = P * I one column at a time.
  Matrix inv(n, n);
  std::vector<double> x(n);
  for (int col = 0; col < n; ++col) {
    for (int i = 0; i < n; ++i) x[i] = (perm[i] == col) ? 1.0 : 0.0;
    for (int i = 1; i < n; ++i) {
      double s = x[i];
      for (int j = 0; j < i; ++j) s -= lu(i, j) * x[j];
      x[i] = s;
    }
    for (int i = n - 1; i >= 0; --i) {
      double s = x[i];
      for (int j = i + 1; j < n; ++j) s -= lu(i, j) * x[j];
      x[i] = s / lu(i, i);
    }
    for (int i = 0; i < n; ++i) inv(i, col) = x[i];
  }
  return inv;
}

double condition_estimate(const Matrix& m) {
  require_square(m, "condition_estimate");
  return norm_1(m) * norm_1(inverse(m));
}

double norm_1(const Matrix& m) {
  double best = 0.0;
  for (int j = 0; j < m.cols; ++j) {
    double sum = 0.0;
    for (int i = 0; i < m.rows; ++i) sum += std::abs(m(i, j));
    best = std::max(best, sum);
  }
  return best;
}

double norm_inf(const Matrix& m) {
  double best = 0.0;
  for (int i = 0; i < m.rows; ++i) {
    double sum = 0.0;
    for (int j = 0; j < m.cols; ++j) sum += std::abs(m(i, j));
    best = std::max(best, sum);
  }
  return best;
}

double frobenius_norm(const Matrix& m) {
  double sum = 0.0;
  for (double v : m.data) sum += v * v;
  return std::sqrt(sum);
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (!a.same_shape(b)) {
    std::ostringstream os;
    os << "cannot compare " << shape_str(a) << " and " << shape_str(b);
    throw ShapeError(os.str());
  }
  double best = 0.0;
  for (size_t i = 0; i < a.data.size(); ++i) {
    best = std::max(best, std::abs(a.data[i] - b.data[i]));
  }
  return best;
}

double identity_residual(const Matrix& a, const Matrix& b) {
  Matrix prod = multiply(a, b);
  for (int i = 0; i < prod.rows && i < prod.cols; ++i) prod(i, i) -= 1.0;
  return norm_inf(prod);
}

}  // namespace patchlock
