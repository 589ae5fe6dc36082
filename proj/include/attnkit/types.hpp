#ifndef ATTNKIT_TYPES_HPP
#define ATTNKIT_TYPES_HPP

#include <cassert>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace attnkit {

using Vec = std::vector<double>;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Dense row-major matrix. Everything in this library is double precision.
struct Matrix {
  int rows = 0;
  int cols = 0;
  Vec a;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

  double& operator()(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

  bool empty() const { return rows == 0 || cols == 0; }

  Vec row(int i) const {
    Vec out(cols);
    for (int j = 0; j < cols; ++j) out[j] = (*this)(i, j);
    return out;
  }
  void set_row(int i, const Vec& v) {
    assert(static_cast<int>(v.size()) == cols);
    for (int j = 0; j < cols; ++j) (*this)(i, j) = v[j];
  }
};

// Encoder outputs x_1..x_n as rows; "memory" the attention mechanisms read.
using MemorySequence = Matrix;

enum class EdgePolicy { Clamp, Leak };

inline const char* edge_policy_name(EdgePolicy p) {
  return p == EdgePolicy::Clamp ? "clamp" : "leak";
}

inline double mass(const Vec& w) {
  double s = 0.0;
  for (double x : w) s += x;
  return s;
}

inline bool all_finite(const Vec& v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline bool all_finite(const Matrix& m) { return all_finite(m.a); }

inline int argmax(const Vec& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

inline Vec one_hot(int n, int idx) {
  Vec v(n, 0.0);
  v[idx] = 1.0;
  return v;
}

inline double dot(const Vec& a, const Vec& b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& v) { return std::sqrt(dot(v, v)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  assert(x.size() == y.size());
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

// y += M * x
inline void matvec_acc(const Matrix& m, const Vec& x, Vec& y) {
  assert(static_cast<int>(x.size()) == m.cols);
  assert(static_cast<int>(y.size()) == m.rows);
  for (int i = 0; i < m.rows; ++i) {
    double s = 0.0;
    const double* row = &m.a[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) s += row[j] * x[j];
    y[i] += s;
  }
}

inline Vec matvec(const Matrix& m, const Vec& x) {
  Vec y(m.rows, 0.0);
  matvec_acc(m, x, y);
  return y;
}

// y += M^T * x
inline void matvec_t_acc(const Matrix& m, const Vec& x, Vec& y) {
  assert(static_cast<int>(x.size()) == m.rows);
  assert(static_cast<int>(y.size()) == m.cols);
  for (int i = 0; i < m.rows; ++i) {
    const double* row = &m.a[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) y[j] += row[j] * x[i];
  }
}

// M += alpha * x * y^T
inline void outer_acc(double alpha, const Vec& x, const Vec& y, Matrix& m) {
  assert(static_cast<int>(x.size()) == m.rows);
  assert(static_cast<int>(y.size()) == m.cols);
  for (int i = 0; i < m.rows; ++i) {
    double xi = alpha * x[i];
    double* row = &m.a[static_cast<size_t>(i) * m.cols];
    for (int j = 0; j < m.cols; ++j) row[j] += xi * y[j];
  }
}

}  // namespace attnkit

#endif  // ATTNKIT_TYPES_HPP
