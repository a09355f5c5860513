#pragma once

// Dense vector/matrix helpers for the embedding and alignment code.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "medlink/types.hpp"

namespace medlink {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; 0 when either vector is zero.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a), nb = norm(b);
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot(a, b) / (na * nb);
}

/// Unit-length copy; the zero vector stays zero.
inline Vector normalized(std::span<const double> a) {
  Vector out(a.begin(), a.end());
  const double n = norm(a);
  if (n > 0.0)
    for (auto& v : out) v /= n;
  return out;
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// out = m * x + bias (bias may be empty).
inline void matvec(const Matrix& m, std::span<const double> x, std::span<const double> bias, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows; ++r) out[r] = dot(m.row(r), x) + (bias.empty() ? 0.0 : bias[r]);
}

/// out += m^T * y
inline void matvec_transposed_add(const Matrix& m, std::span<const double> y, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) out[c] += yr * row[c];
  }
}

/// m += y * x^T
inline void outer_add(Matrix& m, std::span<const double> y, std::span<const double> x) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols; ++c) row[c] += yr * x[c];
  }
}

}  // namespace medlink
