#include "protood/linalg.hpp"

#include <cmath>

#include "protood/error.hpp"

namespace protood {

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::DimMismatch, "dot operands differ in length");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
  return sum;
}

double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double l1_norm(std::span<const double> a) {
  double sum = 0.0;
  for (double x : a) sum += std::abs(x);
  return sum;
}

double cosine(std::span<const double> a, std::span<const double> b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  require(na > 0.0 && nb > 0.0, ErrorKind::ZeroVector, "cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

void accumulate_cosine_grad(std::span<const double> a, std::span<const double> b, double scale,
                            std::span<double> grad_a, std::span<double> grad_b) {
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  require(na > 0.0 && nb > 0.0, ErrorKind::ZeroVector, "cosine of a zero vector");
  const double c = dot(a, b) / (na * nb);
  const double inv = 1.0 / (na * nb);
  if (!grad_a.empty()) {
    const double self = c / (na * na);
    for (std::size_t i = 0; i < a.size(); ++i) grad_a[i] += scale * (b[i] * inv - self * a[i]);
  }
  if (!grad_b.empty()) {
    const double self = c / (nb * nb);
    for (std::size_t i = 0; i < b.size(); ++i) grad_b[i] += scale * (a[i] * inv - self * b[i]);
  }
}

Vec unit_normalized(std::span<const double> a) {
  const double n = l2_norm(a);
  require(n > 0.0, ErrorKind::ZeroVector, "cannot normalize a zero vector");
  Vec out(a.begin(), a.end());
  if (std::abs(n - 1.0) <= 1e-12) return out;
  for (double& x : out) x /= n;
  return out;
}

bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

Vec matvec(const Matrix& m, std::span<const double> x) {
  require(m.cols() == x.size(), ErrorKind::DimMismatch, "matrix-vector shape mismatch");
  Vec y(m.rows(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    double sum = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) sum += row[c] * x[c];
    y[r] = sum;
  }
  return y;
}

Vec matvec_transposed(const Matrix& m, std::span<const double> x) {
  require(m.rows() == x.size(), ErrorKind::DimMismatch, "matrix-vector shape mismatch");
  Vec y(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) y[c] += row[c] * x[r];
  }
  return y;
}

void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double scale) {
  require(m.rows() == a.size() && m.cols() == b.size(), ErrorKind::DimMismatch,
          "outer product shape mismatch");
  for (std::size_t r = 0; r < a.size(); ++r) {
    const double ar = scale * a[r];
    auto row = m.row(r);
    for (std::size_t c = 0; c < b.size(); ++c) row[c] += ar * b[c];
  }
}

void axpy(double scale, std::span<const double> x, std::span<double> y) {
  require(x.size() == y.size(), ErrorKind::DimMismatch, "axpy length mismatch");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += scale * x[i];
}

Vec mean_of(std::span<const Vec> vectors) {
  require(!vectors.empty(), ErrorKind::EmptyInput, "mean of an empty set");
  Vec m(vectors.front().size(), 0.0);
  for (const Vec& v : vectors) {
    require(v.size() == m.size(), ErrorKind::DimMismatch, "vectors differ in dimension");
    for (std::size_t i = 0; i < v.size(); ++i) m[i] += v[i];
  }
  for (double& x : m) x /= static_cast<double>(vectors.size());
  return m;
}

}  // namespace protood
