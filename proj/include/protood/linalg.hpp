#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace protood {

using Vec = std::vector<double>;

// Dense row-major matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

double dot(std::span<const double> a, std::span<const double> b);
double l2_norm(std::span<const double> a);
double l1_norm(std::span<const double> a);

// Cosine similarity; throws ZeroVector if either operand has zero norm.
double cosine(std::span<const double> a, std::span<const double> b);

// Gradients of cos(a, b) with respect to a and b, scaled by `scale` and
// accumulated into grad_a / grad_b (either may be empty to skip).
void accumulate_cosine_grad(std::span<const double> a, std::span<const double> b, double scale,
                            std::span<double> grad_a, std::span<double> grad_b);

// Rescales to unit l2 norm. Vectors whose norm is already within 1e-12 of one
// are returned unchanged, which makes repeated normalization a bitwise no-op.
Vec unit_normalized(std::span<const double> a);

bool all_finite(std::span<const double> a);

Vec matvec(const Matrix& m, std::span<const double> x);
// m^T x
Vec matvec_transposed(const Matrix& m, std::span<const double> x);
// m += scale * a b^T
void add_outer(Matrix& m, std::span<const double> a, std::span<const double> b, double scale = 1.0);

// y += scale * x
void axpy(double scale, std::span<const double> x, std::span<double> y);

Vec mean_of(std::span<const Vec> vectors);

}  // namespace protood
