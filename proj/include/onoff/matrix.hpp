#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace onoff {

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  double row_sum(std::size_t r) const;
  double col_sum(std::size_t c) const;
  double total() const;

  std::vector<std::vector<double>> to_rows() const;

  Matrix operator*(const Matrix& rhs) const;
  bool operator==(const Matrix& rhs) const = default;

  // Largest absolute entrywise difference; shapes must match.
  double max_abs_diff(const Matrix& rhs) const;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// A^k by repeated squaring. k == 0 gives the identity.
Matrix matrix_power(const Matrix& a, unsigned long long k);

}  // namespace onoff
