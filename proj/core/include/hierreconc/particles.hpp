#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace hierreconc {

/// N x m matrix of bottom vectors, stored column by column so that one
/// bottom series is contiguous.
class ParticleMatrix {
 public:
  ParticleMatrix() = default;
  ParticleMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  std::span<double> col(std::size_t j) { return {data_.data() + j * rows_, rows_}; }
  std::span<const double> col(std::size_t j) const { return {data_.data() + j * rows_, rows_}; }

  double& operator()(std::size_t i, std::size_t j) { return data_[j * rows_ + i]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[j * rows_ + i]; }

  std::vector<double> row(std::size_t i) const;

  /// Column means.
  Eigen::VectorXd mean() const;
  /// Weighted column means (weights must sum to 1).
  Eigen::VectorXd mean(std::span<const double> weights) const;
  /// Sample covariance with N-1 denominator.
  Eigen::MatrixXd covariance() const;

  /// Rows picked by index, in the given order.
  ParticleMatrix gather(std::span<const std::size_t> index) const;

  bool operator==(const ParticleMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

}  // namespace hierreconc
