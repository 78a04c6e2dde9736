#include "hierreconc/particles.hpp"

#include <stdexcept>

namespace hierreconc {

std::vector<double> ParticleMatrix::row(std::size_t i) const {
  std::vector<double> r(cols_);
  for (std::size_t j = 0; j < cols_; ++j) r[j] = (*this)(i, j);
  return r;
}

Eigen::VectorXd ParticleMatrix::mean() const {
  Eigen::VectorXd m(static_cast<Eigen::Index>(cols_));
  for (std::size_t j = 0; j < cols_; ++j) {
    double s = 0.0;
    for (double v : col(j)) s += v;
    m(static_cast<Eigen::Index>(j)) = s / static_cast<double>(rows_);
  }
  return m;
}

Eigen::VectorXd ParticleMatrix::mean(std::span<const double> weights) const {
  if (weights.size() != rows_) throw std::invalid_argument("weight count does not match rows");
  Eigen::VectorXd m(static_cast<Eigen::Index>(cols_));
  for (std::size_t j = 0; j < cols_; ++j) {
    const auto c = col(j);
    double s = 0.0;
    for (std::size_t i = 0; i < rows_; ++i) s += weights[i] * c[i];
    m(static_cast<Eigen::Index>(j)) = s;
  }
  return m;
}

Eigen::MatrixXd ParticleMatrix::covariance() const {
  const auto mu = mean();
  Eigen::Map<const Eigen::MatrixXd> x(data_.data(), static_cast<Eigen::Index>(rows_),
                                      static_cast<Eigen::Index>(cols_));
  const Eigen::MatrixXd centered = x.rowwise() - mu.transpose();
  return centered.transpose() * centered / static_cast<double>(rows_ - 1);
}

ParticleMatrix ParticleMatrix::gather(std::span<const std::size_t> index) const {
  ParticleMatrix out(index.size(), cols_);
  for (std::size_t j = 0; j < cols_; ++j) {
    const auto src = col(j);
    auto dst = out.col(j);
    for (std::size_t i = 0; i < index.size(); ++i) dst[i] = src[index[i]];
  }
  return out;
}

}  // namespace hierreconc
