#include "hierreconc/reconcile.hpp"

#include <cmath>
#include <stdexcept>

#include "hierreconc/errors.hpp"

namespace hierreconc {

void validate(const BaseForecasts& base, StructureView s) {
  if (base.upper.size() != s.n_upper() || base.bottom.size() != s.n_bottom) {
    throw DimensionError("base forecasts: expected " + std::to_string(s.n_upper()) +
                         " upper and " + std::to_string(s.n_bottom) + " bottom entries, got " +
                         std::to_string(base.upper.size()) + " and " +
                         std::to_string(base.bottom.size()));
  }
  for (const auto& d : base.upper) validate(d);
  for (const auto& d : base.bottom) validate(d);
}

GaussianReconciled reconcile_gaussian(StructureView s, const BaseForecasts& base) {
  validate(base, s);
  const auto m = static_cast<Eigen::Index>(s.n_bottom);
  const auto u = static_cast<Eigen::Index>(s.n_upper());
  Eigen::VectorXd mb(m), vb(m), mu(u), vu(u);
  for (Eigen::Index j = 0; j < m; ++j) {
    const auto* g = std::get_if<Gaussian>(&base.bottom[static_cast<std::size_t>(j)]);
    if (!g) throw std::invalid_argument("analytical reconciliation needs Gaussian forecasts");
    mb(j) = g->mean;
    vb(j) = g->sd * g->sd;
  }
  for (Eigen::Index r = 0; r < u; ++r) {
    const auto* g = std::get_if<Gaussian>(&base.upper[static_cast<std::size_t>(r)]);
    if (!g) throw std::invalid_argument("analytical reconciliation needs Gaussian forecasts");
    mu(r) = g->mean;
    vu(r) = g->sd * g->sd;
  }

  GaussianReconciled out{mb, vb.asDiagonal()};
  if (u == 0) return out;

  const Eigen::MatrixXd a = aggregating_matrix(s);
  const Eigen::MatrixXd sb_at = vb.asDiagonal() * a.transpose();  // Sigma_b A^T
  Eigen::MatrixXd k = a * sb_at;
  k.diagonal() += vu;
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw SingularMatrixError("Sigma_u + A Sigma_b A^T is not positive definite");
  }
  const Eigen::VectorXd diag = llt.matrixL().toDenseMatrix().diagonal();
  if (diag.minCoeff() <= 1e-12 * diag.maxCoeff()) {
    throw SingularMatrixError("Sigma_u + A Sigma_b A^T is numerically singular");
  }
  const Eigen::MatrixXd gain = llt.solve(sb_at.transpose()).transpose();  // Sigma_b A^T K^-1
  out.mean = mb + gain * (mu - a * mb);
  out.covariance = Eigen::MatrixXd(vb.asDiagonal()) - gain * sb_at.transpose();
  out.covariance = 0.5 * (out.covariance + out.covariance.transpose()).eval();
  return out;
}

ParticleMatrix draw(const GaussianReconciled& g, std::size_t n, Rng& rng) {
  const auto m = g.mean.size();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g.covariance);
  const Eigen::MatrixXd root =
      eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  ParticleMatrix out(n, static_cast<std::size_t>(m));
  std::normal_distribution<double> z(0.0, 1.0);
  Eigen::VectorXd e(m);
  for (std::size_t i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < m; ++k) e(k) = z(rng.engine());
    const Eigen::VectorXd x = g.mean + root * e;
    for (Eigen::Index k = 0; k < m; ++k) out(i, static_cast<std::size_t>(k)) = x(k);
  }
  return out;
}

double effective_sample_size(std::span<const double> weights) {
  double s = 0.0;
  for (double w : weights) s += w * w;
  return 1.0 / s;
}

Eigen::VectorXd point_reconcile(const Eigen::VectorXd& y_hat, StructureView s, PointMethod method,
                                const Eigen::MatrixXd& w) {
  const auto n = static_cast<Eigen::Index>(s.n_nodes());
  const auto m = static_cast<Eigen::Index>(s.n_bottom);
  if (y_hat.size() != n) throw DimensionError("point_reconcile: y_hat has wrong length");
  const Eigen::MatrixXd sm = summing_matrix(s);
  if (method == PointMethod::bottom_up) {
    return sm * y_hat.tail(m);
  }
  if (w.rows() != n || w.cols() != n) throw DimensionError("point_reconcile: W must be n x n");
  if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, w.cwiseAbs().maxCoeff())) {
    throw std::invalid_argument("point_reconcile: W must be symmetric");
  }
  Eigen::LLT<Eigen::MatrixXd> wl(w);
  if (wl.info() != Eigen::Success) throw SingularMatrixError("W is not positive definite");
  const Eigen::MatrixXd winv_s = wl.solve(sm);  // W^-1 S
  Eigen::LLT<Eigen::MatrixXd> ml(sm.transpose() * winv_s);
  if (ml.info() != Eigen::Success) throw SingularMatrixError("S^T W^-1 S is singular");
  const Eigen::VectorXd b = ml.solve(winv_s.transpose() * y_hat);
  return sm * b;
}

}  // namespace hierreconc
