#include <cmath>
#include <limits>
#include <stdexcept>

#include "hierreconc/errors.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc {

std::vector<std::int64_t> DiscretePosterior::point(std::size_t index) const {
  std::vector<std::int64_t> b(n_bottom);
  const auto radix = static_cast<std::size_t>(cap + 1);
  for (std::size_t j = 0; j < n_bottom; ++j) {
    b[j] = static_cast<std::int64_t>(index % radix);
    index /= radix;
  }
  return b;
}

std::vector<double> DiscretePosterior::marginal(std::size_t j) const {
  std::vector<double> out(static_cast<std::size_t>(cap + 1), 0.0);
  const auto radix = static_cast<std::size_t>(cap + 1);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < j; ++k) stride *= radix;
  for (std::size_t i = 0; i < pmf.size(); ++i) out[(i / stride) % radix] += pmf[i];
  return out;
}

Eigen::VectorXd DiscretePosterior::mean() const {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_bottom));
  for (std::size_t j = 0; j < n_bottom; ++j) {
    const auto p = marginal(j);
    for (std::size_t x = 0; x < p.size(); ++x) {
      mu(static_cast<Eigen::Index>(j)) += static_cast<double>(x) * p[x];
    }
  }
  return mu;
}

DiscretePosterior bruteforce_discrete(StructureView s, const BaseForecasts& base,
                                      std::int64_t support_cap) {
  validate(base, s);
  if (support_cap < 0) throw std::invalid_argument("support cap must be >= 0");
  for (const auto& d : base.upper) {
    if (!is_discrete(d)) throw std::invalid_argument("bruteforce_discrete needs count forecasts");
  }
  for (const auto& d : base.bottom) {
    if (!is_discrete(d)) throw std::invalid_argument("bruteforce_discrete needs count forecasts");
  }
  const std::size_t m = s.n_bottom;
  const auto radix = static_cast<std::size_t>(support_cap + 1);
  double total = 1.0;
  for (std::size_t j = 0; j < m; ++j) total *= static_cast<double>(radix);
  if (total > 1e7) {
    throw SupportTooLargeError("(" + std::to_string(radix) + ")^" + std::to_string(m) +
                               " support points exceed the 10^7 limit");
  }

  // Per-bottom log pmf on [0, cap].
  std::vector<std::vector<double>> bottom_lp(m, std::vector<double>(radix));
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t x = 0; x < radix; ++x) {
      bottom_lp[j][x] = log_density(base.bottom[j], static_cast<double>(x));
    }
  }

  DiscretePosterior post;
  post.n_bottom = m;
  post.cap = support_cap;
  const auto size = static_cast<std::size_t>(total);
  post.log_joint.resize(size);
  std::vector<std::size_t> digits(m, 0);
  std::vector<double> b(m, 0.0);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < size; ++i) {
    double lp = 0.0;
    for (std::size_t j = 0; j < m; ++j) lp += bottom_lp[j][digits[j]];
    for (std::size_t r = 0; r < s.n_upper() && std::isfinite(lp); ++r) {
      double sum = 0.0;
      for (auto leaf : s.constraints[r]) sum += b[leaf];
      lp += log_density(base.upper[r], sum);
    }
    post.log_joint[i] = lp;
    top = std::max(top, lp);
    for (std::size_t j = 0; j < m; ++j) {
      if (++digits[j] < radix) {
        b[j] = static_cast<double>(digits[j]);
        break;
      }
      digits[j] = 0;
      b[j] = 0.0;
    }
  }
  if (!std::isfinite(top)) {
    throw AllZeroWeightsError("joint", "no support point has positive reconciled mass");
  }
  post.pmf.resize(size);
  double z = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    post.pmf[i] = std::exp(post.log_joint[i] - top);
    z += post.pmf[i];
  }
  for (auto& p : post.pmf) p /= z;
  return post;
}

}  // namespace hierreconc
