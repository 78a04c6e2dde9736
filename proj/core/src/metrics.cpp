#include "hierreconc/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <boost/math/distributions/normal.hpp>

#include "hierreconc/errors.hpp"

namespace hierreconc {

double mape(std::span<const double> estimate, std::span<const double> reference) {
  if (estimate.size() != reference.size()) throw DimensionError("mape: length mismatch");
  if (reference.empty()) throw DimensionError("mape: empty input");
  double total = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (reference[i] == 0.0) {
      throw ZeroReferenceError("mape: reference entry " + std::to_string(i) + " is zero");
    }
    total += std::abs(estimate[i] - reference[i]) / std::abs(reference[i]);
  }
  return 100.0 * total / static_cast<double>(reference.size());
}

double wasserstein2_1d(std::span<const double> samples, double mean, double sd) {
  const std::size_t n = samples.size();
  if (n < 2) throw std::invalid_argument("wasserstein2 needs at least two samples");
  std::vector<double> x(samples.begin(), samples.end());
  std::sort(x.begin(), x.end());
  double acc = 0.0;
  if (sd > 0.0) {
    const boost::math::normal_distribution<double> ref(mean, sd);
    for (std::size_t i = 0; i < n; ++i) {
      const double q = (static_cast<double>(i) + 0.5) / static_cast<double>(n);
      const double d = x[i] - boost::math::quantile(ref, q);
      acc += d * d;
    }
  } else {
    for (double v : x) acc += (v - mean) * (v - mean);
  }
  return std::sqrt(acc / static_cast<double>(n));
}

double wasserstein2(const ParticleMatrix& samples, const GaussianReconciled& reference) {
  const std::size_t m = samples.cols();
  if (static_cast<std::size_t>(reference.mean.size()) != m) {
    throw DimensionError("wasserstein2: reference dimension differs from particles");
  }
  double total = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto k = static_cast<Eigen::Index>(j);
    const double var = std::max(0.0, reference.covariance(k, k));
    total += wasserstein2_1d(samples.col(j), reference.mean(k), std::sqrt(var));
  }
  return total / static_cast<double>(m);
}

double quantile(std::span<const double> samples, double q) {
  if (samples.empty()) throw std::invalid_argument("quantile of an empty sample");
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("quantile level outside [0, 1]");
  std::vector<double> x(samples.begin(), samples.end());
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(lo), x.end());
  const double a = x[lo];
  if (lo + 1 >= x.size()) return a;
  const double b = *std::min_element(x.begin() + static_cast<std::ptrdiff_t>(lo) + 1, x.end());
  return a + (h - static_cast<double>(lo)) * (b - a);
}

double median(std::span<const double> samples) {
  if (samples.empty()) throw std::invalid_argument("median of an empty sample");
  std::vector<double> x(samples.begin(), samples.end());
  const std::size_t k = (x.size() - 1) / 2;
  std::nth_element(x.begin(), x.begin() + static_cast<std::ptrdiff_t>(k), x.end());
  return x[k];
}

double mase(std::span<const double> point_forecasts, std::span<const double> actuals,
            std::span<const double> train) {
  if (point_forecasts.size() != actuals.size() || actuals.empty()) {
    throw DimensionError("mase: forecasts and actuals must have the same nonzero length");
  }
  if (train.size() < 2) throw DimensionError("mase: train series needs at least two values");
  double mae = 0.0;
  for (std::size_t j = 0; j < actuals.size(); ++j) mae += std::abs(actuals[j] - point_forecasts[j]);
  mae /= static_cast<double>(actuals.size());
  double scale = 0.0;
  for (std::size_t t = 1; t < train.size(); ++t) scale += std::abs(train[t] - train[t - 1]);
  scale /= static_cast<double>(train.size() - 1);
  if (scale == 0.0) throw FlatTrainSeriesError("mase: train series is constant");
  return mae / scale;
}

double mis(double lower, double upper, double actual, double alpha) {
  if (!(lower <= upper)) throw InvalidIntervalError("mis: lower bound exceeds upper bound");
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidIntervalError("mis: alpha must be in (0, 1)");
  double score = upper - lower;
  if (actual < lower) score += 2.0 / alpha * (lower - actual);
  if (actual > upper) score += 2.0 / alpha * (actual - upper);
  return score;
}

Interval prediction_interval(std::span<const double> samples, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidIntervalError("alpha must be in (0, 1)");
  return {quantile(samples, alpha / 2.0), quantile(samples, 1.0 - alpha / 2.0)};
}

double mis(std::span<const double> samples, double actual, double alpha) {
  const auto iv = prediction_interval(samples, alpha);
  return mis(iv.lower, iv.upper, actual, alpha);
}

EnergyScore energy_score(const ParticleMatrix& samples, std::span<const double> actual) {
  if (samples.cols() != actual.size()) throw DimensionError("energy_score: dimension mismatch");
  if (samples.rows() < 2) throw std::invalid_argument("energy_score needs at least two samples");
  EnergyScore out;
  out.dropped_last = samples.rows() % 2 == 1;
  const std::size_t half = samples.rows() / 2;
  const std::size_t used = 2 * half;
  double to_actual = 0.0;
  double paired = 0.0;
  for (std::size_t j = 0; j < samples.cols(); ++j) {
    const auto c = samples.col(j);
    for (std::size_t i = 0; i < used; ++i) {
      const double d = c[i] - actual[j];
      to_actual += d * d;
    }
    for (std::size_t i = 0; i < half; ++i) {
      const double d = c[i] - c[i + half];
      paired += d * d;
    }
  }
  out.value = to_actual / static_cast<double>(used) - 0.5 * paired / static_cast<double>(half);
  return out;
}

ParticleMatrix lift_particles(const ParticleMatrix& bottom, StructureView s) {
  if (bottom.cols() != s.n_bottom) throw DimensionError("lift_particles: wrong bottom count");
  const std::size_t n = bottom.rows();
  const std::size_t u = s.n_upper();
  ParticleMatrix out(n, s.n_nodes());
  for (std::size_t r = 0; r < u; ++r) {
    auto dst = out.col(r);
    for (auto leaf : s.constraints[r]) {
      const auto src = bottom.col(leaf);
      for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
    }
  }
  for (std::size_t j = 0; j < s.n_bottom; ++j) {
    const auto src = bottom.col(j);
    std::copy(src.begin(), src.end(), out.col(u + j).begin());
  }
  return out;
}

double skill_score(double metric_new, double metric_base) {
  const double denom = (metric_base + metric_new) / 2.0;
  if (denom == 0.0) throw DegenerateDenominatorError("skill_score: base + new is zero");
  if (metric_base == metric_new) return 0.0;
  return (metric_base - metric_new) / denom;
}

std::vector<double> ScoreReport::aggregate() const {
  std::vector<double> out;
  out.reserve(values.size());
  for (const auto& row : values) {
    double s = 0.0;
    for (double v : row) s += v;
    out.push_back(row.empty() ? 0.0 : s / static_cast<double>(row.size()));
  }
  return out;
}

ScoreReport skill_report(const ScoreReport& candidate, const ScoreReport& base) {
  if (candidate.values.size() != base.values.size() || candidate.horizons != base.horizons) {
    throw DimensionError("skill_report: reports have different shapes");
  }
  ScoreReport out{candidate.metric + "_skill", candidate.horizons, candidate.levels, {}};
  out.values.resize(candidate.values.size());
  for (std::size_t l = 0; l < candidate.values.size(); ++l) {
    if (candidate.values[l].size() != base.values[l].size()) {
      throw DimensionError("skill_report: reports have different shapes");
    }
    for (std::size_t h = 0; h < candidate.values[l].size(); ++h) {
      out.values[l].push_back(skill_score(candidate.values[l][h], base.values[l][h]));
    }
  }
  return out;
}

}  // namespace hierreconc
