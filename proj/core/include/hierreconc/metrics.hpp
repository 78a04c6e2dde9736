#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "hierreconc/hierarchy.hpp"
#include "hierreconc/particles.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc {

/// Mean absolute percentage error, (1/n) sum |e_i - r_i| / r_i * 100.
/// Throws ZeroReferenceError if a reference entry is zero.
double mape(std::span<const double> estimate, std::span<const double> reference);

/// 1-D W2 distance between an empirical sample and N(mean, sd^2), using the
/// midpoint quantile grid q_i = (i - 1/2) / N.
double wasserstein2_1d(std::span<const double> samples, double mean, double sd);

/// Average over bottom coordinates of the marginal 1-D W2 distances to the
/// reconciled Gaussian. Needs at least two particles.
double wasserstein2(const ParticleMatrix& samples, const GaussianReconciled& reference);

/// Type-7 (linear interpolation) sample quantile.
double quantile(std::span<const double> samples, double q);

/// Sample median; for even sizes the lower of the two middle values.
double median(std::span<const double> samples);

/// Mean absolute error scaled by the in-sample one-step naive MAE of
/// `train`. Throws FlatTrainSeriesError when that scale is zero.
double mase(std::span<const double> point_forecasts, std::span<const double> actuals,
            std::span<const double> train);

/// Interval score of one observation. Throws InvalidIntervalError if
/// lower > upper or alpha is outside (0, 1).
double mis(double lower, double upper, double actual, double alpha = 0.1);

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Central 1 - alpha interval from the alpha/2 and 1 - alpha/2 quantiles.
Interval prediction_interval(std::span<const double> samples, double alpha = 0.1);

/// Interval score of a sample-based forecast.
double mis(std::span<const double> samples, double actual, double alpha = 0.1);

struct EnergyScore {
  double value = 0.0;
  /// The sample count was odd and the last particle was left out.
  bool dropped_last = false;
};

/// Energy score with exponent 2, E||y - s||^2 - 1/2 E||s - s'||^2, where
/// s' pairs particle i with particle i + N/2. Rows of `samples` are joint
/// forecasts of all n nodes.
EnergyScore energy_score(const ParticleMatrix& samples, std::span<const double> actual);

/// Maps bottom particles to full-hierarchy particles [A b; b].
ParticleMatrix lift_particles(const ParticleMatrix& bottom, StructureView s);

/// (base - new) / ((base + new) / 2). Positive when `metric_new` improves on
/// `metric_base`. Throws DegenerateDenominatorError when base + new == 0.
double skill_score(double metric_new, double metric_base);

/// Values of one metric by level and horizon.
struct ScoreReport {
  std::string metric;
  std::size_t horizons = 0;
  std::vector<std::string> levels;
  std::vector<std::vector<double>> values;  ///< [level][horizon]

  /// Per-level mean over horizons.
  std::vector<double> aggregate() const;
};

/// Per-level, per-horizon skill of `candidate` relative to `base`. Both
/// reports must have the same shape.
ScoreReport skill_report(const ScoreReport& candidate, const ScoreReport& base);

}  // namespace hierreconc
