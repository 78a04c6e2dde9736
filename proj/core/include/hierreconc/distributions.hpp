#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "hierreconc/rng.hpp"

namespace hierreconc {

struct Gaussian {
  double mean = 0.0;
  double sd = 1.0;
};

struct Poisson {
  double rate = 1.0;
};

/// Mean/dispersion parameterization: variance = mean + mean^2 / dispersion.
struct NegativeBinomial {
  double mean = 1.0;
  double dispersion = 1.0;
};

/// Forecast known only through nonnegative integer samples.
struct EmpiricalDiscrete {
  std::shared_ptr<const std::vector<std::int64_t>> samples;
};

/// Forecast known only through real-valued samples.
struct EmpiricalContinuous {
  std::shared_ptr<const std::vector<double>> samples;
};

using ForecastDistribution =
    std::variant<Gaussian, Poisson, NegativeBinomial, EmpiricalDiscrete, EmpiricalContinuous>;

EmpiricalDiscrete make_empirical(std::vector<std::int64_t> samples);
EmpiricalContinuous make_empirical(std::vector<double> samples);

/// Throws std::invalid_argument when a parameter violates its family's domain.
void validate(const ForecastDistribution& d);

bool is_discrete(const ForecastDistribution& d) noexcept;
bool is_empirical(const ForecastDistribution& d) noexcept;
std::string family_name(const ForecastDistribution& d);

double mean(const ForecastDistribution& d);

/// Natural-log pmf/pdf; -inf outside the support. Empirical families are
/// evaluated with an unfloored empirical pmf or a Silverman KDE.
double log_density(const ForecastDistribution& d, double x);

/// n independent draws. Empirical families resample their stored values.
std::vector<double> draw(const ForecastDistribution& d, std::size_t n, Rng& rng);

/// Sample mean and N-1 standard deviation. Throws DegenerateSampleError when
/// fewer than two samples or zero spread.
Gaussian fit_gaussian(std::span<const double> samples);

/// Method of moments: dispersion = mean^2 / (variance - mean), using the N-1
/// variance. Throws UnderdispersedError when variance <= mean.
NegativeBinomial fit_negbin(std::span<const double> samples);

/// Gaussian-kernel density estimate with Silverman's rule-of-thumb bandwidth.
class KernelDensity {
 public:
  /// Throws DegenerateSampleError for fewer than two distinct values.
  explicit KernelDensity(std::vector<double> samples);
  KernelDensity(std::vector<double> samples, double bandwidth);

  double bandwidth() const noexcept { return bandwidth_; }
  std::size_t size() const noexcept { return sorted_.size(); }

  /// Exact kernel average at x.
  double evaluate(double x) const;
  /// log(evaluate(x)), computed without underflow far from the data.
  double log_evaluate(double x) const;

  /// Silverman's rule: 0.9 * min(sd, IQR / 1.34) * N^(-1/5). Falls back to
  /// sd when the IQR is zero.
  static double silverman_bandwidth(std::span<const double> samples);

 private:
  friend class TabulatedLogDensity;
  std::vector<double> sorted_;
  double bandwidth_;
};

/// Empirical pmf over nonnegative integers with a support window [0, 2 max].
class EmpiricalPmf {
 public:
  EmpiricalPmf(std::span<const std::int64_t> samples, double floor);

  /// count(x) / N for observed x; `floor` for unobserved integers inside the
  /// window; 0 elsewhere.
  double pmf(double x) const;
  double log_pmf(double x) const;

  std::int64_t window_max() const noexcept { return window_max_; }
  double floor() const noexcept { return floor_; }

 private:
  std::vector<double> prob_;
  std::int64_t window_max_ = 0;
  double floor_ = 0.0;
};

KernelDensity kde_fit(std::span<const double> samples);
EmpiricalPmf empirical_pmf(std::span<const std::int64_t> samples, double floor);

/// Fast vectorizable log-density of one forecast, used as an importance
/// weight function. Parametric discrete families are tabulated over their
/// bulk; KDEs are binned on a fine grid with exact evaluation outside it;
/// empirical pmfs are tabulated exactly.
class LogDensity {
 public:
  explicit LogDensity(const ForecastDistribution& d, double pmf_floor = 0.0);
  ~LogDensity();
  LogDensity(LogDensity&&) noexcept;
  LogDensity& operator=(LogDensity&&) noexcept;

  double operator()(double x) const;
  void evaluate(std::span<const double> x, std::span<double> out) const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace hierreconc
