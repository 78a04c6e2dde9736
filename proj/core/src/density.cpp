#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "hierreconc/distributions.hpp"
#include "hierreconc/errors.hpp"
#include "lgamma_table.hpp"

namespace hierreconc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLogSqrt2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

// Type-7 quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double q) {
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace

// ---------------------------------------------------------------------------
// KernelDensity

double KernelDensity::silverman_bandwidth(std::span<const double> samples) {
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double mu = 0.0;
  for (double x : sorted) mu += x;
  mu /= n;
  double var = 0.0;
  for (double x : sorted) var += (x - mu) * (x - mu);
  const double sd = std::sqrt(var / (n - 1.0));
  const double iqr = quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(n, -0.2);
}

KernelDensity::KernelDensity(std::vector<double> samples) : sorted_(std::move(samples)) {
  if (sorted_.size() < 2) throw DegenerateSampleError("kde needs at least two samples");
  std::sort(sorted_.begin(), sorted_.end());
  if (sorted_.front() == sorted_.back()) {
    throw DegenerateSampleError("kde: all samples are equal");
  }
  bandwidth_ = silverman_bandwidth(sorted_);
}

KernelDensity::KernelDensity(std::vector<double> samples, double bandwidth)
    : sorted_(std::move(samples)), bandwidth_(bandwidth) {
  if (sorted_.empty()) throw DegenerateSampleError("kde needs samples");
  if (!(bandwidth_ > 0.0)) throw std::invalid_argument("kde bandwidth must be > 0");
  std::sort(sorted_.begin(), sorted_.end());
}

double KernelDensity::log_evaluate(double x) const {
  // Walk outwards from x; terms more than e^-40 below the largest one are
  // dropped, which bounds the relative error by N * e^-40.
  const double h = bandwidth_;
  const auto it = std::lower_bound(sorted_.begin(), sorted_.end(), x);
  const auto pivot = static_cast<std::ptrdiff_t>(it - sorted_.begin());
  const auto n = static_cast<std::ptrdiff_t>(sorted_.size());

  auto exponent = [&](std::ptrdiff_t i) {
    const double z = (x - sorted_[static_cast<std::size_t>(i)]) / h;
    return -0.5 * z * z;
  };
  double top = kNegInf;
  if (pivot < n) top = std::max(top, exponent(pivot));
  if (pivot > 0) top = std::max(top, exponent(pivot - 1));

  double sum = 0.0;
  for (std::ptrdiff_t i = pivot; i < n; ++i) {
    const double e = exponent(i) - top;
    if (e < -40.0) break;
    sum += std::exp(e);
  }
  for (std::ptrdiff_t i = pivot - 1; i >= 0; --i) {
    const double e = exponent(i) - top;
    if (e < -40.0) break;
    sum += std::exp(e);
  }
  return top + std::log(sum) - std::log(static_cast<double>(n) * h) - kLogSqrt2Pi;
}

double KernelDensity::evaluate(double x) const { return std::exp(log_evaluate(x)); }

KernelDensity kde_fit(std::span<const double> samples) {
  return KernelDensity(std::vector<double>(samples.begin(), samples.end()));
}

// ---------------------------------------------------------------------------
// EmpiricalPmf

EmpiricalPmf::EmpiricalPmf(std::span<const std::int64_t> samples, double floor) : floor_(floor) {
  if (samples.empty()) throw DegenerateSampleError("empirical pmf needs samples");
  if (!(floor >= 0.0)) throw std::invalid_argument("pmf floor must be >= 0");
  const std::int64_t max = *std::max_element(samples.begin(), samples.end());
  if (*std::min_element(samples.begin(), samples.end()) < 0) {
    throw std::invalid_argument("empirical pmf samples must be >= 0");
  }
  window_max_ = 2 * max;
  std::vector<std::size_t> counts(static_cast<std::size_t>(window_max_) + 1, 0);
  for (auto v : samples) ++counts[static_cast<std::size_t>(v)];
  const double n = static_cast<double>(samples.size());
  prob_.resize(counts.size());
  for (std::size_t i = 0; i < counts.size(); ++i) {
    prob_[i] = counts[i] ? static_cast<double>(counts[i]) / n : floor_;
  }
}

double EmpiricalPmf::pmf(double x) const {
  if (!(x >= 0.0) || std::floor(x) != x || x > static_cast<double>(window_max_)) return 0.0;
  return prob_[static_cast<std::size_t>(x)];
}

double EmpiricalPmf::log_pmf(double x) const {
  const double p = pmf(x);
  return p > 0.0 ? std::log(p) : kNegInf;
}

EmpiricalPmf empirical_pmf(std::span<const std::int64_t> samples, double floor) {
  return EmpiricalPmf(samples, floor);
}

// ---------------------------------------------------------------------------
// LogDensity

// KDE tabulated on a grid of spacing h / 40 over [min - 6h, max + 6h] by
// linear binning and direct convolution with a kernel truncated at 10h.
class TabulatedLogDensity {
 public:
  explicit TabulatedLogDensity(KernelDensity kde) : kde_(std::move(kde)) {
    const double h = kde_.bandwidth_;
    lo_ = kde_.sorted_.front() - 6.0 * h;
    const double hi = kde_.sorted_.back() + 6.0 * h;
    const double target = h / 40.0;
    std::size_t g = static_cast<std::size_t>(std::ceil((hi - lo_) / target)) + 1;
    g = std::clamp<std::size_t>(g, 256, std::size_t{1} << 18);
    step_ = (hi - lo_) / static_cast<double>(g - 1);

    std::vector<double> mass(g, 0.0);
    for (double x : kde_.sorted_) {
      const double pos = (x - lo_) / step_;
      auto i = std::min(static_cast<std::size_t>(pos), g - 2);
      const double frac = pos - static_cast<double>(i);
      mass[i] += 1.0 - frac;
      mass[i + 1] += frac;
    }
    const auto half = static_cast<std::ptrdiff_t>(std::ceil(10.0 * h / step_));
    std::vector<double> kernel(static_cast<std::size_t>(2 * half + 1));
    const double norm = 1.0 / (static_cast<double>(kde_.sorted_.size()) * h) *
                        std::exp(-kLogSqrt2Pi);
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const double z = static_cast<double>(k) * step_ / h;
      kernel[static_cast<std::size_t>(k + half)] = norm * std::exp(-0.5 * z * z);
    }
    density_.assign(g, 0.0);
    const auto gi = static_cast<std::ptrdiff_t>(g);
    for (std::ptrdiff_t i = 0; i < gi; ++i) {
      const double w = mass[static_cast<std::size_t>(i)];
      if (w == 0.0) continue;
      const std::ptrdiff_t a = std::max<std::ptrdiff_t>(0, i - half);
      const std::ptrdiff_t b = std::min<std::ptrdiff_t>(gi - 1, i + half);
      for (std::ptrdiff_t j = a; j <= b; ++j) {
        density_[static_cast<std::size_t>(j)] += w * kernel[static_cast<std::size_t>(j - i + half)];
      }
    }
  }

  double operator()(double x) const {
    const double pos = (x - lo_) / step_;
    if (!(pos >= 0.0) || pos > static_cast<double>(density_.size() - 1)) {
      return kde_.log_evaluate(x);
    }
    auto i = std::min(static_cast<std::size_t>(pos), density_.size() - 2);
    const double frac = pos - static_cast<double>(i);
    const double f = (1.0 - frac) * density_[i] + frac * density_[i + 1];
    return f > 0.0 ? std::log(f) : kde_.log_evaluate(x);
  }

 private:
  KernelDensity kde_;
  double lo_ = 0.0;
  double step_ = 1.0;
  std::vector<double> density_;
};

struct LogDensity::Impl {
  enum class Kind { gaussian, count_table, kde };
  Kind kind = Kind::gaussian;

  // gaussian
  double mu = 0.0, inv_sd = 1.0, log_norm = 0.0;

  // count_table: log pmf for 0..table.size()-1; `tail` evaluates beyond.
  std::vector<double> table;
  ForecastDistribution tail_source;
  bool tail_is_zero = false;

  std::unique_ptr<TabulatedLogDensity> kde;

  double eval(double x) const {
    switch (kind) {
      case Kind::gaussian: {
        const double z = (x - mu) * inv_sd;
        return log_norm - 0.5 * z * z;
      }
      case Kind::count_table: {
        if (!(x >= 0.0) || std::floor(x) != x) return kNegInf;
        if (x < static_cast<double>(table.size())) return table[static_cast<std::size_t>(x)];
        return tail_is_zero ? kNegInf : log_density(tail_source, x);
      }
      case Kind::kde:
        return (*kde)(x);
    }
    return kNegInf;
  }
};

LogDensity::LogDensity(const ForecastDistribution& d, double pmf_floor)
    : impl_(std::make_unique<Impl>()) {
  validate(d);
  auto& im = *impl_;
  if (const auto* g = std::get_if<Gaussian>(&d)) {
    im.kind = Impl::Kind::gaussian;
    im.mu = g->mean;
    im.inv_sd = 1.0 / g->sd;
    im.log_norm = -kLogSqrt2Pi - std::log(g->sd);
  } else if (std::holds_alternative<Poisson>(d) || std::holds_alternative<NegativeBinomial>(d)) {
    im.kind = Impl::Kind::count_table;
    double mu = 0.0, var = 0.0;
    if (const auto* p = std::get_if<Poisson>(&d)) {
      mu = p->rate;
      var = p->rate;
    } else {
      const auto& nb = std::get<NegativeBinomial>(d);
      mu = nb.mean;
      var = nb.mean + nb.mean * nb.mean / nb.dispersion;
    }
    const auto n = static_cast<std::size_t>(std::min(mu + 40.0 * std::sqrt(var) + 64.0, 1e6));
    im.table.resize(n);
    for (std::size_t x = 0; x < n; ++x) im.table[x] = log_density(d, static_cast<double>(x));
    im.tail_source = d;
  } else if (const auto* e = std::get_if<EmpiricalDiscrete>(&d)) {
    im.kind = Impl::Kind::count_table;
    const EmpiricalPmf pmf(*e->samples, pmf_floor);
    im.table.resize(static_cast<std::size_t>(pmf.window_max()) + 1);
    for (std::size_t x = 0; x < im.table.size(); ++x) {
      im.table[x] = pmf.log_pmf(static_cast<double>(x));
    }
    im.tail_is_zero = true;
  } else {
    const auto& c = std::get<EmpiricalContinuous>(d);
    im.kind = Impl::Kind::kde;
    im.kde = std::make_unique<TabulatedLogDensity>(KernelDensity(*c.samples));
  }
}

LogDensity::~LogDensity() = default;
LogDensity::LogDensity(LogDensity&&) noexcept = default;
LogDensity& LogDensity::operator=(LogDensity&&) noexcept = default;

double LogDensity::operator()(double x) const { return impl_->eval(x); }

void LogDensity::evaluate(std::span<const double> x, std::span<double> out) const {
  const auto& im = *impl_;
  if (im.kind == Impl::Kind::gaussian) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = (x[i] - im.mu) * im.inv_sd;
      out[i] = im.log_norm - 0.5 * z * z;
    }
    return;
  }
  if (im.kind == Impl::Kind::count_table) {
    const double size = static_cast<double>(im.table.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x[i];
      out[i] = v >= 0.0 && v < size && std::floor(v) == v ? im.table[static_cast<std::size_t>(v)] : im.eval(v);
    }
    return;
  }
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = im.eval(x[i]);
}

}  // namespace hierreconc
