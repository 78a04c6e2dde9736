#include "hierreconc/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hierreconc/errors.hpp"
#include "lgamma_table.hpp"

namespace hierreconc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

bool is_count(double x) { return x >= 0.0 && std::floor(x) == x; }

double sample_mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double sample_variance(std::span<const double> xs, double mu) {
  double s = 0.0;
  for (double x : xs) s += (x - mu) * (x - mu);
  return s / static_cast<double>(xs.size() - 1);
}

}  // namespace

EmpiricalDiscrete make_empirical(std::vector<std::int64_t> samples) {
  return {std::make_shared<const std::vector<std::int64_t>>(std::move(samples))};
}

EmpiricalContinuous make_empirical(std::vector<double> samples) {
  return {std::make_shared<const std::vector<double>>(std::move(samples))};
}

void validate(const ForecastDistribution& d) {
  std::visit(overloaded{
                 [](const Gaussian& g) {
                   if (!std::isfinite(g.mean) || !(g.sd > 0.0) || !std::isfinite(g.sd)) {
                     throw std::invalid_argument("gaussian needs a finite mean and sd > 0");
                   }
                 },
                 [](const Poisson& p) {
                   if (!(p.rate > 0.0) || !std::isfinite(p.rate)) {
                     throw std::invalid_argument("poisson needs rate > 0");
                   }
                 },
                 [](const NegativeBinomial& nb) {
                   if (!(nb.mean > 0.0) || !(nb.dispersion > 0.0) || !std::isfinite(nb.mean) ||
                       !std::isfinite(nb.dispersion)) {
                     throw std::invalid_argument("negbin needs mean > 0 and dispersion > 0");
                   }
                 },
                 [](const EmpiricalDiscrete& e) {
                   if (!e.samples || e.samples->empty()) {
                     throw std::invalid_argument("empirical sample set is empty");
                   }
                   for (auto v : *e.samples) {
                     if (v < 0) throw std::invalid_argument("discrete samples must be >= 0");
                   }
                 },
                 [](const EmpiricalContinuous& e) {
                   if (!e.samples || e.samples->empty()) {
                     throw std::invalid_argument("empirical sample set is empty");
                   }
                   for (auto v : *e.samples) {
                     if (!std::isfinite(v)) throw std::invalid_argument("non-finite sample");
                   }
                 },
             },
             d);
}

bool is_discrete(const ForecastDistribution& d) noexcept {
  return std::holds_alternative<Poisson>(d) || std::holds_alternative<NegativeBinomial>(d) ||
         std::holds_alternative<EmpiricalDiscrete>(d);
}

bool is_empirical(const ForecastDistribution& d) noexcept {
  return std::holds_alternative<EmpiricalDiscrete>(d) ||
         std::holds_alternative<EmpiricalContinuous>(d);
}

std::string family_name(const ForecastDistribution& d) {
  static constexpr const char* names[] = {"gaussian", "poisson", "negbin", "samples_discrete",
                                          "samples_continuous"};
  return names[d.index()];
}

double mean(const ForecastDistribution& d) {
  return std::visit(overloaded{
                        [](const Gaussian& g) { return g.mean; },
                        [](const Poisson& p) { return p.rate; },
                        [](const NegativeBinomial& nb) { return nb.mean; },
                        [](const EmpiricalDiscrete& e) {
                          double s = 0.0;
                          for (auto v : *e.samples) s += static_cast<double>(v);
                          return s / static_cast<double>(e.samples->size());
                        },
                        [](const EmpiricalContinuous& e) {
                          return sample_mean(*e.samples);
                        },
                    },
                    d);
}

double log_density(const ForecastDistribution& d, double x) {
  return std::visit(
      overloaded{
          [x](const Gaussian& g) {
            const double z = (x - g.mean) / g.sd;
            return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(g.sd) - 0.5 * z * z;
          },
          [x](const Poisson& p) {
            if (!is_count(x)) return kNegInf;
            return x * std::log(p.rate) - p.rate - detail::log_factorial(x);
          },
          [x](const NegativeBinomial& nb) {
            if (!is_count(x)) return kNegInf;
            const double k = nb.dispersion;
            return std::lgamma(x + k) - std::lgamma(k) - detail::log_factorial(x) +
                   k * std::log(k / (k + nb.mean)) + x * std::log(nb.mean / (k + nb.mean));
          },
          [x](const EmpiricalDiscrete& e) { return EmpiricalPmf(*e.samples, 0.0).log_pmf(x); },
          [x](const EmpiricalContinuous& e) {
            return KernelDensity(*e.samples).log_evaluate(x);
          },
      },
      d);
}

namespace {

// Inverse-CDF sampling from a tabulated count pmf with a guide table. Draws
// past the table's end (mass below double precision for the tables built
// here) fall back to `tail`.
template <class LogPmf, class Tail>
void draw_counts_tabulated(std::span<double> out, double mu, double sd, std::mt19937_64& eng,
                           LogPmf log_pmf, Tail tail) {
  const auto top = static_cast<std::size_t>(std::ceil(mu + 40.0 * sd + 64.0));
  std::vector<double> cdf(top + 1);
  double acc = 0.0;
  for (std::size_t k = 0; k <= top; ++k) {
    acc += std::exp(log_pmf(static_cast<double>(k)));
    cdf[k] = acc;
  }
  const std::size_t g_size = top + 1;
  std::vector<std::size_t> guide(g_size);
  std::size_t k = 0;
  for (std::size_t g = 0; g < g_size; ++g) {
    const double level = static_cast<double>(g) / static_cast<double>(g_size);
    while (k < top && cdf[k] <= level) ++k;
    guide[g] = k;
  }
  for (auto& v : out) {
    const double u = static_cast<double>(eng() >> 11) * 0x1.0p-53;
    if (u >= cdf[top]) {
      v = tail();
      continue;
    }
    std::size_t i = guide[static_cast<std::size_t>(u * static_cast<double>(g_size))];
    while (cdf[i] <= u) ++i;
    v = static_cast<double>(i);
  }
}

// Tables pay off once a few hundred draws share one distribution.
constexpr std::size_t kTabulateFrom = 256;
constexpr double kMaxTable = 5e6;

}  // namespace

std::vector<double> draw(const ForecastDistribution& d, std::size_t n, Rng& rng) {
  std::vector<double> out(n);
  auto& eng = rng.engine();
  std::visit(overloaded{
                 [&](const Gaussian& g) {
                   std::normal_distribution<double> dist(g.mean, g.sd);
                   for (auto& v : out) v = dist(eng);
                 },
                 [&](const Poisson& p) {
                   std::poisson_distribution<std::int64_t> dist(p.rate);
                   auto slow = [&] { return static_cast<double>(dist(eng)); };
                   const double sd = std::sqrt(p.rate);
                   if (n >= kTabulateFrom && p.rate + 40.0 * sd < kMaxTable) {
                     draw_counts_tabulated(
                         out, p.rate, sd, eng, [&](double x) { return log_density(d, x); }, slow);
                   } else {
                     for (auto& v : out) v = slow();
                   }
                 },
                 [&](const NegativeBinomial& nb) {
                   // Gamma-Poisson mixture.
                   std::gamma_distribution<double> gamma(nb.dispersion, nb.mean / nb.dispersion);
                   auto slow = [&] {
                     const double rate = gamma(eng);
                     return rate > 0.0 ? static_cast<double>(
                                             std::poisson_distribution<std::int64_t>(rate)(eng))
                                       : 0.0;
                   };
                   const double sd = std::sqrt(nb.mean + nb.mean * nb.mean / nb.dispersion);
                   if (n >= kTabulateFrom && nb.mean + 40.0 * sd < kMaxTable) {
                     draw_counts_tabulated(
                         out, nb.mean, sd, eng, [&](double x) { return log_density(d, x); }, slow);
                   } else {
                     for (auto& v : out) v = slow();
                   }
                 },
                 [&](const EmpiricalDiscrete& e) {
                   std::uniform_int_distribution<std::size_t> pick(0, e.samples->size() - 1);
                   for (auto& v : out) v = static_cast<double>((*e.samples)[pick(eng)]);
                 },
                 [&](const EmpiricalContinuous& e) {
                   std::uniform_int_distribution<std::size_t> pick(0, e.samples->size() - 1);
                   for (auto& v : out) v = (*e.samples)[pick(eng)];
                 },
             },
             d);
  return out;
}

Gaussian fit_gaussian(std::span<const double> samples) {
  if (samples.size() < 2) throw DegenerateSampleError("gaussian fit needs at least two samples");
  const double mu = sample_mean(samples);
  const double sd = std::sqrt(sample_variance(samples, mu));
  if (!(sd > 0.0)) throw DegenerateSampleError("gaussian fit: all samples are equal");
  return {mu, sd};
}

NegativeBinomial fit_negbin(std::span<const double> samples) {
  if (samples.size() < 2) throw DegenerateSampleError("negbin fit needs at least two samples");
  const double mu = sample_mean(samples);
  const double var = sample_variance(samples, mu);
  if (!(mu > 0.0) || !(var > mu)) {
    throw UnderdispersedError("negbin fit: variance " + std::to_string(var) +
                              " does not exceed mean " + std::to_string(mu));
  }
  return {mu, mu * mu / (var - mu)};
}

}  // namespace hierreconc
