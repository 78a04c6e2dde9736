#include "hierreconc/skill_experiment.hpp"

#include <algorithm>
#include <map>
#include <random>

#include "hierreconc/errors.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/metrics.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc {
namespace {

constexpr std::size_t kFactors[] = {1, 2, 3, 4, 6, 12};
const char* const kLevelNames[] = {"Monthly",   "2-Monthly", "Quarterly",
                                   "4-Monthly", "Biannual",  "Annual"};

std::size_t level_of(std::size_t factor) {
  for (std::size_t l = 0; l < std::size(kFactors); ++l) {
    if (kFactors[l] == factor) return l;
  }
  throw std::logic_error("unexpected aggregation factor");
}

std::vector<double> block_sums(std::span<const double> x, std::size_t f) {
  std::vector<double> out(x.size() / f, 0.0);
  for (std::size_t t = 0; t < out.size() * f; ++t) out[t / f] += x[t];
  return out;
}

// Negative binomial fit, or Poisson when the sample is not overdispersed.
ForecastDistribution fit_counts(std::span<const double> x) {
  try {
    return fit_negbin(x);
  } catch (const Error&) {
    double m = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    return Poisson{std::max(m, 1e-3)};
  }
}

// First-order count autoregression mu_t = a + b y_{t-1}, fitted by
// conditional least squares with 0 <= b < 1. The h-step mean iterates the
// recursion from the last observation; dispersion comes from the one-step
// residual variance. Falls back to an i.i.d. fit on short or flat histories.
std::vector<ForecastDistribution> autoregressive_forecasts(std::span<const double> x,
                                                           std::size_t horizons) {
  const std::size_t n = x.size();
  double mean_x = 0.0;
  for (double v : x) mean_x += v;
  mean_x /= static_cast<double>(n);
  if (n < 6) return std::vector<ForecastDistribution>(horizons, fit_counts(x));

  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double m = static_cast<double>(n - 1);
  for (std::size_t t = 1; t < n; ++t) {
    sx += x[t - 1];
    sy += x[t];
    sxx += x[t - 1] * x[t - 1];
    sxy += x[t - 1] * x[t];
  }
  const double vx = sxx - sx * sx / m;
  double b = vx > 0.0 ? (sxy - sx * sy / m) / vx : 0.0;
  b = std::clamp(b, 0.0, 0.95);
  const double a = std::max((sy - b * sx) / m, 1e-3);

  double resid_var = 0.0, fitted_mean = 0.0;
  for (std::size_t t = 1; t < n; ++t) {
    const double mu = a + b * x[t - 1];
    resid_var += (x[t] - mu) * (x[t] - mu);
    fitted_mean += mu;
  }
  resid_var /= m - 2.0;
  fitted_mean /= m;
  // Overdispersion relative to the fitted mean, shared across horizons.
  const double excess = resid_var - fitted_mean;

  std::vector<ForecastDistribution> out;
  double mu = x[n - 1];
  for (std::size_t h = 0; h < horizons; ++h) {
    mu = a + b * mu;
    if (excess > 0.0) {
      out.push_back(NegativeBinomial{mu, fitted_mean * fitted_mean / excess});
    } else {
      out.push_back(Poisson{mu});
    }
  }
  return out;
}

double skill_or_zero(double metric_new, double metric_base) {
  if (metric_new == 0.0 && metric_base == 0.0) return 0.0;
  return skill_score(metric_new, metric_base);
}

}  // namespace

SkillExperimentResult run_skill_experiment(const SkillExperimentConfig& cfg) {
  if (cfg.train_months == 0 || cfg.train_months % 12 != 0) {
    throw std::invalid_argument("train_months must be a positive multiple of 12");
  }
  const GroupedStructure st = temporal_structure(12, {2, 3, 4, 6, 12});
  const StructureView s = st;
  const std::size_t nu = st.n_upper();
  const std::size_t nodes = st.n_nodes();
  const std::size_t n_levels = std::size(kFactors);

  // Level and aggregation factor of every node in [upper; bottom] order.
  std::vector<std::size_t> node_factor(nodes, 1);
  for (std::size_t r = 0; r < nu; ++r) node_factor[r] = st.constraints()[r].size();

  SkillExperimentResult result;
  result.levels.assign(std::begin(kLevelNames), std::end(kLevelNames));
  std::vector<double> mase_sum(n_levels, 0.0), mis_sum(n_levels, 0.0);
  std::vector<std::size_t> mase_count(n_levels, 0), mis_count(n_levels, 0);
  double es_sum = 0.0;

  const Rng root(cfg.seed);
  for (std::size_t i = 0; i < cfg.n_series; ++i) {
    const Rng series_rng = root.substream(i);
    Rng truth_rng = series_rng.substream(0);
    std::uniform_real_distribution<double> mu_dist(cfg.mean_lo, cfg.mean_hi);
    std::uniform_real_distribution<double> k_dist(cfg.dispersion_lo, cfg.dispersion_hi);
    const double mu = mu_dist(truth_rng.engine());
    const double k = k_dist(truth_rng.engine());
    const auto y = draw(NegativeBinomial{mu, k}, cfg.train_months + 12, truth_rng);
    const std::span<const double> train(y.data(), cfg.train_months);
    const std::span<const double> test(y.data() + cfg.train_months, 12);
    const auto actual = lift(s, test);

    // One autoregressive base model per level, fitted on that level's
    // aggregated history and forecasting each node of the test year.
    std::vector<std::vector<double>> level_train(n_levels);
    std::vector<std::vector<ForecastDistribution>> level_forecast(n_levels);
    for (std::size_t l = 0; l < n_levels; ++l) {
      level_train[l] = block_sums(train, kFactors[l]);
      level_forecast[l] = autoregressive_forecasts(level_train[l], 12 / kFactors[l]);
    }

    // Base forecasts as samples, independent across nodes.
    ParticleMatrix base_joint(cfg.forecast_samples, nodes);
    BaseForecasts fitted;
    for (std::size_t node = 0; node < nodes; ++node) {
      const std::size_t l = level_of(node_factor[node]);
      const std::size_t h = node < nu ? st.constraints()[node].front() / kFactors[l] : node - nu;
      Rng stream = series_rng.substream(1 + node);
      const auto x = draw(level_forecast[l][h], cfg.forecast_samples, stream);
      std::copy(x.begin(), x.end(), base_joint.col(node).begin());
      (node < nu ? fitted.upper : fitted.bottom).push_back(fit_counts(x));
    }

    Rng rec_rng = series_rng.substream(0x1000);
    const auto weighted = buis_grouped(st, fitted, cfg.n_particles, rec_rng);
    Rng rs = rec_rng.substream(residual_stream());
    const auto rec_joint =
        lift_particles(resample(weighted.particles, weighted.weights, cfg.n_particles, rs), s);

    std::vector<std::vector<double>> mase_skills(n_levels), mis_skills(n_levels);
    std::vector<bool> flat(n_levels, false);
    for (std::size_t node = 0; node < nodes; ++node) {
      const std::size_t l = level_of(node_factor[node]);
      const auto base_col = base_joint.col(node);
      const auto rec_col = rec_joint.col(node);
      mis_skills[l].push_back(skill_or_zero(mis(rec_col, actual[node], cfg.alpha),
                                            mis(base_col, actual[node], cfg.alpha)));
      if (flat[l]) continue;
      try {
        const double one_a[] = {actual[node]};
        const double base_pt[] = {median(base_col)};
        const double rec_pt[] = {median(rec_col)};
        mase_skills[l].push_back(skill_or_zero(mase(rec_pt, one_a, level_train[l]),
                                               mase(base_pt, one_a, level_train[l])));
      } catch (const FlatTrainSeriesError&) {
        flat[l] = true;
        mase_skills[l].clear();
      }
    }
    for (std::size_t l = 0; l < n_levels; ++l) {
      auto mean_of = [](const std::vector<double>& v) {
        double t = 0.0;
        for (double x : v) t += x;
        return t / static_cast<double>(v.size());
      };
      if (!mase_skills[l].empty()) {
        mase_sum[l] += mean_of(mase_skills[l]);
        ++mase_count[l];
      }
      if (!mis_skills[l].empty()) {
        mis_sum[l] += mean_of(mis_skills[l]);
        ++mis_count[l];
      }
    }
    es_sum += skill_or_zero(energy_score(rec_joint, actual).value,
                            energy_score(base_joint, actual).value);
    ++result.series;
  }

  for (std::size_t l = 0; l < n_levels; ++l) {
    result.mase_skill.push_back(mase_count[l] ? mase_sum[l] / static_cast<double>(mase_count[l]) : 0.0);
    result.mis_skill.push_back(mis_count[l] ? mis_sum[l] / static_cast<double>(mis_count[l]) : 0.0);
    result.mase_skill_average += result.mase_skill.back() / static_cast<double>(n_levels);
    result.mis_skill_average += result.mis_skill.back() / static_cast<double>(n_levels);
  }
  result.energy_skill = result.series ? es_sum / static_cast<double>(result.series) : 0.0;
  return result;
}

}  // namespace hierreconc
