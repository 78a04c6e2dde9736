// Acceptance suite: one PASS/FAIL line per criterion, with the measured
// values. Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "hierreconc/harness.hpp"
#include "hierreconc/metrics.hpp"
#include "hierreconc/reconcile.hpp"
#include "hierreconc/skill_experiment.hpp"

using namespace hierreconc;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string num(double v, int precision = 3) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(precision);
  os << v;
  return os.str();
}

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& check) {
  const auto start = Clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  if (!v.pass) ++failures;
  std::cout << (v.pass ? "PASS" : "FAIL") << " [" << id << "] " << name << ": " << v.detail << " ("
            << num(seconds_since(start), 1) << " s)" << std::endl;
}

const ExperimentCell& cell(const ExperimentResult& r, Method m, double eps) {
  for (const auto& c : r.cells) {
    if (c.method == m && c.epsilon == eps) return c;
  }
  throw std::logic_error("missing cell");
}

std::string cell_errors(const ExperimentResult& r) {
  for (const auto& row : r.rows) {
    if (!row.error.empty()) return " first error: " + row.error;
  }
  return {};
}

const Hierarchy& quarterly() {
  static const Hierarchy h = build_hierarchy(4, {{{0, 1}, {2, 3}}, {{0, 1, 2, 3}}});
  return h;
}

// Poisson bases on the 4-bottom hierarchy: rates in [1, 3], uppers 30% above
// the sum of their bottom rates.
BaseForecasts quarterly_poisson() {
  Rng rng(606);
  std::uniform_real_distribution<double> u(1.0, 3.0);
  std::vector<double> lb(4);
  for (auto& l : lb) l = u(rng.engine());
  BaseForecasts base;
  for (double l : lb) base.bottom.push_back(Poisson{l});
  for (double s : aggregate(quarterly(), lb)) base.upper.push_back(Poisson{1.3 * s});
  return base;
}

double marginal_tv(const std::vector<double>& exact, const ParticleMatrix& x, std::size_t j) {
  std::vector<double> freq(exact.size(), 0.0);
  double outside = 0.0;
  for (double v : x.col(j)) {
    const auto k = static_cast<std::size_t>(v);
    if (v >= 0 && k < freq.size()) {
      freq[k] += 1.0;
    } else {
      outside += 1.0;
    }
  }
  double tv = outside / static_cast<double>(x.rows());
  for (std::size_t k = 0; k < exact.size(); ++k) {
    tv += std::abs(exact[k] - freq[k] / static_cast<double>(x.rows()));
  }
  return tv / 2.0;
}

// Integrated autocorrelation time from batch means.
double autocorrelation_time(std::span<const double> x) {
  const std::size_t n = x.size();
  const std::size_t batch = static_cast<std::size_t>(std::sqrt(static_cast<double>(n)));
  const std::size_t nb = n / batch;
  const double mean = std::accumulate(x.begin(), x.begin() + nb * batch, 0.0) / static_cast<double>(nb * batch);
  double var = 0.0;
  for (std::size_t i = 0; i < nb * batch; ++i) var += (x[i] - mean) * (x[i] - mean);
  var /= static_cast<double>(nb * batch - 1);
  double bvar = 0.0;
  for (std::size_t b = 0; b < nb; ++b) {
    double m = 0.0;
    for (std::size_t i = 0; i < batch; ++i) m += x[b * batch + i];
    m /= static_cast<double>(batch);
    bvar += (m - mean) * (m - mean);
  }
  bvar /= static_cast<double>(nb - 1);
  return std::max(1.0, static_cast<double>(batch) * bvar / var);
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hier-reconc");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

ExperimentConfig preset_like(StructureKind s, Family f, std::vector<double> eps, std::vector<Method> methods) {
  ExperimentConfig c;
  c.structure = s;
  c.family = f;
  c.epsilon_levels = std::move(eps);
  c.methods = std::move(methods);
  c.n_particles = 100000;
  c.repetitions = 30;
  c.seed = 42;
  c.reference_samples = 1000000;
  return c;
}

}  // namespace

int main() {
  std::cout << "hier-reconc acceptance suite" << std::endl;

  // Criteria 1 and 2 share one Gaussian binary grid.
  ExperimentResult gauss_binary;
  double gauss_binary_seconds = 0.0;
  {
    const auto start = Clock::now();
    gauss_binary = run_experiment(preset_like(StructureKind::binary_8, Family::gaussian, {0.1, 0.3, 0.5, 0.8},
                                              {Method::analytical, Method::is, Method::buis}));
    gauss_binary_seconds = seconds_since(start);
  }

  report(1, "Gaussian binary grid, BUIS MAPE and IS degradation", [&] {
    bool ok = gauss_binary_seconds < 120.0;
    std::string d;
    for (double eps : {0.1, 0.3, 0.5, 0.8}) {
      const double m = cell(gauss_binary, Method::buis, eps).mean_mape;
      ok = ok && m <= (eps <= 0.5 ? 0.5 : 1.0);
      d += "BUIS@" + num(eps, 1) + "=" + num(m, 2) + "% ";
    }
    const double is8 = cell(gauss_binary, Method::is, 0.8).mean_mape;
    const double buis8 = cell(gauss_binary, Method::buis, 0.8).mean_mape;
    ok = ok && is8 >= 10.0 * buis8;
    d += "IS@0.8=" + num(is8, 2) + "% (" + num(is8 / buis8, 1) + "x BUIS); grid " +
         num(gauss_binary_seconds, 1) + " s (limit 120 s)";
    return Verdict{ok, d + cell_errors(gauss_binary)};
  });

  report(2, "Gaussian W2 at eps=0.8, BUIS <= 1/5 of IS", [&] {
    const double is = *cell(gauss_binary, Method::is, 0.8).mean_w2;
    const double bu = *cell(gauss_binary, Method::buis, 0.8).mean_w2;
    return Verdict{bu <= is / 5.0, "BUIS " + num(bu) + " vs IS " + num(is) + " (ratio " + num(bu / is) +
                                       ", limit 0.200)"};
  });

  report(3, "Gaussian weekly, grouped BUIS MAPE <= 0.5% and < 10 s per run", [&] {
    const auto r = run_experiment(
        preset_like(StructureKind::weekly, Family::gaussian, {0.1, 0.3, 0.5}, {Method::buis}));
    bool ok = true;
    std::string d;
    for (double eps : {0.1, 0.3, 0.5}) {
      const auto& c = cell(r, Method::buis, eps);
      ok = ok && c.failed == 0 && c.mean_mape <= 0.5 && c.mean_seconds < 10.0;
      d += "eps " + num(eps, 1) + ": " + num(c.mean_mape, 2) + "% in " + num(c.mean_seconds, 2) + " s; ";
    }
    return Verdict{ok, d + cell_errors(r)};
  });

  report(4, "Poisson binary, BUIS and sample BUIS vs MH <= 1%, gap <= 0.2pp", [&] {
    const auto r = run_experiment(preset_like(StructureKind::binary_8, Family::poisson, {0.1, 0.3, 0.5},
                                              {Method::buis, Method::buis_samples}));
    bool ok = true;
    std::string d;
    for (double eps : {0.1, 0.3, 0.5}) {
      const auto& a = cell(r, Method::buis, eps);
      const auto& b = cell(r, Method::buis_samples, eps);
      const double gap = std::abs(a.mean_mape - b.mean_mape);
      ok = ok && a.failed == 0 && b.failed == 0 && a.mean_mape <= 1.0 && b.mean_mape <= 1.0 && gap <= 0.2;
      d += "eps " + num(eps, 1) + ": " + num(a.mean_mape, 2) + "% / " + num(b.mean_mape, 2) + "% gap " +
           num(gap, 2) + "; ";
    }
    return Verdict{ok, d + cell_errors(r)};
  });

  report(5, "Poisson weekly, grouped BUIS vs MH <= 1% (eps<=0.3), <= 2% (eps=0.5)", [&] {
    const auto r = run_experiment(
        preset_like(StructureKind::weekly, Family::poisson, {0.1, 0.3, 0.5}, {Method::buis}));
    bool ok = true;
    std::string d;
    for (double eps : {0.1, 0.3, 0.5}) {
      const auto& c = cell(r, Method::buis, eps);
      ok = ok && c.failed == 0 && c.mean_mape <= (eps < 0.4 ? 1.0 : 2.0);
      d += "eps " + num(eps, 1) + ": " + num(c.mean_mape, 2) + "%; ";
    }
    return Verdict{ok, d + cell_errors(r)};
  });

  report(6, "Discrete oracle, marginal TV <= 0.02 for buis, plain_is, mh", [&] {
    const auto base = quarterly_poisson();
    const auto oracle = bruteforce_discrete(quarterly(), base, 25);
    const std::size_t n = 100000;
    Rng r1(61), r2(62), r3(63);
    const auto bu = buis(quarterly(), base, n, r1).particles;
    auto w = plain_is(quarterly(), base, n, r2);
    Rng rs = r2.substream(residual_stream());
    const auto is = resample(w.particles, w.weights, n, rs);
    const auto mh = mh_reconcile(quarterly(), base, n, n / 4, 1.0, r3).particles;
    double worst[3] = {0, 0, 0};
    for (std::size_t j = 0; j < 4; ++j) {
      const auto exact = oracle.marginal(j);
      worst[0] = std::max(worst[0], marginal_tv(exact, bu, j));
      worst[1] = std::max(worst[1], marginal_tv(exact, is, j));
      worst[2] = std::max(worst[2], marginal_tv(exact, mh, j));
    }
    const bool ok = worst[0] <= 0.02 && worst[1] <= 0.02 && worst[2] <= 0.02;
    return Verdict{ok, "max TV buis " + num(worst[0], 4) + ", plain_is " + num(worst[1], 4) + ", mh " +
                           num(worst[2], 4)};
  });

  report(7, "2-bottom closed form vs grid integration and sampling", [&] {
    const Hierarchy h = build_hierarchy(2, {{{0, 1}}});
    const BaseForecasts base{{Gaussian{4, 1}}, {Gaussian{1, 1}, Gaussian{1, 1}}};
    const auto g = reconcile_gaussian(h, base);
    const Eigen::Vector2d m_expected(5.0 / 3.0, 5.0 / 3.0);
    Eigen::Matrix2d c_expected;
    c_expected << 2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0, 2.0 / 3.0;
    const double closed = std::max((g.mean - m_expected).cwiseAbs().maxCoeff(),
                                   (g.covariance - c_expected).cwiseAbs().maxCoeff());

    // Midpoint rule on [-8, 10]^2 for the unnormalized conditional density.
    const int k = 1800;
    const double lo = -8.0, step = 18.0 / k;
    double z = 0, m1 = 0, m2 = 0, s11 = 0, s12 = 0, s22 = 0;
    for (int i = 0; i < k; ++i) {
      const double b1 = lo + (i + 0.5) * step;
      for (int j = 0; j < k; ++j) {
        const double b2 = lo + (j + 0.5) * step;
        const double p = std::exp(-0.5 * ((b1 - 1) * (b1 - 1) + (b2 - 1) * (b2 - 1) + (b1 + b2 - 4) * (b1 + b2 - 4)));
        z += p;
        m1 += p * b1;
        m2 += p * b2;
        s11 += p * b1 * b1;
        s12 += p * b1 * b2;
        s22 += p * b2 * b2;
      }
    }
    m1 /= z, m2 /= z;
    const double grid_err = std::max({std::abs(m1 - g.mean(0)), std::abs(m2 - g.mean(1)),
                                      std::abs(s11 / z - m1 * m1 - g.covariance(0, 0)),
                                      std::abs(s12 / z - m1 * m2 - g.covariance(0, 1)),
                                      std::abs(s22 / z - m2 * m2 - g.covariance(1, 1))});

    const std::size_t n = 100000;
    Rng r1(71), r2(72);
    const auto bu = buis(h, base, n, r1).particles;
    const auto mh = mh_reconcile(h, base, n, n / 4, 1.0, r2).particles;
    // BUIS output is resampled from weighted particles, so its Monte Carlo
    // variance is about var * (1/ESS + 1/n). The bottom sum is N(2, 2) and the
    // weights are exp(-a (s - 4)^2 / 2), so E[w^k] has a closed form.
    auto gauss_moment = [](double a) { return std::exp(-4.0 * a / (1.0 + 4.0 * a)) / std::sqrt(1.0 + 4.0 * a); };
    const double ess_frac = gauss_moment(0.5) * gauss_moment(0.5) / gauss_moment(1.0);
    const double resample_inflation = 1.0 + 1.0 / ess_frac;
    auto z_scores = [&](const ParticleMatrix& p, bool chain) {
      double worst = 0.0;
      const auto mu = p.mean();
      const auto cov = p.covariance();
      for (std::size_t j = 0; j < 2; ++j) {
        const double tau = chain ? autocorrelation_time(p.col(j)) : resample_inflation;
        const double se_mean = std::sqrt(cov(j, j) * tau / static_cast<double>(n));
        worst = std::max(worst, std::abs(mu(j) - g.mean(j)) / se_mean);
        const double se_var = cov(j, j) * std::sqrt(2.0 * tau / static_cast<double>(n));
        worst = std::max(worst, std::abs(cov(j, j) - g.covariance(j, j)) / se_var);
      }
      return worst;
    };
    const double zb = z_scores(bu, false), zm = z_scores(mh, true);
    const bool ok = closed <= 1e-12 && grid_err <= 1e-4 && zb <= 3.0 && zm <= 3.0;
    return Verdict{ok, "closed-form error " + num(closed, 15) + ", grid error " + std::to_string(grid_err) +
                           ", worst |z| buis " + num(zb, 2) + ", mh " + num(zm, 2)};
  });

  report(8, "Odds ratios preserved to 1e-10 by the exact posterior", [&] {
    const auto post = bruteforce_discrete(quarterly(), quarterly_poisson(), 25);
    // Every pairwise ratio error is bounded by exp(max d - min d) - 1 with
    // d = log pmf - log joint; the bound is attained by the extreme pair.
    double lo = INFINITY, hi = -INFINITY;
    std::size_t used = 0;
    for (std::size_t i = 0; i < post.pmf.size(); ++i) {
      if (!std::isfinite(post.log_joint[i])) continue;
      if (post.pmf[i] == 0.0) return Verdict{false, "pmf underflow at a point with nonzero density"};
      const double d = std::log(post.pmf[i]) - post.log_joint[i];
      lo = std::min(lo, d);
      hi = std::max(hi, d);
      ++used;
    }
    const double err = std::expm1(hi - lo);
    return Verdict{err <= 1e-10, "max relative ratio error " + std::to_string(err) + " over " +
                                     std::to_string(used) + " support points"};
  });

  report(9, "minT with diagonal W equals the conditioning mean to 1e-8", [&] {
    std::mt19937_64 gen(909);
    std::uniform_real_distribution<double> mean(5, 10), sd(0.5, 4);
    const Hierarchy h = binary_hierarchy(3);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
      BaseForecasts base;
      Eigen::VectorXd y(15);
      Eigen::MatrixXd w = Eigen::MatrixXd::Zero(15, 15);
      for (int i = 0; i < 15; ++i) {
        const double m = mean(gen) * (i < 7 ? 3 : 1), s = sd(gen);
        y(i) = m;
        w(i, i) = s * s;
        (i < 7 ? base.upper : base.bottom).push_back(Gaussian{m, s});
      }
      const auto r = point_reconcile(y, h, PointMethod::mint, w);
      worst = std::max(worst, (r.tail(8) - reconcile_gaussian(h, base).mean).cwiseAbs().maxCoeff());
    }
    return Verdict{worst <= 1e-8, "max abs difference " + std::to_string(worst)};
  });

  report(10, "BUIS <= 1/50 of MH time at matched ESS, weekly Poisson", [&] {
    const auto s = make_structure(StructureKind::weekly);
    const auto& g = std::get<GroupedStructure>(s);
    Rng means(1010);
    const auto base = gen_synthetic_base(g, Family::poisson, 0.3, means);
    const std::size_t n = 100000;
    Rng r1(1011);
    auto t = Clock::now();
    const auto w = buis_grouped(g, base, n, r1);
    const double buis_s = seconds_since(t);
    const double ess = effective_sample_size(w.weights);

    // Pilot chain: cost per step and the worst autocorrelation time over
    // bottoms and the annual total; the matched chain needs ess * tau steps.
    const std::size_t pilot = 1000000;
    Rng r2(1012);
    t = Clock::now();
    const auto chain = mh_reconcile(g, base, pilot, pilot / 4, 1.0, r2).particles;
    const double per_step = seconds_since(t) / static_cast<double>(pilot + pilot / 4);
    double tau = 1.0;
    std::vector<double> total(pilot, 0.0);
    for (std::size_t j = 0; j < g.n_bottom(); ++j) {
      tau = std::max(tau, autocorrelation_time(chain.col(j)));
      for (std::size_t i = 0; i < pilot; ++i) total[i] += chain(i, j);
    }
    tau = std::max(tau, autocorrelation_time(total));
    const double steps = ess * tau;
    const double mh_s = per_step * steps * 1.25;  // plus a quarter for burn-in
    const double ratio = buis_s / mh_s;
    return Verdict{ratio <= 1.0 / 50.0, "BUIS " + num(buis_s, 2) + " s (ESS " + num(ess, 0) + "), MH tau " +
                                            num(tau, 0) + " -> " + num(steps, 0) + " steps, " + num(mh_s, 1) +
                                            " s; ratio " + num(ratio, 4) + " (limit 0.0200)"};
  });

  report(11, "Synthetic count series, mean MASE and MIS skill >= 0 over 50 series", [&] {
    const auto r = run_skill_experiment(SkillExperimentConfig{});
    std::string d = "MASE skill " + num(r.mase_skill_average, 4) + ", MIS skill " + num(r.mis_skill_average, 4) +
                    ", ES skill " + num(r.energy_skill, 4) + " over " + std::to_string(r.series) + " series";
    return Verdict{r.series == 50 && r.mase_skill_average >= 0.0 && r.mis_skill_average >= 0.0, d};
  });

  report(12, "CLI determinism, byte-identical primary outputs", [&] {
    const fs::path dir = fs::temp_directory_path() / "hierreconc_acceptance_cli";
    fs::remove_all(dir);
    fs::create_directories(dir);
    std::ofstream(dir / "weekly.json") << R"({"temporal": {"base_periods": 52, "factors": [2,4,13,26,52]}})";
    {
      Rng means(1212);
      const auto s = make_structure(StructureKind::weekly);
      const auto base = gen_synthetic_base(view(s), Family::poisson, 0.3, means);
      std::ofstream f(dir / "forecasts.json");
      f << "{\"upper\": [";
      for (std::size_t i = 0; i < base.upper.size(); ++i) {
        f << (i ? "," : "") << "{\"family\":\"poisson\",\"rate\":" << std::get<Poisson>(base.upper[i]).rate << "}";
      }
      f << "], \"bottom\": [";
      for (std::size_t i = 0; i < base.bottom.size(); ++i) {
        f << (i ? "," : "") << "{\"family\":\"poisson\",\"rate\":" << std::get<Poisson>(base.bottom[i]).rate << "}";
      }
      f << "]}";
    }
    std::ofstream(dir / "synth.json") << R"({"structure": "binary_8", "family": "gaussian",
      "epsilon_levels": [0.1, 0.8], "n_particles": 10000, "repetitions": 3,
      "methods": ["analytical", "is", "buis", "mh"], "seed": 5})";

    std::vector<std::string> compared;
    bool ok = true;
    // Runs one command twice, writing to <tag>_a and <tag>_b, and compares
    // the named outputs. An empty file name means --out names a file.
    auto twice = [&](const std::string& tag, const std::vector<std::string>& args,
                     const std::vector<std::string>& files) {
      const bool out_is_file = files.size() == 1 && files[0].empty();
      auto target = [&](const char* run) { return dir / (tag + "_" + run + (out_is_file ? ".csv" : "")); };
      for (const char* run : {"a", "b"}) {
        auto full = args;
        full.push_back("--out");
        full.push_back(target(run).string());
        if (run_cli(full) != 0) {
          ok = false;
          return;
        }
      }
      for (const auto& f : files) {
        const auto a = slurp(out_is_file ? target("a") : target("a") / f);
        const auto b = slurp(out_is_file ? target("b") : target("b") / f);
        ok = ok && !a.empty() && a == b;
        compared.push_back(tag + (f.empty() ? "" : "/" + f));
      }
    };
    const std::string st = (dir / "weekly.json").string(), fc = (dir / "forecasts.json").string();
    for (const char* m : {"buis", "is", "mh"}) {
      twice(std::string("reconcile_") + m,
            {"reconcile", "--structure", st, "--forecasts", fc, "--method", m, "--n", "20000", "--seed", "7"},
            {"particles.csv"});
    }
    twice("synth", {"synth", (dir / "synth.json").string()}, {"results.csv", "summary.txt"});
    const std::string particles = (dir / "reconcile_buis_a" / "particles.csv").string();
    {
      std::ofstream act(dir / "actuals.csv"), tr(dir / "train.csv");
      std::ostringstream header;
      for (int j = 0; j < 52; ++j) header << (j ? "," : "") << "b" << j;
      act << header.str() << "\n";
      tr << header.str() << "\n";
      for (int j = 0; j < 52; ++j) act << (j ? "," : "") << 6 + j % 5;
      act << "\n";
      for (int t = 0; t < 10; ++t) {
        for (int j = 0; j < 52; ++j) tr << (j ? "," : "") << (t * 7 + j * 3) % 11;
        tr << "\n";
      }
    }
    twice("score",
          {"score", "--particles", particles, "--actuals", (dir / "actuals.csv").string(), "--train",
           (dir / "train.csv").string()},
          {""});
    fs::remove_all(dir);
    std::string d = "compared";
    for (const auto& c : compared) d += " " + c;
    return Verdict{ok, d};
  });

  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
