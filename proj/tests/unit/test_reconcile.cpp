#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hierreconc/errors.hpp"
#include "hierreconc/metrics.hpp"
#include "hierreconc/reconcile.hpp"

using namespace hierreconc;

namespace {

const Hierarchy& pair_tree() {
  static const Hierarchy h = build_hierarchy(2, {{{0, 1}}});
  return h;
}

const Hierarchy& quarterly() {
  static const Hierarchy h = build_hierarchy(4, {{{0, 1}, {2, 3}}, {{0, 1, 2, 3}}});
  return h;
}

BaseForecasts pair_gaussian() {
  return {{Gaussian{4, 1}}, {Gaussian{1, 1}, Gaussian{1, 1}}};
}

BaseForecasts gaussian_base(StructureView s, std::span<const double> mb, double eps, double sb,
                            double su) {
  BaseForecasts base;
  for (double m : mb) base.bottom.push_back(Gaussian{m, sb});
  for (double u : aggregate(s, mb)) base.upper.push_back(Gaussian{(1 + eps) * u, su});
  return base;
}

BaseForecasts quarterly_poisson() {
  const std::vector<double> lb{1.0, 2.0, 3.0, 1.5};
  BaseForecasts base;
  for (double l : lb) base.bottom.push_back(Poisson{l});
  for (double u : aggregate(quarterly(), lb)) base.upper.push_back(Poisson{1.3 * u});
  return base;
}

double total_variation(const std::vector<double>& p, const ParticleMatrix& x, std::size_t j) {
  std::vector<double> q(p.size(), 0.0);
  for (double v : x.col(j)) {
    const auto k = static_cast<std::size_t>(v);
    if (k < q.size()) q[k] += 1.0 / static_cast<double>(x.rows());
  }
  double tv = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) tv += std::abs(p[k] - q[k]);
  return tv / 2.0;
}

}  // namespace

TEST(ReconcileGaussian, PairClosedForm) {
  const auto r = reconcile_gaussian(pair_tree(), pair_gaussian());
  EXPECT_NEAR(r.mean(0), 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.mean(1), 5.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.covariance(0, 0), 2.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.covariance(0, 1), -1.0 / 3.0, 1e-12);
  EXPECT_NEAR(r.covariance(1, 1), 2.0 / 3.0, 1e-12);
}

TEST(ReconcileGaussian, CoherentMeansUnchanged) {
  const std::vector<double> mb{5, 6, 7, 8, 9, 5.5, 6.5, 7.5};
  const Hierarchy h = binary_hierarchy(3);
  const auto r = reconcile_gaussian(h, gaussian_base(h, mb, 0.0, 2, 3));
  for (std::size_t j = 0; j < mb.size(); ++j) EXPECT_NEAR(r.mean(j), mb[j], 1e-12);
}

TEST(ReconcileGaussian, UninformativeUpper) {
  const std::vector<double> mb{5, 6, 7, 8};
  const auto r = reconcile_gaussian(quarterly(), gaussian_base(quarterly(), mb, 0.5, 2, 1e6));
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_NEAR(r.mean(j), mb[j], 1e-6 * mb[j]);
    EXPECT_NEAR(r.covariance(j, j), 4.0, 4e-6);
  }
}

TEST(PlainIs, PoissonPairMatchesOracle) {
  const BaseForecasts base{{Poisson{4}}, {Poisson{1}, Poisson{1}}};
  Rng rng(11);
  const auto w = plain_is(pair_tree(), base, 100000, rng);
  const auto oracle = bruteforce_discrete(pair_tree(), base, 30);
  const double target = oracle.mean().sum();
  double est = 0.0, second = 0.0;
  for (std::size_t i = 0; i < w.particles.rows(); ++i) {
    const double s = w.particles(i, 0) + w.particles(i, 1);
    est += w.weights[i] * s;
    second += w.weights[i] * s * s;
  }
  const double var = second - est * est;
  const double se = std::sqrt(var / effective_sample_size(w.weights));
  EXPECT_NEAR(est, target, 3 * se);
}

TEST(PlainIs, UninformativeUpperGivesUniformWeights) {
  const BaseForecasts flat{{Gaussian{0, 1e12}}, {Gaussian{0, 1}, Gaussian{0, 1}}};
  Rng rng(1);
  const auto w = plain_is(pair_tree(), flat, 1000, rng);
  for (double x : w.weights) EXPECT_NEAR(x, 1e-3, 1e-12);
}

TEST(PlainIs, SupportMismatchThrows) {
  const BaseForecasts base{{Poisson{100}}, {make_empirical(std::vector<std::int64_t>{0, 1}),
                                            make_empirical(std::vector<std::int64_t>{0, 1})}};
  const BaseForecasts upper_emp{{make_empirical(std::vector<std::int64_t>{50, 60})},
                                {Poisson{1}, Poisson{1}}};
  Rng rng(1);
  EXPECT_THROW(buis_sample_based(pair_tree(), upper_emp, 1000, rng), AllZeroWeightsError);
  EXPECT_NO_THROW(plain_is(pair_tree(), base, 1000, rng));
}

TEST(Buis, QuarterlyTraceOrder) {
  Rng rng(1);
  std::vector<BuisStep> trace;
  buis(quarterly(), quarterly_poisson(), 1000, rng, {}, &trace);
  ASSERT_EQ(trace.size(), 3u);
  EXPECT_EQ(trace[0].level, 0u);
  EXPECT_EQ(trace[0].leaves, (LeafSet{0, 1}));
  EXPECT_EQ(trace[0].row, 1u);
  EXPECT_EQ(trace[1].level, 0u);
  EXPECT_EQ(trace[1].leaves, (LeafSet{2, 3}));
  EXPECT_EQ(trace[1].row, 2u);
  EXPECT_EQ(trace[2].level, 1u);
  EXPECT_EQ(trace[2].leaves, (LeafSet{0, 1, 2, 3}));
  EXPECT_EQ(trace[2].row, 0u);
}

TEST(Buis, QuarterlyHandTrace) {
  // Replays the algorithm by hand on the 4-bottom hierarchy with the same
  // substreams and checks the particles match exactly.
  const BaseForecasts base = quarterly_poisson();
  const std::size_t n = 2000;
  Rng rng(99);
  const auto got = buis(quarterly(), base, n, rng);

  ParticleMatrix b(n, 4);
  for (std::size_t j = 0; j < 4; ++j) {
    Rng sub = rng.substream(bottom_stream(j));
    const auto d = draw(base.bottom[j], n, sub);
    std::copy(d.begin(), d.end(), b.col(j).begin());
  }
  auto step = [&](std::size_t row, const LeafSet& leaves) {
    std::vector<double> lw(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0;
      for (auto j : leaves) s += b(i, j);
      lw[i] = log_density(base.upper[row], s);
    }
    const auto w = normalize_log_weights(lw);
    Rng sub = rng.substream(node_stream(row));
    const auto idx = resample_indices(w, n, sub);
    ParticleMatrix next = b;
    for (auto j : leaves) {
      for (std::size_t i = 0; i < n; ++i) next(i, j) = b(idx[i], j);
    }
    b = next;
  };
  step(1, {0, 1});
  step(2, {2, 3});
  step(0, {0, 1, 2, 3});
  EXPECT_EQ(got.particles, b);
}

TEST(Buis, GaussianBinaryMeanAccuracy) {
  const Hierarchy h = binary_hierarchy(3);
  Rng gen(5);
  std::vector<double> mb(8);
  for (auto& m : mb) m = 5 + 5 * gen.uniform();
  const auto base = gaussian_base(h, mb, 0.5, 2, 3);
  const auto exact = reconcile_gaussian(h, base);
  double total = 0.0;
  const int reps = 5;
  for (int r = 0; r < reps; ++r) {
    Rng rng(100 + r);
    const Eigen::VectorXd m = buis(h, base, 100000, rng).particles.mean();
    const auto est = lift(h, std::vector<double>(m.data(), m.data() + 8));
    const auto ref = lift(h, std::vector<double>(exact.mean.data(), exact.mean.data() + 8));
    total += mape(est, ref);
  }
  EXPECT_LE(total / reps, 0.5);
}

TEST(Buis, UninformativeUppersKeepMarginals) {
  const std::vector<double> mb{5, 6, 7, 8};
  const auto base = gaussian_base(quarterly(), mb, 0.0, 2, 1e9);
  Rng rng(3);
  const auto out = buis(quarterly(), base, 100000, rng);
  // Kolmogorov-Smirnov distance of the first marginal against N(5, 2).
  std::vector<double> x(out.particles.col(0).begin(), out.particles.col(0).end());
  std::sort(x.begin(), x.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double f = 0.5 * std::erfc(-(x[i] - 5.0) / (2.0 * std::sqrt(2.0)));
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / x.size()),
                   std::abs(f - static_cast<double>(i + 1) / x.size())});
  }
  EXPECT_LE(ks, 0.01);
}

TEST(Buis, RejectsSampleOnlyUppers) {
  const BaseForecasts base{{make_empirical(std::vector<std::int64_t>{2, 3})}, {Poisson{1}, Poisson{1}}};
  Rng rng(1);
  EXPECT_THROW(buis(pair_tree(), base, 10, rng), std::invalid_argument);
}

TEST(Buis, DeterministicGivenSeed) {
  Rng a(7), b(7);
  EXPECT_EQ(buis(quarterly(), quarterly_poisson(), 5000, a).particles,
            buis(quarterly(), quarterly_poisson(), 5000, b).particles);
}

TEST(Buis, ThreadsDoNotChangeOutput) {
  const Hierarchy h = binary_hierarchy(3);
  const std::vector<double> mb{5, 6, 7, 8, 9, 5.5, 6.5, 7.5};
  const auto base = gaussian_base(h, mb, 0.3, 2, 3);
  SamplerOptions opt;
  opt.threads = 4;
  Rng a(7), b(7);
  EXPECT_EQ(buis(h, base, 20000, a).particles, buis(h, base, 20000, b, opt).particles);
}

TEST(BuisSampleBased, AtomUpperForcesExactConstraint) {
  const BaseForecasts base{{make_empirical(std::vector<std::int64_t>{4})}, {Poisson{2}, Poisson{2}}};
  Rng rng(2);
  const auto out = buis_sample_based(pair_tree(), base, 10000, rng);
  for (std::size_t i = 0; i < out.particles.rows(); ++i) {
    EXPECT_EQ(out.particles(i, 0) + out.particles(i, 1), 4.0);
  }
}

TEST(BuisSampleBased, PoissonUppersAsSamplesMatchDensity) {
  const Hierarchy h = binary_hierarchy(3);
  const std::vector<double> lb{5, 6, 7, 8, 9, 5.5, 6.5, 7.5};
  BaseForecasts dens, samp;
  for (double l : lb) dens.bottom.push_back(Poisson{l});
  samp.bottom = dens.bottom;
  Rng draws(17);
  for (double u : aggregate(h, lb)) {
    dens.upper.push_back(Poisson{1.3 * u});
    const auto d = draw(Poisson{1.3 * u}, 100000, draws);
    samp.upper.push_back(make_empirical(std::vector<std::int64_t>(d.begin(), d.end())));
  }
  Rng a(1), b(2);
  const auto m1 = buis(h, dens, 100000, a).particles.mean();
  const auto m2 = buis_sample_based(h, samp, 100000, b).particles.mean();
  const auto l1 = lift(h, std::vector<double>(m1.data(), m1.data() + 8));
  const auto l2 = lift(h, std::vector<double>(m2.data(), m2.data() + 8));
  EXPECT_LE(mape(l2, l1), 0.5);
}

TEST(BuisSampleBased, GaussianUppersAsSamples) {
  const std::vector<double> mb{5, 6, 7, 8};
  const auto dens = gaussian_base(quarterly(), mb, 0.1, 2, 3);
  BaseForecasts samp = dens;
  Rng draws(4);
  for (auto& u : samp.upper) u = make_empirical(draw(u, 100000, draws));
  const auto exact = reconcile_gaussian(quarterly(), dens);
  Rng rng(5);
  const auto m = buis_sample_based(quarterly(), samp, 100000, rng).particles.mean();
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(m(j), exact.mean(j), 0.01 * exact.mean(j));
}

TEST(BuisGrouped, TreeInputMatchesBuis) {
  const auto g = as_grouped(quarterly());
  Rng a(3), b(3);
  const auto w = buis_grouped(g, quarterly_poisson(), 5000, a);
  const auto r = buis(quarterly(), quarterly_poisson(), 5000, b);
  EXPECT_EQ(w.particles, r.particles);
  for (double x : w.weights) EXPECT_DOUBLE_EQ(x, 1.0 / 5000);
}

TEST(BuisGrouped, WeeklyGaussianLowIncoherence) {
  const auto g = temporal_structure(52, {2, 4, 13, 26, 52});
  Rng gen(8);
  std::vector<double> mb(52);
  for (auto& m : mb) m = 5 + 5 * gen.uniform();
  const auto base = gaussian_base(g, mb, 0.1, 2, 3);
  const auto exact = reconcile_gaussian(g, base);
  Rng rng(9);
  const auto w = buis_grouped(g, base, 100000, rng);
  const auto m = w.particles.mean(w.weights);
  const auto est = lift(g, std::vector<double>(m.data(), m.data() + 52));
  const auto ref = lift(g, std::vector<double>(exact.mean.data(), exact.mean.data() + 52));
  EXPECT_LE(mape(est, ref), 0.5);
  double total = 0.0;
  for (double x : w.weights) total += x;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(BuisGrouped, InvariantToSubhierarchyChoice) {
  // {0,1},{2,3},{1,2},{0,1,2,3}: either {0,1},{2,3} or {1,2} can sit below
  // the total. Both decompositions must give the same posterior.
  const std::vector<LeafSet> c{{0, 1}, {2, 3}, {1, 2}, {0, 1, 2, 3}};
  const auto g1 = extract_max_subhierarchy(c, 4);
  ASSERT_EQ(g1.extra_constraints().size(), 1u);
  const Hierarchy alt = build_hierarchy(4, {{{1, 2}}, {{0, 1, 2, 3}}});
  const GroupedStructure g2(4, c, alt, {3, 2}, {0, 1});

  const std::vector<double> lb{1.0, 2.0, 1.5, 2.5};
  BaseForecasts base;
  for (double l : lb) base.bottom.push_back(Poisson{l});
  for (const auto& leaves : c) {
    double s = 0;
    for (auto j : leaves) s += lb[j];
    base.upper.push_back(Poisson{1.2 * s});
  }
  const auto oracle = bruteforce_discrete(StructureView(4, c), base, 25);
  for (const auto* g : {&g1, &g2}) {
    Rng rng(21);
    const auto w = buis_grouped(*g, base, 100000, rng);
    const auto m = w.particles.mean(w.weights);
    const double ess = effective_sample_size(w.weights);
    for (std::size_t j = 0; j < 4; ++j) {
      const double sd = std::sqrt(oracle.mean()(j));  // loose scale for the standard error
      EXPECT_NEAR(m(j), oracle.mean()(j), 3 * sd / std::sqrt(ess) + 1e-3);
    }
  }
}

TEST(Mh, PairGaussianMean) {
  Rng rng(4);
  const auto out = mh_reconcile(pair_tree(), pair_gaussian(), 100000, 25000, 1.0, rng);
  const auto m = out.particles.mean();
  EXPECT_NEAR(m(0), 5.0 / 3.0, 0.01 * 5.0 / 3.0 * 2);
  EXPECT_NEAR(m(1), 5.0 / 3.0, 0.01 * 5.0 / 3.0 * 2);
  ASSERT_TRUE(out.diagnostics.acceptance_rate.has_value());
  EXPECT_GT(*out.diagnostics.acceptance_rate, 0.1);
}

TEST(Mh, TinyStepAlmostAlwaysAccepts) {
  Rng rng(4);
  const auto out = mh_reconcile(pair_tree(), pair_gaussian(), 1000, 10, 1e-12, rng);
  EXPECT_GT(*out.diagnostics.acceptance_rate, 0.99);
  EXPECT_NEAR(out.particles(999, 0), out.particles(0, 0), 1e-3);
}

TEST(Mh, ZeroDensityStart) {
  const BaseForecasts base{{make_empirical(std::vector<std::int64_t>{50})}, {Poisson{1}, Poisson{1}}};
  Rng rng(1);
  EXPECT_THROW(mh_reconcile(pair_tree(), base, 10, 10, 1.0, rng), ZeroDensityStartError);
}

TEST(Mh, PoissonAgreesWithOracle) {
  const BaseForecasts base = quarterly_poisson();
  const auto oracle = bruteforce_discrete(quarterly(), base, 25);
  Rng rng(12);
  const auto out = mh_reconcile(quarterly(), base, 400000, 50000, 1.0, rng);
  for (std::size_t j = 0; j < 4; ++j) {
    EXPECT_LE(total_variation(oracle.marginal(j), out.particles, j), 0.02);
  }
}

TEST(Oracle, SymmetricPair) {
  const BaseForecasts base{{Poisson{4}}, {Poisson{1}, Poisson{1}}};
  const auto post = bruteforce_discrete(pair_tree(), base, 30);
  EXPECT_EQ(post.pmf.size(), 31u * 31u);
  EXPECT_NEAR(post.mean()(0), post.mean()(1), 1e-12);
  double total = 0;
  for (double p : post.pmf) total += p;
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(Oracle, OddsRatioPreserved) {
  const BaseForecasts base{{Poisson{4}}, {Poisson{1}, Poisson{1}}};
  const auto post = bruteforce_discrete(pair_tree(), base, 30);
  for (std::size_t i = 0; i < post.pmf.size(); i += 7) {
    for (std::size_t k = 0; k < post.pmf.size(); k += 11) {
      if (post.pmf[i] == 0.0 || post.pmf[k] == 0.0) continue;
      const double lhs = std::log(post.pmf[i]) - std::log(post.pmf[k]);
      EXPECT_NEAR(lhs, post.log_joint[i] - post.log_joint[k], 1e-10);
    }
  }
}

TEST(Oracle, PointIndexing) {
  const BaseForecasts base{{Poisson{4}}, {Poisson{1}, Poisson{1}}};
  const auto post = bruteforce_discrete(pair_tree(), base, 3);
  EXPECT_EQ(post.point(0), (std::vector<std::int64_t>{0, 0}));
  EXPECT_EQ(post.point(1), (std::vector<std::int64_t>{1, 0}));
  EXPECT_EQ(post.point(4), (std::vector<std::int64_t>{0, 1}));
}

TEST(Oracle, Errors) {
  Rng rng(1);
  EXPECT_THROW(bruteforce_discrete(binary_hierarchy(3), BaseForecasts{std::vector<ForecastDistribution>(7, Poisson{1}),
                                                                        std::vector<ForecastDistribution>(8, Poisson{1})},
                                   30),
               SupportTooLargeError);
  EXPECT_THROW(bruteforce_discrete(pair_tree(), pair_gaussian(), 5), std::invalid_argument);
}

TEST(PointReconcile, BottomUp) {
  Eigen::VectorXd y(7);
  y << 100, 40, 40, 10, 10, 20, 20;
  Eigen::VectorXd expected(7);
  expected << 60, 20, 40, 10, 10, 20, 20;
  EXPECT_EQ(point_reconcile(y, quarterly(), PointMethod::bottom_up), expected);
}

TEST(PointReconcile, MintFixesCoherentPoints) {
  Eigen::VectorXd y(7);
  y << 60, 20, 40, 10, 10, 20, 20;
  const auto r = point_reconcile(y, quarterly(), PointMethod::mint, Eigen::MatrixXd::Identity(7, 7));
  EXPECT_LE((r - y).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(PointReconcile, MintMatchesConditioning) {
  std::mt19937_64 gen(31);
  std::uniform_real_distribution<double> mean(5, 10), sd(0.5, 4);
  const Hierarchy h = binary_hierarchy(3);
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
    const auto g = reconcile_gaussian(h, base);
    EXPECT_LE((r.tail(8) - g.mean).cwiseAbs().maxCoeff(), 1e-8);
  }
}

TEST(PointReconcile, SingularWeight) {
  Eigen::VectorXd y = Eigen::VectorXd::Ones(3);
  EXPECT_THROW(point_reconcile(y, pair_tree(), PointMethod::mint, Eigen::MatrixXd::Zero(3, 3)),
               SingularMatrixError);
}

TEST(Coherence, AllOutputsAreBottomVectors) {
  Rng rng(3);
  const auto g = temporal_structure(12, {2, 3, 4, 6, 12});
  BaseForecasts base;
  for (int j = 0; j < 12; ++j) base.bottom.push_back(Poisson{3});
  for (const auto& c : g.constraints()) base.upper.push_back(Poisson{3.0 * c.size()});
  const auto w = buis_grouped(g, base, 1000, rng);
  EXPECT_EQ(w.particles.cols(), 12u);
  const auto lifted = lift_particles(w.particles, g);
  for (std::size_t i = 0; i < lifted.rows(); ++i) EXPECT_TRUE(coherence_check(lifted.row(i), g, 0.0));
}
