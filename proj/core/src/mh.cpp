#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "hierreconc/errors.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc {
namespace {

class LogTarget {
 public:
  LogTarget(StructureView s, const BaseForecasts& base) : s_(s) {
    for (const auto& d : base.bottom) bottom_.emplace_back(d);
    for (const auto& d : base.upper) upper_.emplace_back(d);
  }

  double operator()(std::span<const double> b) const {
    double lp = 0.0;
    for (std::size_t j = 0; j < bottom_.size(); ++j) {
      lp += bottom_[j](b[j]);
      if (lp == -std::numeric_limits<double>::infinity()) return lp;
    }
    for (std::size_t r = 0; r < upper_.size(); ++r) {
      double sum = 0.0;
      for (auto leaf : s_.constraints[r]) sum += b[leaf];
      lp += upper_[r](sum);
    }
    return lp;
  }

 private:
  StructureView s_;
  std::vector<LogDensity> bottom_;
  std::vector<LogDensity> upper_;
};

}  // namespace

ReconciledSamples mh_reconcile(StructureView s, const BaseForecasts& base, std::size_t n,
                               std::size_t burn_in, double tau, Rng& rng) {
  validate(base, s);
  if (n == 0) throw std::invalid_argument("mh_reconcile needs n >= 1");
  if (!(tau > 0.0)) throw std::invalid_argument("mh_reconcile needs tau > 0");
  const std::size_t m = s.n_bottom;
  const LogTarget target(s, base);

  std::vector<bool> count_coord(m);
  std::vector<double> current(m);
  for (std::size_t j = 0; j < m; ++j) {
    count_coord[j] = is_discrete(base.bottom[j]);
    const double mu = mean(base.bottom[j]);
    current[j] = count_coord[j] ? std::round(mu) : mu;
  }
  double current_lp = target(current);
  if (!std::isfinite(current_lp)) {
    throw ZeroDensityStartError("mh_reconcile: the starting point has zero target density");
  }

  auto& eng = rng.engine();
  std::normal_distribution<double> step(0.0, std::sqrt(tau));
  std::uniform_int_distribution<int> trit(-1, 1);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  ReconciledSamples out;
  out.particles = ParticleMatrix(n, m);
  std::vector<double> proposal(m);
  std::size_t accepted = 0;
  for (std::size_t it = 0; it < burn_in + n; ++it) {
    for (std::size_t j = 0; j < m; ++j) {
      proposal[j] = current[j] + (count_coord[j] ? static_cast<double>(trit(eng)) : step(eng));
    }
    const double lp = target(proposal);
    if (std::log(unif(eng)) < lp - current_lp) {
      current.swap(proposal);
      current_lp = lp;
      if (it >= burn_in) ++accepted;
    }
    if (it >= burn_in) {
      const std::size_t i = it - burn_in;
      for (std::size_t j = 0; j < m; ++j) out.particles(i, j) = current[j];
    }
  }
  out.provenance = {"mh", rng.seed(), structure_digest(s)};
  out.diagnostics.acceptance_rate = static_cast<double>(accepted) / static_cast<double>(n);
  return out;
}

}  // namespace hierreconc
