#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "hierreconc/distributions.hpp"
#include "hierreconc/hierarchy.hpp"
#include "hierreconc/particles.hpp"
#include "hierreconc/rng.hpp"

namespace hierreconc {

/// Independent base forecasts: one per upper constraint (in the structure's
/// row order) and one per bottom series.
struct BaseForecasts {
  std::vector<ForecastDistribution> upper;
  std::vector<ForecastDistribution> bottom;
};

/// Throws DimensionError when the counts do not match the structure and
/// std::invalid_argument for invalid parameters.
void validate(const BaseForecasts& base, StructureView s);

enum class ResamplingScheme { multinomial, systematic };

struct SamplerOptions {
  ResamplingScheme resampling = ResamplingScheme::multinomial;
  /// Probability assigned to unobserved counts inside an empirical pmf's
  /// support window.
  double pmf_floor = 0.0;
  /// Worker threads for sibling nodes of one level; 1 runs inline.
  unsigned threads = 1;
  /// Optional display names for upper rows, used in error messages.
  std::vector<std::string> upper_labels;
};

struct WeightedSample {
  ParticleMatrix particles;
  std::vector<double> weights;  ///< normalized
};

struct Provenance {
  std::string algorithm;
  std::uint64_t seed = 0;
  std::string structure_digest;
};

struct Diagnostics {
  std::optional<double> ess;
  std::optional<double> acceptance_rate;
};

struct ReconciledSamples {
  ParticleMatrix particles;  ///< unweighted bottom vectors
  Provenance provenance;
  Diagnostics diagnostics;
};

struct GaussianReconciled {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};

/// One weight-and-resample step of BUIS, recorded in execution order.
struct BuisStep {
  std::size_t level = 0;  ///< 0-based, bottom-up
  std::size_t row = 0;    ///< row in the hierarchy's aggregating matrix
  LeafSet leaves;
};

// Substream keys. Bottom series j draws its initial particles from
// rng.substream(bottom_stream(j)); the resampling step of upper row r uses
// rng.substream(node_stream(r)).
constexpr std::uint64_t bottom_stream(std::size_t j) { return j; }
constexpr std::uint64_t node_stream(std::size_t row) { return (std::uint64_t{1} << 32) + row; }
constexpr std::uint64_t residual_stream() { return std::uint64_t{2} << 32; }

/// Gaussian reconciliation in closed form: the conditional distribution of
/// the bottom series given u = A b under independent Gaussian base forecasts.
/// Throws SingularMatrixError when Sigma_u + A Sigma_b A^T is singular.
GaussianReconciled reconcile_gaussian(StructureView s, const BaseForecasts& base);

/// Draws from a reconciled Gaussian (eigen-decomposition square root, so a
/// singular covariance is fine).
ParticleMatrix draw(const GaussianReconciled& g, std::size_t n, Rng& rng);

/// Exp-normalizes log-weights with max subtraction. Throws
/// AllZeroWeightsError naming `node` when every weight is zero.
std::vector<double> normalize_log_weights(std::span<const double> log_weights,
                                          const std::string& node = "joint");

/// 1 / sum(w^2).
double effective_sample_size(std::span<const double> weights);

/// Indices of n_out draws with replacement, P(i) = weights[i]. Multinomial
/// draws are i.i.d. (alias method); systematic draws are shuffled.
std::vector<std::size_t> resample_indices(std::span<const double> weights, std::size_t n_out,
                                          Rng& rng,
                                          ResamplingScheme scheme = ResamplingScheme::multinomial);

ParticleMatrix resample(const ParticleMatrix& particles, std::span<const double> weights,
                        std::size_t n_out, Rng& rng,
                        ResamplingScheme scheme = ResamplingScheme::multinomial);

/// Plain importance sampling with the bottom base forecasts as proposal and
/// the joint upper density of A b as weight.
WeightedSample plain_is(StructureView s, const BaseForecasts& base, std::size_t n, Rng& rng,
                        const SamplerOptions& options = {});

/// Bottom-Up Importance Sampling on a tree. Upper forecasts must have a
/// density (use buis_sample_based for sample-only forecasts).
ReconciledSamples buis(const Hierarchy& h, const BaseForecasts& base, std::size_t n, Rng& rng,
                       const SamplerOptions& options = {}, std::vector<BuisStep>* trace = nullptr);

/// BUIS where sample-only upper forecasts are weighted through a KDE
/// (continuous) or an empirical pmf (discrete) fitted to their samples.
ReconciledSamples buis_sample_based(const Hierarchy& h, const BaseForecasts& base, std::size_t n,
                                    Rng& rng, const SamplerOptions& options = {},
                                    std::vector<BuisStep>* trace = nullptr);

/// BUIS on the sub-hierarchy followed by importance weights over the extra
/// constraints. `base.upper` follows g.constraints() order. Sample-only
/// forecasts are accepted as in buis_sample_based.
WeightedSample buis_grouped(const GroupedStructure& g, const BaseForecasts& base, std::size_t n,
                            Rng& rng, const SamplerOptions& options = {});

/// Random-walk Metropolis-Hastings targeting pi_b(b) * pi_u(A b).
/// Continuous coordinates move by N(0, tau); count coordinates by a uniform
/// step in {-1, 0, +1}. The chain starts at the (rounded) bottom means and
/// keeps the n states after `burn_in`. Throws ZeroDensityStartError when the
/// start has zero target density.
ReconciledSamples mh_reconcile(StructureView s, const BaseForecasts& base, std::size_t n,
                               std::size_t burn_in, double tau, Rng& rng);

/// Exact reconciled pmf over the box [0, cap]^m.
struct DiscretePosterior {
  std::size_t n_bottom = 0;
  std::int64_t cap = 0;
  std::vector<double> pmf;        ///< normalized; index = sum_j b_j (cap+1)^j
  std::vector<double> log_joint;  ///< log pi_b(b) + log pi_u(A b), unnormalized

  std::vector<std::int64_t> point(std::size_t index) const;
  std::vector<double> marginal(std::size_t j) const;
  Eigen::VectorXd mean() const;
};

/// Enumerates every bottom vector in [0, support_cap]^m. All forecasts must be
/// discrete. Throws SupportTooLargeError beyond 10^7 points.
DiscretePosterior bruteforce_discrete(StructureView s, const BaseForecasts& base,
                                      std::int64_t support_cap);

enum class PointMethod { bottom_up, mint };

/// Point reconciliation y~ = S G y^. For mint, `w` is the n x n base error
/// covariance in [u; b] order.
Eigen::VectorXd point_reconcile(const Eigen::VectorXd& y_hat, StructureView s, PointMethod method,
                                const Eigen::MatrixXd& w = {});

}  // namespace hierreconc
