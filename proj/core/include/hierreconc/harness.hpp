#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hierreconc/hierarchy.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc {

enum class StructureKind { binary_8, weekly, monthly, custom };
enum class Family { gaussian, poisson };
enum class Method { analytical, is, buis, buis_samples, mh };

std::string to_string(StructureKind k);
std::string to_string(Family f);
std::string to_string(Method m);
Method parse_method(const std::string& name);

/// A tree, or a grouped structure handled through its largest sub-hierarchy.
using ExperimentStructure = std::variant<Hierarchy, GroupedStructure>;

StructureView view(const ExperimentStructure& s);

/// binary_8: three levels above 8 bottoms (4 + 2 + 1 uppers).
/// weekly: 52 weeks with aggregates over 2, 4, 13, 26 and 52 weeks.
/// monthly: 12 months with aggregates over 2, 3, 4, 6 and 12 months.
ExperimentStructure make_structure(StructureKind kind, const std::filesystem::path& custom = {});

struct ExperimentConfig {
  StructureKind structure = StructureKind::binary_8;
  std::filesystem::path custom_path;
  Family family = Family::gaussian;
  std::vector<double> epsilon_levels{0.1, 0.3, 0.5, 0.8};
  std::size_t n_particles = 100000;
  std::size_t repetitions = 30;
  std::vector<Method> methods{Method::analytical, Method::is, Method::buis};
  std::uint64_t seed = 42;
  double bottom_mean_lo = 5.0;
  double bottom_mean_hi = 10.0;
  double sigma_b = 2.0;
  double sigma_u = 3.0;
  /// Post-burn-in length of the MH chain used as reference for count data.
  std::size_t reference_samples = 20000;
  /// MH burn-in; 0 means a quarter of the chain length.
  std::size_t mh_burn_in = 0;
  double mh_tau = 1.0;
  double pmf_floor = 0.0;
  /// Number of draws standing in for each upper forecast under buis_samples.
  std::size_t upper_sample_count = 100000;
  /// Repetitions run concurrently (one worker per repetition).
  unsigned threads = 1;
};

/// Throws ValidationError on an inconsistent configuration.
void validate(const ExperimentConfig& config);

/// Base forecasts with incoherence epsilon: bottom means uniform on
/// [lo, hi]; upper means (1 + epsilon) * A m_b. Gaussian bottoms use sd
/// sigma_b and uppers sigma_u; Poisson uses the means as rates.
BaseForecasts gen_synthetic_base(StructureView s, Family family, double epsilon, Rng& rng,
                                 double mean_lo = 5.0, double mean_hi = 10.0,
                                 double sigma_b = 2.0, double sigma_u = 3.0);

/// Same as above with the bottom means supplied.
BaseForecasts gen_synthetic_base(StructureView s, Family family, double epsilon,
                                 std::span<const double> bottom_means, double sigma_b = 2.0,
                                 double sigma_u = 3.0);

struct ExperimentRow {
  Method method = Method::buis;
  double epsilon = 0.0;
  std::size_t repetition = 0;
  double mape = 0.0;                ///< percent, over all nodes
  std::optional<double> w2;         ///< gaussian only
  std::optional<double> ess;        ///< weighted methods
  std::optional<double> acceptance;  ///< mh only
  double seconds = 0.0;
  std::string error;  ///< non-empty when the method failed for this cell
};

struct ExperimentCell {
  Method method = Method::buis;
  double epsilon = 0.0;
  double mean_mape = 0.0;
  std::optional<double> mean_w2;
  double mean_seconds = 0.0;
  std::size_t ok = 0;
  std::size_t failed = 0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string structure_digest;
  std::vector<ExperimentRow> rows;  ///< ordered by (epsilon, method, repetition)
  std::vector<ExperimentCell> cells;
};

/// Runs every (epsilon, method, repetition). Failures are recorded in the
/// row and skipped by the cell means.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Plain-text tables (MAPE, W2 when present, wall time) with one row per
/// epsilon and one column per method.
std::string summarize(const ExperimentResult& result);

/// Per-repetition rows as CSV.
std::string results_csv(const ExperimentResult& result);

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string experiment_config_json(const ExperimentConfig& config);

/// Writes results.csv, summary.txt and meta.json into `dir`.
void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir);

}  // namespace hierreconc
