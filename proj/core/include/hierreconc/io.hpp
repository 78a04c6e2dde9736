#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "hierreconc/hierarchy.hpp"
#include "hierreconc/particles.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc {

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

struct StructureFile {
  GroupedStructure structure;
  std::vector<std::string> upper_labels;   ///< one per constraint
  std::vector<std::string> bottom_labels;  ///< one per bottom series
};

/// Structure JSON, either
///   {"n_bottom": 4, "constraints": [[0,1],[2,3],[0,1,2,3]],
///    "labels": {"upper": [...], "bottom": [...]}}
/// or {"temporal": {"base_periods": 12, "factors": [2,3,4,6,12]}}.
/// Labels are optional. Throws ValidationError with the offending field.
StructureFile parse_structure(const std::string& json_text);
StructureFile read_structure(const std::filesystem::path& path);

/// Forecast JSON: {"upper": [...], "bottom": [...]} where each entry is one of
///   {"family": "gaussian", "mean": m, "sd": s}
///   {"family": "poisson", "rate": l}
///   {"family": "negbin", "mean": m, "dispersion": k}
///   {"family": "samples_discrete" | "samples_continuous",
///    "samples": [..] | {"csv": "file.csv", "column": "name" or index}}
/// Relative CSV paths resolve against `base_dir`.
BaseForecasts parse_forecasts(const std::string& json_text,
                              const std::filesystem::path& base_dir = {});
BaseForecasts read_forecasts(const std::filesystem::path& path);

/// Numeric CSV with a header row.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> columns;

  std::size_t rows() const { return columns.empty() ? 0 : columns.front().size(); }
  /// Column by header name or, if the name is all digits, by index.
  const std::vector<double>& column(const std::string& key) const;
};

CsvTable read_csv(const std::filesystem::path& path);

void write_particles_csv(std::ostream& os, const ParticleMatrix& p,
                         const std::vector<std::string>& header);
ParticleMatrix to_particles(const CsvTable& t);

}  // namespace hierreconc
