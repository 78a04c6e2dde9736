#include "hierreconc/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "hierreconc/errors.hpp"

namespace hierreconc {
namespace {

using json = nlohmann::json;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string());
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

json parse_json(const std::string& text, const std::string& what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

const json& field(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) {
    throw ValidationError(where + ": missing field '" + key + "'");
  }
  return obj.at(key);
}

double number(const json& obj, const char* key, const std::string& where) {
  const auto& v = field(obj, key, where);
  if (!v.is_number()) throw ValidationError(where + "." + key + ": expected a number");
  return v.get<double>();
}

std::vector<std::string> labels_or_default(const json& j, const char* key, std::size_t n,
                                           const char* prefix) {
  std::vector<std::string> out;
  if (j.is_object() && j.contains("labels") && j["labels"].contains(key)) {
    out = j["labels"][key].get<std::vector<std::string>>();
    if (out.size() != n) {
      throw ValidationError(std::string("labels.") + key + ": expected " + std::to_string(n) +
                            " labels, got " + std::to_string(out.size()));
    }
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

std::vector<double> sample_values(const json& spec, const std::string& where,
                                  const std::filesystem::path& base_dir) {
  if (spec.is_array()) {
    std::vector<double> out;
    out.reserve(spec.size());
    for (std::size_t i = 0; i < spec.size(); ++i) {
      if (!spec[i].is_number()) {
        throw ValidationError(where + "[" + std::to_string(i) + "]: expected a number");
      }
      out.push_back(spec[i].get<double>());
    }
    return out;
  }
  if (spec.is_object()) {
    const auto& file = field(spec, "csv", where);
    const auto& col = field(spec, "column", where);
    std::filesystem::path p = file.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    const auto table = read_csv(p);
    return table.column(col.is_number() ? std::to_string(col.get<std::size_t>())
                                        : col.get<std::string>());
  }
  throw ValidationError(where + ": expected an array or {\"csv\", \"column\"}");
}

ForecastDistribution parse_distribution(const json& e, const std::string& where,
                                        const std::filesystem::path& base_dir) {
  if (!e.is_object()) throw ValidationError(where + ": expected an object");
  const auto& fam = field(e, "family", where);
  if (!fam.is_string()) throw ValidationError(where + ".family: expected a string");
  const auto name = fam.get<std::string>();
  ForecastDistribution d;
  if (name == "gaussian") {
    d = Gaussian{number(e, "mean", where), number(e, "sd", where)};
  } else if (name == "poisson") {
    d = Poisson{number(e, "rate", where)};
  } else if (name == "negbin") {
    d = NegativeBinomial{number(e, "mean", where), number(e, "dispersion", where)};
  } else if (name == "samples_continuous") {
    d = make_empirical(sample_values(field(e, "samples", where), where + ".samples", base_dir));
  } else if (name == "samples_discrete") {
    const auto x = sample_values(field(e, "samples", where), where + ".samples", base_dir);
    std::vector<std::int64_t> c;
    c.reserve(x.size());
    for (double v : x) {
      if (v != std::floor(v)) {
        throw ValidationError(where + ".samples: non-integer value in discrete samples");
      }
      c.push_back(static_cast<std::int64_t>(v));
    }
    d = make_empirical(std::move(c));
  } else {
    throw ValidationError(where + ".family: unknown family '" + name + "'");
  }
  try {
    validate(d);
  } catch (const std::exception& ex) {
    throw ValidationError(where + ": " + ex.what());
  }
  return d;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

StructureFile parse_structure(const std::string& text) {
  const json j = parse_json(text, "structure");
  if (!j.is_object()) throw ValidationError("structure: top level must be an object");
  StructureFile out;
  try {
    if (j.contains("temporal")) {
      const auto& t = j["temporal"];
      out.structure = temporal_structure(t.at("base_periods").get<std::size_t>(),
                                         t.at("factors").get<std::vector<std::size_t>>());
    } else {
      const auto n = field(j, "n_bottom", "structure").get<std::size_t>();
      const auto& cons = field(j, "constraints", "structure");
      if (!cons.is_array()) throw ValidationError("structure.constraints: expected an array");
      std::vector<LeafSet> c;
      for (std::size_t r = 0; r < cons.size(); ++r) {
        if (!cons[r].is_array()) {
          throw ValidationError("structure.constraints[" + std::to_string(r) +
                                "]: expected an array of bottom indices");
        }
        LeafSet leaves;
        for (std::size_t k = 0; k < cons[r].size(); ++k) {
          const auto& v = cons[r][k];
          if (!v.is_number_unsigned()) {
            throw ValidationError("structure.constraints[" + std::to_string(r) + "][" +
                                  std::to_string(k) + "]: expected a bottom index");
          }
          leaves.push_back(v.get<std::size_t>());
        }
        c.push_back(std::move(leaves));
      }
      out.structure = extract_max_subhierarchy(std::move(c), n);
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("structure: ") + e.what());
  } catch (const ValidationError&) {
    throw;
  } catch (const Error& e) {
    throw ValidationError(std::string("structure: ") + e.what());
  }
  out.upper_labels = labels_or_default(j, "upper", out.structure.n_upper(), "u");
  out.bottom_labels = labels_or_default(j, "bottom", out.structure.n_bottom(), "b");
  return out;
}

StructureFile read_structure(const std::filesystem::path& path) {
  return parse_structure(slurp(path));
}

BaseForecasts parse_forecasts(const std::string& text, const std::filesystem::path& base_dir) {
  const json j = parse_json(text, "forecasts");
  if (!j.is_object()) throw ValidationError("forecasts: top level must be an object");
  BaseForecasts base;
  for (const char* part : {"upper", "bottom"}) {
    const auto& arr = field(j, part, "forecasts");
    if (!arr.is_array()) throw ValidationError(std::string("forecasts.") + part + ": expected an array");
    auto& dst = std::string(part) == "upper" ? base.upper : base.bottom;
    for (std::size_t i = 0; i < arr.size(); ++i) {
      dst.push_back(parse_distribution(arr[i], std::string(part) + "[" + std::to_string(i) + "]",
                                       base_dir));
    }
  }
  return base;
}

BaseForecasts read_forecasts(const std::filesystem::path& path) {
  return parse_forecasts(slurp(path), path.parent_path());
}

const std::vector<double>& CsvTable::column(const std::string& key) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == key) return columns[i];
  }
  if (!key.empty() && key.find_first_not_of("0123456789") == std::string::npos) {
    const auto idx = std::stoul(key);
    if (idx < columns.size()) return columns[idx];
  }
  throw ValidationError("csv: no column '" + key + "'");
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(f, line)) throw ValidationError(path.string() + ": empty file");
  t.header = split_csv_line(line);
  t.columns.resize(t.header.size());
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != t.header.size()) {
      throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                            std::to_string(t.header.size()) + " fields, got " +
                            std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto& s = cells[c];
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) {
        throw ValidationError(path.string() + ":" + std::to_string(lineno) + ": column '" +
                              t.header[c] + "' is not a number: '" + s + "'");
      }
      t.columns[c].push_back(v);
    }
  }
  return t;
}

void write_particles_csv(std::ostream& os, const ParticleMatrix& p,
                         const std::vector<std::string>& header) {
  if (header.size() != p.cols()) throw DimensionError("particle CSV header has wrong length");
  for (std::size_t j = 0; j < header.size(); ++j) os << (j ? "," : "") << header[j];
  os << '\n';
  std::string line;
  for (std::size_t i = 0; i < p.rows(); ++i) {
    line.clear();
    for (std::size_t j = 0; j < p.cols(); ++j) {
      if (j) line += ',';
      line += format_double(p(i, j));
    }
    line += '\n';
    os << line;
  }
}

ParticleMatrix to_particles(const CsvTable& t) {
  ParticleMatrix p(t.rows(), t.columns.size());
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    std::copy(t.columns[j].begin(), t.columns[j].end(), p.col(j).begin());
  }
  return p;
}

}  // namespace hierreconc
