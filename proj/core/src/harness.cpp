#include "hierreconc/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "hierreconc/errors.hpp"
#include "hierreconc/io.hpp"
#include "hierreconc/metrics.hpp"

namespace hierreconc {
namespace {

using json = nlohmann::json;

constexpr Method kAllMethods[] = {Method::analytical, Method::is, Method::buis,
                                  Method::buis_samples, Method::mh};

// Substream keys below one repetition's stream.
constexpr std::uint64_t kMeansKey = 0;
std::uint64_t reference_key(std::size_t e) { return 0x100 + e; }
std::uint64_t upper_samples_key(std::size_t e) { return 0x200 + e; }
std::uint64_t method_key(std::size_t e, Method m) {
  return 0x1000 + 16 * e + static_cast<std::uint64_t>(m);
}

struct MethodOutput {
  ParticleMatrix particles;
  std::vector<double> weights;  // empty for unweighted output
  std::optional<double> acceptance;
};

MethodOutput run_method(Method m, const ExperimentStructure& structure, const BaseForecasts& base,
                        const BaseForecasts& sample_base, const ExperimentConfig& cfg, Rng& rng) {
  const StructureView s = view(structure);
  const SamplerOptions options{ResamplingScheme::multinomial, cfg.pmf_floor, 1, {}};
  const auto* tree = std::get_if<Hierarchy>(&structure);
  const auto* grouped = std::get_if<GroupedStructure>(&structure);
  MethodOutput out;
  switch (m) {
    case Method::analytical: {
      const auto g = reconcile_gaussian(s, base);
      out.particles = draw(g, cfg.n_particles, rng);
      break;
    }
    case Method::is: {
      auto w = plain_is(s, base, cfg.n_particles, rng, options);
      out.particles = std::move(w.particles);
      out.weights = std::move(w.weights);
      break;
    }
    case Method::buis:
    case Method::buis_samples: {
      const BaseForecasts& b = m == Method::buis ? base : sample_base;
      if (tree) {
        out.particles = m == Method::buis
                            ? buis(*tree, b, cfg.n_particles, rng, options).particles
                            : buis_sample_based(*tree, b, cfg.n_particles, rng, options).particles;
      } else {
        auto w = buis_grouped(*grouped, b, cfg.n_particles, rng, options);
        out.particles = std::move(w.particles);
        if (!grouped->is_tree()) out.weights = std::move(w.weights);
      }
      break;
    }
    case Method::mh: {
      const std::size_t burn = cfg.mh_burn_in > 0 ? cfg.mh_burn_in : cfg.n_particles / 4;
      auto r = mh_reconcile(s, base, cfg.n_particles, burn, cfg.mh_tau, rng);
      out.particles = std::move(r.particles);
      out.acceptance = r.diagnostics.acceptance_rate;
      break;
    }
  }
  return out;
}

BaseForecasts with_sampled_uppers(const BaseForecasts& base, std::size_t count, const Rng& rng) {
  BaseForecasts out = base;
  for (std::size_t r = 0; r < base.upper.size(); ++r) {
    Rng stream = rng.substream(r);
    auto x = draw(base.upper[r], count, stream);
    if (is_discrete(base.upper[r])) {
      std::vector<std::int64_t> c(x.size());
      std::transform(x.begin(), x.end(), c.begin(), [](double v) { return std::llround(v); });
      out.upper[r] = make_empirical(std::move(c));
    } else {
      out.upper[r] = make_empirical(std::move(x));
    }
  }
  return out;
}

std::vector<ExperimentRow> run_repetition(const ExperimentConfig& cfg,
                                          const ExperimentStructure& structure,
                                          std::size_t rep) {
  const StructureView s = view(structure);
  const Rng rep_rng = Rng(cfg.seed).substream(rep);
  Rng means_rng = rep_rng.substream(kMeansKey);
  std::uniform_real_distribution<double> unif(cfg.bottom_mean_lo, cfg.bottom_mean_hi);
  std::vector<double> means(s.n_bottom);
  for (auto& v : means) v = unif(means_rng.engine());

  const bool need_samples = std::find(cfg.methods.begin(), cfg.methods.end(),
                                      Method::buis_samples) != cfg.methods.end();
  std::vector<ExperimentRow> rows;
  for (std::size_t e = 0; e < cfg.epsilon_levels.size(); ++e) {
    const double eps = cfg.epsilon_levels[e];
    const auto base = gen_synthetic_base(s, cfg.family, eps, means, cfg.sigma_b, cfg.sigma_u);
    const auto sample_base =
        need_samples ? with_sampled_uppers(base, cfg.upper_sample_count,
                                           rep_rng.substream(upper_samples_key(e)))
                     : base;

    std::optional<GaussianReconciled> exact;
    std::vector<double> reference;
    std::string reference_error;
    try {
      if (cfg.family == Family::gaussian) {
        exact = reconcile_gaussian(s, base);
        reference.assign(exact->mean.data(), exact->mean.data() + exact->mean.size());
      } else {
        Rng ref_rng = rep_rng.substream(reference_key(e));
        const std::size_t burn =
            cfg.mh_burn_in > 0 ? cfg.mh_burn_in : cfg.reference_samples / 4;
        const auto chain =
            mh_reconcile(s, base, cfg.reference_samples, burn, cfg.mh_tau, ref_rng);
        const Eigen::VectorXd mu = chain.particles.mean();
        reference.assign(mu.data(), mu.data() + mu.size());
      }
    } catch (const std::exception& ex) {
      reference_error = std::string("reference: ") + ex.what();
    }
    const auto ref_lifted = reference.empty() ? std::vector<double>{} : lift(s, reference);

    for (const Method m : cfg.methods) {
      ExperimentRow row;
      row.method = m;
      row.epsilon = eps;
      row.repetition = rep;
      if (!reference_error.empty()) {
        row.error = reference_error;
        rows.push_back(std::move(row));
        continue;
      }
      Rng rng = rep_rng.substream(method_key(e, m));
      try {
        const auto t0 = std::chrono::steady_clock::now();
        auto out = run_method(m, structure, base, sample_base, cfg, rng);
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const Eigen::VectorXd mu =
            out.weights.empty() ? out.particles.mean() : out.particles.mean(out.weights);
        const std::vector<double> est(mu.data(), mu.data() + mu.size());
        row.mape = mape(lift(s, est), ref_lifted);
        row.acceptance = out.acceptance;
        if (!out.weights.empty()) row.ess = effective_sample_size(out.weights);
        if (exact) {
          if (out.weights.empty()) {
            row.w2 = wasserstein2(out.particles, *exact);
          } else {
            Rng rs = rng.substream(residual_stream());
            row.w2 = wasserstein2(resample(out.particles, out.weights, cfg.n_particles, rs), *exact);
          }
        }
      } catch (const std::exception& ex) {
        row.error = ex.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::string fmt(double v, int precision) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

std::string table(const ExperimentResult& r, const std::string& title,
                  const std::function<std::optional<double>(const ExperimentCell&)>& pick,
                  int precision) {
  std::ostringstream os;
  os << title << "\n";
  os << std::left << std::setw(10) << "epsilon";
  for (auto m : r.config.methods) os << std::right << std::setw(14) << to_string(m);
  os << "\n";
  for (double eps : r.config.epsilon_levels) {
    bool any = false;
    std::ostringstream line;
    line << std::left << std::setw(10) << fmt(eps, 2);
    for (auto m : r.config.methods) {
      std::string v = "-";
      for (const auto& c : r.cells) {
        if (c.method == m && c.epsilon == eps) {
          any = true;
          if (auto x = pick(c)) v = fmt(*x, precision);
        }
      }
      line << std::right << std::setw(14) << v;
    }
    if (any) os << line.str() << "\n";
  }
  return os.str();
}

std::string accuracy_tables(const ExperimentResult& r) {
  std::string out = table(
      r, "MAPE on the reconciled mean (%)",
      [](const ExperimentCell& c) -> std::optional<double> {
        if (c.ok == 0) return std::nullopt;
        return c.mean_mape;
      },
      2);
  if (r.config.family == Family::gaussian) {
    out += "\n" + table(r, "Average Wasserstein distance",
                        [](const ExperimentCell& c) { return c.mean_w2; }, 3);
  }
  return out;
}

std::string timing_table(const ExperimentResult& r) {
  return table(
      r, "Average computational time (s)",
      [](const ExperimentCell& c) -> std::optional<double> {
        if (c.ok == 0) return std::nullopt;
        return c.mean_seconds;
      },
      3);
}

std::string optional_number(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string{};
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

}  // namespace

std::string to_string(StructureKind k) {
  switch (k) {
    case StructureKind::binary_8: return "binary_8";
    case StructureKind::weekly: return "weekly";
    case StructureKind::monthly: return "monthly";
    case StructureKind::custom: return "custom";
  }
  return "?";
}

std::string to_string(Family f) { return f == Family::gaussian ? "gaussian" : "poisson"; }

std::string to_string(Method m) {
  switch (m) {
    case Method::analytical: return "analytical";
    case Method::is: return "is";
    case Method::buis: return "buis";
    case Method::buis_samples: return "buis_samples";
    case Method::mh: return "mh";
  }
  return "?";
}

Method parse_method(const std::string& name) {
  for (auto m : kAllMethods) {
    if (to_string(m) == name) return m;
  }
  throw ValidationError("unknown method '" + name +
                        "' (expected analytical, is, buis, buis_samples or mh)");
}

StructureView view(const ExperimentStructure& s) {
  return std::visit([](const auto& x) { return StructureView(x); }, s);
}

ExperimentStructure make_structure(StructureKind kind, const std::filesystem::path& custom) {
  switch (kind) {
    case StructureKind::binary_8: return binary_hierarchy(3);
    case StructureKind::weekly: return temporal_structure(52, {2, 4, 13, 26, 52});
    case StructureKind::monthly: return temporal_structure(12, {2, 3, 4, 6, 12});
    case StructureKind::custom: return read_structure(custom).structure;
  }
  throw ValidationError("unknown structure kind");
}

void validate(const ExperimentConfig& c) {
  if (c.repetitions < 1) throw ValidationError("repetitions must be >= 1");
  if (c.n_particles < 2) throw ValidationError("n_particles must be >= 2");
  if (c.epsilon_levels.empty()) throw ValidationError("epsilon_levels must not be empty");
  for (double e : c.epsilon_levels) {
    if (!(e >= 0.0)) throw ValidationError("epsilon levels must be >= 0");
  }
  if (c.methods.empty()) throw ValidationError("methods must not be empty");
  for (std::size_t i = 0; i < c.methods.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (c.methods[i] == c.methods[j]) throw ValidationError("duplicate method");
    }
    if (c.methods[i] == Method::analytical && c.family != Family::gaussian) {
      throw ValidationError("method analytical requires the gaussian family");
    }
  }
  if (!(c.bottom_mean_lo > 0.0 && c.bottom_mean_lo <= c.bottom_mean_hi)) {
    throw ValidationError("bottom_mean_range must satisfy 0 < lo <= hi");
  }
  if (!(c.sigma_b > 0.0) || !(c.sigma_u > 0.0)) throw ValidationError("sigmas must be > 0");
  if (c.family == Family::poisson && c.reference_samples < 1) {
    throw ValidationError("reference_samples must be >= 1");
  }
  if (!(c.mh_tau > 0.0)) throw ValidationError("mh_tau must be > 0");
  if (!(c.pmf_floor >= 0.0 && c.pmf_floor < 1.0)) throw ValidationError("pmf_floor must be in [0, 1)");
  if (c.upper_sample_count < 2) throw ValidationError("upper_sample_count must be >= 2");
  if (c.structure == StructureKind::custom && c.custom_path.empty()) {
    throw ValidationError("custom structure needs a path");
  }
}

BaseForecasts gen_synthetic_base(StructureView s, Family family, double epsilon,
                                 std::span<const double> bottom_means, double sigma_b,
                                 double sigma_u) {
  if (!(epsilon >= 0.0)) throw std::invalid_argument("epsilon must be >= 0");
  if (bottom_means.size() != s.n_bottom) throw DimensionError("one mean per bottom series needed");
  const auto sums = aggregate(s, bottom_means);
  BaseForecasts base;
  for (double v : sums) {
    const double mu = (1.0 + epsilon) * v;
    if (family == Family::gaussian) {
      base.upper.emplace_back(Gaussian{mu, sigma_u});
    } else {
      base.upper.emplace_back(Poisson{mu});
    }
  }
  for (double mu : bottom_means) {
    if (family == Family::gaussian) {
      base.bottom.emplace_back(Gaussian{mu, sigma_b});
    } else {
      base.bottom.emplace_back(Poisson{mu});
    }
  }
  return base;
}

BaseForecasts gen_synthetic_base(StructureView s, Family family, double epsilon, Rng& rng,
                                 double mean_lo, double mean_hi, double sigma_b, double sigma_u) {
  std::uniform_real_distribution<double> unif(mean_lo, mean_hi);
  std::vector<double> means(s.n_bottom);
  for (auto& v : means) v = unif(rng.engine());
  return gen_synthetic_base(s, family, epsilon, means, sigma_b, sigma_u);
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const auto structure = make_structure(config.structure, config.custom_path);
  ExperimentResult result;
  result.config = config;
  result.structure_digest = structure_digest(view(structure));

  std::vector<std::vector<ExperimentRow>> per_rep(config.repetitions);
  const std::size_t workers =
      std::min<std::size_t>(std::max(1u, config.threads), config.repetitions);
  if (workers <= 1) {
    for (std::size_t r = 0; r < config.repetitions; ++r) {
      per_rep[r] = run_repetition(config, structure, r);
    }
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t r = w; r < config.repetitions; r += workers) {
          per_rep[r] = run_repetition(config, structure, r);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // Merge by (epsilon, method, repetition).
  for (std::size_t e = 0; e < config.epsilon_levels.size(); ++e) {
    for (std::size_t mi = 0; mi < config.methods.size(); ++mi) {
      ExperimentCell cell;
      cell.method = config.methods[mi];
      cell.epsilon = config.epsilon_levels[e];
      double w2_sum = 0.0;
      std::size_t w2_count = 0;
      for (std::size_t r = 0; r < config.repetitions; ++r) {
        const auto& row = per_rep[r][e * config.methods.size() + mi];
        result.rows.push_back(row);
        if (!row.error.empty()) {
          ++cell.failed;
          continue;
        }
        ++cell.ok;
        cell.mean_mape += row.mape;
        cell.mean_seconds += row.seconds;
        if (row.w2) {
          w2_sum += *row.w2;
          ++w2_count;
        }
      }
      if (cell.ok > 0) {
        cell.mean_mape /= static_cast<double>(cell.ok);
        cell.mean_seconds /= static_cast<double>(cell.ok);
      }
      if (w2_count > 0) cell.mean_w2 = w2_sum / static_cast<double>(w2_count);
      result.cells.push_back(cell);
    }
  }
  return result;
}

std::string summarize(const ExperimentResult& result) {
  return accuracy_tables(result) + "\n" + timing_table(result);
}

std::string results_csv(const ExperimentResult& result) {
  std::ostringstream os;
  os << "method,epsilon,repetition,mape,w2,ess,acceptance_rate,error\n";
  for (const auto& r : result.rows) {
    os << to_string(r.method) << ',' << format_double(r.epsilon) << ',' << r.repetition << ','
       << (r.error.empty() ? format_double(r.mape) : std::string{}) << ','
       << optional_number(r.w2) << ',' << optional_number(r.ess) << ','
       << optional_number(r.acceptance) << ',' << csv_escape(r.error) << '\n';
  }
  return os.str();
}

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  ExperimentConfig c;
  try {
    for (const auto& [key, v] : j.items()) {
      if (key == "structure") {
        if (v.is_object()) {
          c.structure = StructureKind::custom;
          c.custom_path = v.at("custom").get<std::string>();
        } else {
          const auto name = v.get<std::string>();
          if (name == "binary_8") c.structure = StructureKind::binary_8;
          else if (name == "weekly") c.structure = StructureKind::weekly;
          else if (name == "monthly") c.structure = StructureKind::monthly;
          else throw ValidationError("config.structure: unknown structure '" + name + "'");
        }
      } else if (key == "family") {
        const auto name = v.get<std::string>();
        if (name == "gaussian") c.family = Family::gaussian;
        else if (name == "poisson") c.family = Family::poisson;
        else throw ValidationError("config.family: unknown family '" + name + "'");
      } else if (key == "epsilon_levels") {
        c.epsilon_levels = v.get<std::vector<double>>();
      } else if (key == "n_particles") {
        c.n_particles = v.get<std::size_t>();
      } else if (key == "repetitions") {
        if (v.is_number_integer() && v.get<std::int64_t>() < 0) {
          throw ValidationError("config.repetitions must be >= 1");
        }
        c.repetitions = v.get<std::size_t>();
      } else if (key == "methods") {
        c.methods.clear();
        for (const auto& m : v) c.methods.push_back(parse_method(m.get<std::string>()));
      } else if (key == "seed") {
        c.seed = v.get<std::uint64_t>();
      } else if (key == "bottom_mean_range") {
        const auto r = v.get<std::vector<double>>();
        if (r.size() != 2) throw ValidationError("config.bottom_mean_range needs two numbers");
        c.bottom_mean_lo = r[0];
        c.bottom_mean_hi = r[1];
      } else if (key == "sigma_b") {
        c.sigma_b = v.get<double>();
      } else if (key == "sigma_u") {
        c.sigma_u = v.get<double>();
      } else if (key == "reference_samples") {
        c.reference_samples = v.get<std::size_t>();
      } else if (key == "mh_burn_in") {
        c.mh_burn_in = v.get<std::size_t>();
      } else if (key == "mh_tau") {
        c.mh_tau = v.get<double>();
      } else if (key == "pmf_floor") {
        c.pmf_floor = v.get<double>();
      } else if (key == "upper_sample_count") {
        c.upper_sample_count = v.get<std::size_t>();
      } else if (key == "threads") {
        c.threads = v.get<unsigned>();
      } else {
        throw ValidationError("config: unknown field '" + key + "'");
      }
    }
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  validate(c);
  return c;
}

std::string experiment_config_json(const ExperimentConfig& c) {
  json j;
  if (c.structure == StructureKind::custom) {
    j["structure"] = {{"custom", c.custom_path.string()}};
  } else {
    j["structure"] = to_string(c.structure);
  }
  j["family"] = to_string(c.family);
  j["epsilon_levels"] = c.epsilon_levels;
  j["n_particles"] = c.n_particles;
  j["repetitions"] = c.repetitions;
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.push_back(to_string(m));
  j["methods"] = methods;
  j["seed"] = c.seed;
  j["bottom_mean_range"] = {c.bottom_mean_lo, c.bottom_mean_hi};
  j["sigma_b"] = c.sigma_b;
  j["sigma_u"] = c.sigma_u;
  j["reference_samples"] = c.reference_samples;
  j["mh_burn_in"] = c.mh_burn_in;
  j["mh_tau"] = c.mh_tau;
  j["pmf_floor"] = c.pmf_floor;
  j["upper_sample_count"] = c.upper_sample_count;
  j["threads"] = c.threads;
  return j.dump(2);
}

void write_experiment(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& content) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir / name).string());
    f << content;
  };
  write("results.csv", results_csv(result));
  write("summary.txt", accuracy_tables(result));
  write("timings.txt", timing_table(result));

  std::ostringstream times;
  times << "method,epsilon,repetition,seconds\n";
  for (const auto& r : result.rows) {
    times << to_string(r.method) << ',' << format_double(r.epsilon) << ',' << r.repetition << ','
          << format_double(r.seconds) << '\n';
  }
  write("timings.csv", times.str());

  json meta;
  meta["config"] = json::parse(experiment_config_json(result.config));
  meta["structure_digest"] = result.structure_digest;
  meta["rows"] = result.rows.size();
  std::size_t failed = 0;
  for (const auto& r : result.rows) failed += r.error.empty() ? 0 : 1;
  meta["failed_rows"] = failed;
  write("meta.json", meta.dump(2) + "\n");
}

}  // namespace hierreconc
