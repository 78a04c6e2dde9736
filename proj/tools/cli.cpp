#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "hierreconc/errors.hpp"
#include "hierreconc/harness.hpp"
#include "hierreconc/io.hpp"
#include "hierreconc/metrics.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

struct ReconcileArgs {
  std::string structure;
  std::string forecasts;
  std::string out_dir = "reconciled";
  std::string method = "buis";
  std::size_t n = 100000;
  std::uint64_t seed = 42;
  std::size_t burn_in = 0;
  double tau = 1.0;
  double pmf_floor = 0.0;
  std::string resampling = "multinomial";
};

struct SynthArgs {
  std::string config;
  std::string out_dir = "synth";
  std::optional<std::uint64_t> seed;
};

struct ScoreArgs {
  std::vector<std::string> particles;
  std::string actuals;
  std::string train;
  std::string structure;
  std::string baseline;
  std::string out = "scores.csv";
  double alpha = 0.1;
};

unsigned resolve_threads(unsigned flag) {
  if (flag > 0) return flag;
  if (const char* env = std::getenv("HIER_RECONC_THREADS")) {
    try {
      const long v = std::stol(env);
      if (v > 0) return static_cast<unsigned>(v);
    } catch (const std::exception&) {
    }
    throw ValidationError("HIER_RECONC_THREADS must be a positive integer");
  }
  return 1;
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  return f;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

int cmd_reconcile(const ReconcileArgs& a, unsigned threads, std::ostream& out) {
  const auto sf = read_structure(a.structure);
  const auto& g = sf.structure;
  const auto base = read_forecasts(a.forecasts);
  try {
    validate(base, g);
  } catch (const DimensionError& e) {
    throw ValidationError(std::string("forecasts: ") + e.what());
  }
  const Method method = parse_method(a.method);
  if (a.resampling != "multinomial" && a.resampling != "systematic") {
    throw ValidationError("--resampling must be multinomial or systematic");
  }
  SamplerOptions options;
  options.resampling =
      a.resampling == "systematic" ? ResamplingScheme::systematic : ResamplingScheme::multinomial;
  options.pmf_floor = a.pmf_floor;
  options.threads = threads;
  options.upper_labels = sf.upper_labels;

  Rng rng(a.seed);
  json meta;
  meta["algorithm"] = a.method;
  meta["seed"] = a.seed;
  meta["N"] = a.n;
  const auto start = std::chrono::steady_clock::now();
  meta["structure_digest"] = structure_digest(g);
  meta["n_bottom"] = g.n_bottom();
  meta["n_upper"] = g.n_upper();
  meta["extra_constraints"] = g.extra_constraints().size();
  meta["resampling"] = a.resampling;

  ParticleMatrix particles;
  std::optional<double> ess;
  std::optional<double> acceptance;
  auto take_weighted = [&](WeightedSample w) {
    ess = effective_sample_size(w.weights);
    Rng rs = rng.substream(residual_stream());
    particles = resample(w.particles, w.weights, a.n, rs, options.resampling);
  };

  switch (method) {
    case Method::analytical: {
      const auto rg = reconcile_gaussian(g, base);
      particles = draw(rg, a.n, rng);
      meta["analytical"] = {{"mean", std::vector<double>(rg.mean.data(), rg.mean.data() + rg.mean.size())},
                            {"covariance", matrix_json(rg.covariance)}};
      break;
    }
    case Method::is:
      take_weighted(plain_is(g, base, a.n, rng, options));
      break;
    case Method::buis:
    case Method::buis_samples: {
      if (method == Method::buis) {
        for (std::size_t r = 0; r < base.upper.size(); ++r) {
          if (is_empirical(base.upper[r])) {
            throw ValidationError("upper[" + std::to_string(r) +
                                  "]: sample-based forecast needs --method buis_samples");
          }
        }
      }
      auto w = buis_grouped(g, base, a.n, rng, options);
      if (g.is_tree()) {
        particles = std::move(w.particles);
      } else {
        take_weighted(std::move(w));
      }
      break;
    }
    case Method::mh: {
      auto r = mh_reconcile(g, base, a.n, a.burn_in > 0 ? a.burn_in : a.n / 4, a.tau, rng);
      particles = std::move(r.particles);
      acceptance = r.diagnostics.acceptance_rate;
      meta["burn_in"] = a.burn_in > 0 ? a.burn_in : a.n / 4;
      meta["tau"] = a.tau;
      break;
    }
  }
  meta["wall_time_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  if (ess) meta["ess"] = *ess;
  if (acceptance) meta["acceptance_rate"] = *acceptance;
  const Eigen::VectorXd mu = particles.mean();
  meta["bottom_mean"] = std::vector<double>(mu.data(), mu.data() + mu.size());
  meta["bottom_labels"] = sf.bottom_labels;

  const fs::path dir = a.out_dir;
  {
    auto f = open_out(dir / "particles.csv");
    write_particles_csv(f, particles, sf.bottom_labels);
  }
  {
    auto f = open_out(dir / "metadata.json");
    f << meta.dump(2) << '\n';
  }
  out << "wrote " << particles.rows() << " particles to " << (dir / "particles.csv").string()
      << "\n";
  if (ess) out << "ESS: " << format_double(*ess) << "\n";
  if (acceptance) out << "acceptance rate: " << format_double(*acceptance) << "\n";
  return kOk;
}

int cmd_synth(const SynthArgs& a, unsigned threads, std::ostream& out) {
  std::ifstream f(a.config, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + a.config);
  std::stringstream ss;
  ss << f.rdbuf();
  auto config = parse_experiment_config(ss.str());
  if (config.structure == StructureKind::custom && config.custom_path.is_relative()) {
    config.custom_path = fs::path(a.config).parent_path() / config.custom_path;
  }
  if (a.seed) config.seed = *a.seed;
  config.threads = threads;
  const auto result = run_experiment(config);
  write_experiment(result, a.out_dir);
  out << summarize(result);
  return kOk;
}

struct ScoreRow {
  std::string series;
  std::string level;
  std::string horizon;
  std::string metric;
  double value = 0.0;
};

std::vector<ScoreRow> read_score_report(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot open " + p.string());
  std::string line;
  std::getline(f, line);
  if (line != "series,level,horizon,metric,value") {
    throw ValidationError(p.string() + ": not a score report");
  }
  std::vector<ScoreRow> rows;
  std::size_t lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) {
      throw ValidationError(p.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    }
    try {
      rows.push_back({cells[0], cells[1], cells[2], cells[3], std::stod(cells[4])});
    } catch (const std::exception&) {
      throw ValidationError(p.string() + ":" + std::to_string(lineno) + ": bad value");
    }
  }
  return rows;
}

int cmd_score(const ScoreArgs& a, std::ostream& out) {
  const CsvTable actuals = read_csv(a.actuals);
  const CsvTable train = read_csv(a.train);
  const std::size_t horizons = actuals.rows();
  if (a.particles.size() != horizons) {
    throw ValidationError("got " + std::to_string(a.particles.size()) +
                          " particle files but actuals has " + std::to_string(horizons) +
                          " rows (one file per horizon)");
  }
  std::optional<StructureFile> sf;
  if (!a.structure.empty()) sf = read_structure(a.structure);

  std::vector<ScoreRow> rows;
  for (std::size_t h = 0; h < horizons; ++h) {
    const CsvTable pt = read_csv(a.particles[h]);
    ParticleMatrix p = to_particles(pt);
    std::vector<std::string> names = pt.header;
    if (sf) {
      if (p.cols() != sf->structure.n_bottom()) {
        throw ValidationError(a.particles[h] + ": expected " +
                              std::to_string(sf->structure.n_bottom()) + " bottom columns");
      }
      p = lift_particles(p, sf->structure);
      names = sf->upper_labels;
      names.insert(names.end(), sf->bottom_labels.begin(), sf->bottom_labels.end());
    }
    if (p.rows() < 2) throw ValidationError(a.particles[h] + ": need at least two particles");
    std::vector<double> y(names.size());
    for (std::size_t j = 0; j < names.size(); ++j) {
      y[j] = actuals.column(names[j]).at(h);
      const auto& tr = train.column(names[j]);
      const auto col = p.col(j);
      const double point[] = {median(col)};
      const double actual[] = {y[j]};
      const std::string hz = std::to_string(h + 1);
      rows.push_back({names[j], names[j], hz, "MASE", mase(point, actual, tr)});
      rows.push_back({names[j], names[j], hz, "MIS", mis(col, y[j], a.alpha)});
    }
    const auto es = energy_score(p, y);
    if (es.dropped_last) {
      out << "warning: " << a.particles[h]
          << " has an odd particle count; the last particle is left out of the energy score\n";
    }
    rows.push_back({"all", "all", std::to_string(h + 1), "ES", es.value});
  }

  // Per-series means over horizons.
  std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> means;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.series, r.metric);
    if (!means.count(key)) order.push_back(key);
    auto& m = means[key];
    m.first += r.value;
    ++m.second;
  }
  const std::size_t per_horizon = rows.size();
  for (const auto& key : order) {
    const auto& m = means[key];
    rows.push_back({key.first, key.first, "mean", key.second, m.first / static_cast<double>(m.second)});
  }

  if (!a.baseline.empty()) {
    const auto base_rows = read_score_report(a.baseline);
    std::map<std::tuple<std::string, std::string, std::string>, double> base_by_key;
    for (const auto& r : base_rows) base_by_key[{r.series, r.horizon, r.metric}] = r.value;
    std::map<std::pair<std::string, std::string>, std::pair<double, std::size_t>> skill;
    std::vector<std::pair<std::string, std::string>> skill_order;
    std::vector<ScoreRow> skill_rows;
    for (std::size_t i = 0; i < per_horizon; ++i) {
      const auto& r = rows[i];
      const auto it = base_by_key.find({r.series, r.horizon, r.metric});
      if (it == base_by_key.end()) {
        throw ValidationError("baseline report has no row for " + r.series + " horizon " +
                              r.horizon + " " + r.metric);
      }
      const double s =
          (r.value == 0.0 && it->second == 0.0) ? 0.0 : skill_score(r.value, it->second);
      skill_rows.push_back({r.series, r.level, r.horizon, r.metric + "_skill", s});
      auto key = std::make_pair(r.series, r.metric + "_skill");
      if (!skill.count(key)) skill_order.push_back(key);
      skill[key].first += s;
      ++skill[key].second;
    }
    for (const auto& key : skill_order) {
      const auto& m = skill[key];
      skill_rows.push_back(
          {key.first, key.first, "mean", key.second, m.first / static_cast<double>(m.second)});
    }
    rows.insert(rows.end(), skill_rows.begin(), skill_rows.end());
  }

  auto f = open_out(a.out);
  f << "series,level,horizon,metric,value\n";
  for (const auto& r : rows) {
    f << r.series << ',' << r.level << ',' << r.horizon << ',' << r.metric << ','
      << format_double(r.value) << '\n';
  }
  out << "wrote " << rows.size() << " score rows to " << a.out << "\n";
  return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probabilistic reconciliation of hierarchical forecasts", "hier-reconc"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  unsigned threads = 0;
  app.add_option("--threads", threads,
                 "Worker threads (0: use HIER_RECONC_THREADS, else 1)")
      ->check(CLI::NonNegativeNumber);

  ReconcileArgs ra;
  auto* rec = app.add_subcommand("reconcile", "Reconcile base forecasts on a structure");
  rec->add_option("--structure", ra.structure, "Structure JSON")->required()->check(CLI::ExistingFile);
  rec->add_option("--forecasts", ra.forecasts, "Forecast JSON")->required()->check(CLI::ExistingFile);
  rec->add_option("--out", ra.out_dir, "Output directory");
  rec->add_option("--method", ra.method, "analytical, is, buis, buis_samples or mh")
      ->check(CLI::IsMember({"analytical", "is", "buis", "buis_samples", "mh"}));
  rec->add_option("--n", ra.n, "Number of output particles")->check(CLI::PositiveNumber);
  rec->add_option("--seed", ra.seed, "Random seed");
  rec->add_option("--burn-in", ra.burn_in, "MH burn-in (0: n/4)")->check(CLI::NonNegativeNumber);
  rec->add_option("--tau", ra.tau, "MH proposal variance")->check(CLI::PositiveNumber);
  rec->add_option("--pmf-floor", ra.pmf_floor, "Mass for unseen counts in empirical pmfs")
      ->check(CLI::Range(0.0, 0.999999));
  rec->add_option("--resampling", ra.resampling, "multinomial or systematic")
      ->check(CLI::IsMember({"multinomial", "systematic"}));
  rec->add_option("--threads", threads, "Worker threads (0: use HIER_RECONC_THREADS, else 1)")
      ->check(CLI::NonNegativeNumber);

  SynthArgs sa;
  auto* syn = app.add_subcommand("synth", "Run a synthetic experiment grid");
  syn->add_option("config", sa.config, "Experiment config JSON")->required()->check(CLI::ExistingFile);
  syn->add_option("--out", sa.out_dir, "Results directory");
  syn->add_option("--seed", sa.seed, "Override the config seed");
  syn->add_option("--threads", threads, "Worker threads (0: use HIER_RECONC_THREADS, else 1)")
      ->check(CLI::NonNegativeNumber);

  ScoreArgs sc;
  auto* sco = app.add_subcommand("score", "Score forecast particles against actuals");
  sco->add_option("--particles", sc.particles, "Particle CSV, one per horizon in order")
      ->required()
      ->check(CLI::ExistingFile);
  sco->add_option("--actuals", sc.actuals, "Actuals CSV (row h = horizon h)")->required()->check(CLI::ExistingFile);
  sco->add_option("--train", sc.train, "Training series CSV (one column per series)")
      ->required()
      ->check(CLI::ExistingFile);
  sco->add_option("--structure", sc.structure, "Lift bottom particles through this structure")
      ->check(CLI::ExistingFile);
  sco->add_option("--baseline", sc.baseline, "Score report to compute skill against")
      ->check(CLI::ExistingFile);
  sco->add_option("--alpha", sc.alpha, "MIS interval level")->check(CLI::Range(1e-9, 1.0 - 1e-9));
  sco->add_option("--out", sc.out, "Score report CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    // Subcommand help is reported through the same path.
    if (e.get_exit_code() == 0) {
      for (auto* sub : app.get_subcommands()) out << sub->help();
      return kOk;
    }
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  }

  try {
    const unsigned t = resolve_threads(threads);
    if (rec->parsed()) return cmd_reconcile(ra, t, out);
    if (syn->parsed()) return cmd_synth(sa, t, out);
    return cmd_score(sc, out);
  } catch (const AllZeroWeightsError& e) {
    err << "error: " << e.what() << "\n";
    return kAllZeroWeights;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << "\n";
    return kInvalidInput;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kFailure;
  }
}

}  // namespace hierreconc::cli
