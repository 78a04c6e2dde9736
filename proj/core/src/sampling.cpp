#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "hierreconc/errors.hpp"
#include "hierreconc/reconcile.hpp"

namespace hierreconc {
namespace {

__extension__ using uint128 = unsigned __int128;

double uniform01(std::uint64_t r) { return static_cast<double>(r >> 11) * 0x1.0p-53; }

template <class F>
void parallel_for(std::size_t count, unsigned threads, F&& body) {
  const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), count);
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string upper_label(const SamplerOptions& options, std::size_t row) {
  if (row < options.upper_labels.size()) return options.upper_labels[row];
  return "upper[" + std::to_string(row) + "]";
}

ParticleMatrix draw_bottoms(std::span<const ForecastDistribution> bottom, std::size_t n,
                            const Rng& rng, unsigned threads) {
  ParticleMatrix p(n, bottom.size());
  parallel_for(bottom.size(), threads, [&](std::size_t j) {
    Rng stream = rng.substream(bottom_stream(j));
    auto values = draw(bottom[j], n, stream);
    std::copy(values.begin(), values.end(), p.col(j).begin());
  });
  return p;
}

std::vector<LogDensity> weight_functions(std::span<const ForecastDistribution> upper,
                                         double pmf_floor) {
  std::vector<LogDensity> fns;
  fns.reserve(upper.size());
  for (const auto& d : upper) fns.emplace_back(d, pmf_floor);
  return fns;
}

// Adds log pi(sum over leaves) for every particle to `log_w`. `sums` is
// scratch of at least p.rows() entries.
void accumulate_log_weight(const ParticleMatrix& p, const LeafSet& leaves, const LogDensity& fn,
                           std::span<double> sums, std::span<double> log_w) {
  const std::size_t n = p.rows();
  sums = sums.first(n);
  std::fill(sums.begin(), sums.end(), 0.0);
  for (auto leaf : leaves) {
    const auto c = p.col(leaf);
    for (std::size_t i = 0; i < n; ++i) sums[i] += c[i];
  }
  fn.evaluate(sums, sums);
  for (std::size_t i = 0; i < n; ++i) log_w[i] += sums[i];
}

void normalize_into(std::span<const double> log_weights, std::span<double> w, const std::string& node) {
  double top = -std::numeric_limits<double>::infinity();
  for (double v : log_weights) {
    if (std::isnan(v)) throw AllZeroWeightsError(node, "NaN log-weight");
    top = std::max(top, v);
  }
  if (!std::isfinite(top)) {
    throw AllZeroWeightsError(node, top > 0 ? "infinite log-weight" : "");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    w[i] = std::exp(log_weights[i] - top);
    sum += w[i];
  }
  for (auto& v : w) v /= sum;
}

// Scratch reused across resampling steps on one thread.
struct Workspace {
  std::vector<double> sums, log_w, w, scratch, prob;
  std::vector<std::size_t> idx, alias, small, large;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

void resample_into(std::span<const double> weights, std::span<std::size_t> out, Rng& rng,
                   ResamplingScheme scheme, Workspace& ws) {
  const std::size_t n = weights.size();
  if (n == 0) throw std::invalid_argument("resample: no particles");
  auto& eng = rng.engine();
  const std::size_t n_out = out.size();

  if (scheme == ResamplingScheme::systematic) {
    const double step = 1.0 / static_cast<double>(n_out);
    double u = uniform01(eng()) * step;
    double cum = weights[0];
    std::size_t i = 0;
    for (std::size_t k = 0; k < n_out; ++k) {
      while (u > cum && i + 1 < n) cum += weights[++i];
      out[k] = i;
      u += step;
    }
    std::shuffle(out.begin(), out.end(), eng);
    return;
  }

  // Vose alias table.
  auto& prob = ws.prob;
  auto& alias = ws.alias;
  auto& small = ws.small;
  auto& large = ws.large;
  prob.resize(n);
  alias.assign(n, 0);
  small.clear();
  large.clear();
  for (std::size_t i = 0; i < n; ++i) {
    prob[i] = weights[i] * static_cast<double>(n);
    (prob[i] < 1.0 ? small : large).push_back(i);
  }
  while (!small.empty() && !large.empty()) {
    const std::size_t s = small.back();
    small.pop_back();
    const std::size_t g = large.back();
    alias[s] = g;
    prob[g] = (prob[g] + prob[s]) - 1.0;
    if (prob[g] < 1.0) {
      large.pop_back();
      small.push_back(g);
    }
  }
  for (auto g : large) prob[g] = 1.0;
  for (auto s : small) prob[s] = 1.0;

  // One draw per output (multiply-shift): the high word of r * n picks the
  // slot and the low word, uniform on [0, 1) given the slot to within
  // n / 2^64, is the coin.
  for (auto& k : out) {
    const uint128 m = static_cast<uint128>(eng()) * n;
    const auto i = static_cast<std::size_t>(m >> 64);
    k = uniform01(static_cast<std::uint64_t>(m)) < prob[i] ? i : alias[i];
  }
}

ParticleMatrix buis_core(const Hierarchy& h, std::span<const ForecastDistribution> bottom,
                         const std::vector<LogDensity>& fns, std::size_t n, const Rng& rng,
                         const SamplerOptions& options, const std::vector<std::string>& labels,
                         std::vector<BuisStep>* trace) {
  if (n == 0) throw std::invalid_argument("buis needs at least one particle");
  ParticleMatrix p = draw_bottoms(bottom, n, rng, options.threads);

  for (std::size_t l = 0; l < h.n_levels(); ++l) {
    const auto& nodes = h.level(l);
    if (trace) {
      for (std::size_t j = 0; j < nodes.size(); ++j) trace->push_back({l, h.row_of(l, j), nodes[j]});
    }
    // Sibling leaf blocks are disjoint, so nodes of one level touch distinct
    // columns and can run concurrently.
    parallel_for(nodes.size(), options.threads, [&](std::size_t j) {
      const std::size_t row = h.row_of(l, j);
      const auto& leaves = nodes[j];
      auto& ws = workspace();
      ws.sums.resize(n);
      ws.log_w.assign(n, 0.0);
      ws.w.resize(n);
      ws.idx.resize(n);
      ws.scratch.resize(n);
      accumulate_log_weight(p, leaves, fns[row], ws.sums, ws.log_w);
      normalize_into(ws.log_w, ws.w, labels[row]);
      Rng stream = rng.substream(node_stream(row));
      resample_into(ws.w, ws.idx, stream, options.resampling, ws);
      for (auto leaf : leaves) {
        auto c = p.col(leaf);
        std::copy(c.begin(), c.end(), ws.scratch.begin());
        for (std::size_t i = 0; i < n; ++i) c[i] = ws.scratch[ws.idx[i]];
      }
    });
  }
  return p;
}

ReconciledSamples run_buis(const Hierarchy& h, const BaseForecasts& base, std::size_t n, Rng& rng,
                           const SamplerOptions& options, std::vector<BuisStep>* trace,
                           const char* algorithm) {
  validate(base, h);
  std::vector<std::string> labels(h.n_upper());
  for (std::size_t r = 0; r < labels.size(); ++r) labels[r] = upper_label(options, r);
  const auto fns = weight_functions(base.upper, options.pmf_floor);
  ReconciledSamples out;
  out.particles = buis_core(h, base.bottom, fns, n, rng, options, labels, trace);
  out.provenance = {algorithm, rng.seed(), structure_digest(h)};
  return out;
}

}  // namespace

std::vector<double> normalize_log_weights(std::span<const double> log_weights,
                                          const std::string& node) {
  std::vector<double> w(log_weights.size());
  normalize_into(log_weights, w, node);
  return w;
}

std::vector<std::size_t> resample_indices(std::span<const double> weights, std::size_t n_out,
                                          Rng& rng, ResamplingScheme scheme) {
  std::vector<std::size_t> out(n_out);
  resample_into(weights, out, rng, scheme, workspace());
  return out;
}

ParticleMatrix resample(const ParticleMatrix& particles, std::span<const double> weights,
                        std::size_t n_out, Rng& rng, ResamplingScheme scheme) {
  if (weights.size() != particles.rows()) {
    throw DimensionError("resample: weight count does not match particle count");
  }
  const auto idx = resample_indices(weights, n_out, rng, scheme);
  return particles.gather(idx);
}

WeightedSample plain_is(StructureView s, const BaseForecasts& base, std::size_t n, Rng& rng,
                        const SamplerOptions& options) {
  validate(base, s);
  if (n == 0) throw std::invalid_argument("plain_is needs at least one particle");
  WeightedSample out;
  out.particles = draw_bottoms(base.bottom, n, rng, options.threads);
  const auto fns = weight_functions(base.upper, options.pmf_floor);
  std::vector<double> log_w(n, 0.0), sums(n);
  for (std::size_t r = 0; r < s.n_upper(); ++r) {
    accumulate_log_weight(out.particles, s.constraints[r], fns[r], sums, log_w);
  }
  out.weights = normalize_log_weights(log_w, "joint");
  return out;
}

ReconciledSamples buis(const Hierarchy& h, const BaseForecasts& base, std::size_t n, Rng& rng,
                       const SamplerOptions& options, std::vector<BuisStep>* trace) {
  for (const auto& d : base.upper) {
    if (is_empirical(d)) {
      throw std::invalid_argument(
          "buis: upper forecast given as samples; use buis_sample_based");
    }
  }
  return run_buis(h, base, n, rng, options, trace, "buis");
}

ReconciledSamples buis_sample_based(const Hierarchy& h, const BaseForecasts& base, std::size_t n,
                                    Rng& rng, const SamplerOptions& options,
                                    std::vector<BuisStep>* trace) {
  return run_buis(h, base, n, rng, options, trace, "buis_samples");
}

WeightedSample buis_grouped(const GroupedStructure& g, const BaseForecasts& base, std::size_t n,
                            Rng& rng, const SamplerOptions& options) {
  validate(base, g);
  const auto& sub = g.subhierarchy();
  const auto& sub_rows = g.subhierarchy_rows();

  std::vector<ForecastDistribution> sub_upper;
  std::vector<std::string> labels;
  sub_upper.reserve(sub_rows.size());
  for (auto c : sub_rows) {
    sub_upper.push_back(base.upper[c]);
    labels.push_back(upper_label(options, c));
  }
  const auto fns = weight_functions(sub_upper, options.pmf_floor);

  WeightedSample out;
  out.particles = buis_core(sub, base.bottom, fns, n, rng, options, labels, nullptr);

  const auto& extra = g.extra_constraints();
  if (extra.empty()) {
    out.weights.assign(n, 1.0 / static_cast<double>(n));
    return out;
  }
  std::vector<double> log_w(n, 0.0), sums(n);
  for (auto c : extra) {
    const LogDensity fn(base.upper[c], options.pmf_floor);
    accumulate_log_weight(out.particles, g.constraints()[c], fn, sums, log_w);
  }
  out.weights = normalize_log_weights(log_w, "extra constraints");
  return out;
}

}  // namespace hierreconc
