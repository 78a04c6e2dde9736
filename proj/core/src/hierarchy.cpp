#include "hierreconc/hierarchy.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "hierreconc/errors.hpp"

namespace hierreconc {
namespace {

std::string describe(const LeafSet& s) {
  std::string out = "{";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "}";
}

LeafSet normalized(LeafSet s, std::size_t n_bottom) {
  if (s.empty()) throw EmptyNodeError("upper node with an empty leaf set");
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  if (s.back() >= n_bottom) {
    throw DimensionError("leaf index " + std::to_string(s.back()) + " out of range [0, " +
                         std::to_string(n_bottom) + ")");
  }
  return s;
}

bool is_subset(const LeafSet& a, const LeafSet& b) {
  return std::includes(b.begin(), b.end(), a.begin(), a.end());
}

bool intersects(const LeafSet& a, const LeafSet& b) {
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i == *j) return true;
    if (*i < *j) {
      ++i;
    } else {
      ++j;
    }
  }
  return false;
}

bool compatible(const LeafSet& a, const LeafSet& b) {
  return !intersects(a, b) || is_subset(a, b) || is_subset(b, a);
}

// Height of each chosen constraint in the containment forest: 1 for nodes
// with no chosen descendant, otherwise 1 + the tallest descendant. Equal leaf
// sets are ordered by index so the later one sits above.
std::vector<std::size_t> heights(std::span<const LeafSet> constraints,
                                 const std::vector<std::size_t>& chosen) {
  std::vector<std::size_t> order(chosen.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return constraints[chosen[a]].size() < constraints[chosen[b]].size();
  });
  std::vector<std::size_t> h(chosen.size(), 1);
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const auto& outer = constraints[chosen[order[oi]]];
    for (std::size_t oj = 0; oj < oi; ++oj) {
      if (is_subset(constraints[chosen[order[oj]]], outer)) {
        h[order[oi]] = std::max(h[order[oi]], h[order[oj]] + 1);
      }
    }
  }
  return h;
}

std::vector<std::size_t> level_counts(std::span<const LeafSet> constraints,
                                      const std::vector<std::size_t>& chosen) {
  std::vector<std::size_t> counts;
  for (std::size_t h : heights(constraints, chosen)) {
    if (counts.size() < h) counts.resize(h, 0);
    ++counts[h - 1];
  }
  return counts;
}

// Ranks candidate sub-hierarchies: more constraints first, then the level
// count vector compared lexicographically from the bottom level up.
struct Candidate {
  std::vector<std::size_t> chosen;
  std::vector<std::size_t> counts;

  bool better_than(const Candidate& o) const {
    if (chosen.size() != o.chosen.size()) return chosen.size() > o.chosen.size();
    return std::lexicographical_compare(o.counts.begin(), o.counts.end(), counts.begin(),
                                        counts.end());
  }
};

Candidate make_candidate(std::span<const LeafSet> constraints, std::vector<std::size_t> chosen) {
  std::sort(chosen.begin(), chosen.end());
  Candidate c{std::move(chosen), {}};
  c.counts = level_counts(constraints, c.chosen);
  return c;
}

// Adds, in input order, every constraint compatible with all chosen ones.
void complete(std::span<const LeafSet> constraints, std::vector<std::size_t>& chosen) {
  std::vector<bool> in(constraints.size(), false);
  for (auto c : chosen) in[c] = true;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    if (in[i]) continue;
    bool ok = std::all_of(chosen.begin(), chosen.end(),
                          [&](std::size_t c) { return compatible(constraints[i], constraints[c]); });
    if (ok) {
      chosen.push_back(i);
      in[i] = true;
    }
  }
  std::sort(chosen.begin(), chosen.end());
}

// Aggregation factor of each constraint when the set is a complete temporal
// structure (all aligned contiguous blocks of each factor present), else
// nullopt.
std::optional<std::vector<std::size_t>> temporal_factors(std::span<const LeafSet> constraints,
                                                          std::size_t n_bottom) {
  std::map<std::size_t, std::vector<bool>> seen;
  std::vector<std::size_t> factor_of(constraints.size());
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const auto& c = constraints[i];
    const std::size_t f = c.size();
    if (f < 2 || n_bottom % f != 0 || c.front() % f != 0 || c.back() != c.front() + f - 1) {
      return std::nullopt;
    }
    auto& blocks = seen[f];
    if (blocks.empty()) blocks.assign(n_bottom / f, false);
    const std::size_t k = c.front() / f;
    if (blocks[k]) return std::nullopt;
    blocks[k] = true;
    factor_of[i] = f;
  }
  for (const auto& [f, blocks] : seen) {
    if (!std::all_of(blocks.begin(), blocks.end(), [](bool b) { return b; })) return std::nullopt;
  }
  return factor_of;
}

std::vector<std::size_t> search_factor_chains(std::span<const LeafSet> constraints,
                                              const std::vector<std::size_t>& factor_of,
                                              std::size_t n_bottom) {
  std::vector<std::size_t> factors(factor_of.begin(), factor_of.end());
  std::sort(factors.begin(), factors.end());
  factors.erase(std::unique(factors.begin(), factors.end()), factors.end());
  const std::size_t k = factors.size();

  auto members = [&](const std::vector<std::size_t>& chain) {
    std::vector<std::size_t> chosen;
    for (std::size_t i = 0; i < constraints.size(); ++i) {
      if (std::find(chain.begin(), chain.end(), factor_of[i]) != chain.end()) chosen.push_back(i);
    }
    return chosen;
  };

  if (k <= 16) {
    std::optional<Candidate> best;
    for (std::uint32_t mask = 0; mask < (1u << k); ++mask) {
      std::vector<std::size_t> chain;
      for (std::size_t b = 0; b < k; ++b) {
        if (mask & (1u << b)) chain.push_back(factors[b]);
      }
      bool is_chain = true;
      for (std::size_t a = 0; a + 1 < chain.size() && is_chain; ++a) {
        is_chain = chain[a + 1] % chain[a] == 0;
      }
      if (!is_chain) continue;
      auto cand = make_candidate(constraints, members(chain));
      if (!best || cand.better_than(*best)) best = std::move(cand);
    }
    return best->chosen;
  }

  // Longest weighted divisibility chain, weight of factor f = n / f.
  std::vector<std::size_t> score(k), prev(k, k);
  for (std::size_t i = 0; i < k; ++i) {
    score[i] = n_bottom / factors[i];
    for (std::size_t j = 0; j < i; ++j) {
      if (factors[i] % factors[j] == 0 && score[j] + n_bottom / factors[i] > score[i]) {
        score[i] = score[j] + n_bottom / factors[i];
        prev[i] = j;
      }
    }
  }
  std::size_t end = static_cast<std::size_t>(
      std::max_element(score.begin(), score.end()) - score.begin());
  std::vector<std::size_t> chain;
  for (std::size_t i = end; i < k; i = prev[i]) chain.push_back(factors[i]);
  return members(chain);
}

// Exact maximum nesting-compatible subset by branch and bound over the
// conflict graph (at most 64 constraints).
std::vector<std::size_t> search_exact(std::span<const LeafSet> constraints) {
  const std::size_t n = constraints.size();
  std::vector<std::uint64_t> conflicts(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!compatible(constraints[i], constraints[j])) {
        conflicts[i] |= std::uint64_t{1} << j;
        conflicts[j] |= std::uint64_t{1} << i;
      }
    }
  }

  std::optional<Candidate> best;
  std::size_t budget = 2'000'000;
  auto to_vec = [](std::uint64_t bits) {
    std::vector<std::size_t> v;
    while (bits) {
      v.push_back(static_cast<std::size_t>(std::countr_zero(bits)));
      bits &= bits - 1;
    }
    return v;
  };

  std::function<void(std::uint64_t, std::uint64_t)> search = [&](std::uint64_t cand,
                                                                 std::uint64_t chosen) {
    const std::size_t bound = std::popcount(cand) + std::popcount(chosen);
    if (best) {
      if (bound < best->chosen.size()) return;
      // Once the budget is spent, only strict improvements are explored.
      if (budget == 0 && bound == best->chosen.size()) return;
    }
    if (budget) --budget;

    std::size_t pivot = n;
    int pivot_degree = 0;
    for (std::uint64_t bits = cand; bits; bits &= bits - 1) {
      auto v = static_cast<std::size_t>(std::countr_zero(bits));
      int d = std::popcount(conflicts[v] & cand);
      if (d > pivot_degree) {
        pivot_degree = d;
        pivot = v;
      }
    }
    if (pivot == n) {
      auto c = make_candidate(constraints, to_vec(chosen | cand));
      if (!best || c.better_than(*best)) best = std::move(c);
      return;
    }
    const std::uint64_t bit = std::uint64_t{1} << pivot;
    search(cand & ~bit & ~conflicts[pivot], chosen | bit);
    search(cand & ~bit, chosen);
  };

  const std::uint64_t all = n == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << n) - 1);
  search(all, 0);
  return best->chosen;
}

// Greedy fallback for large irregular inputs: repeatedly drop the constraint
// with the most remaining conflicts.
std::vector<std::size_t> search_greedy(std::span<const LeafSet> constraints) {
  const std::size_t n = constraints.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!compatible(constraints[i], constraints[j])) {
        adj[i].push_back(j);
        adj[j].push_back(i);
      }
    }
  }
  std::vector<bool> alive(n, true);
  std::vector<std::size_t> degree(n);
  for (std::size_t i = 0; i < n; ++i) degree[i] = adj[i].size();
  for (;;) {
    std::size_t worst = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (alive[i] && degree[i] > 0 && (worst == n || degree[i] > degree[worst])) worst = i;
    }
    if (worst == n) break;
    alive[worst] = false;
    for (auto j : adj[worst]) {
      if (alive[j]) --degree[j];
    }
  }
  std::vector<std::size_t> chosen;
  for (std::size_t i = 0; i < n; ++i) {
    if (alive[i]) chosen.push_back(i);
  }
  complete(constraints, chosen);
  return chosen;
}

}  // namespace

Hierarchy Hierarchy::build(std::size_t n_bottom, std::vector<std::vector<LeafSet>> levels) {
  if (n_bottom == 0) throw DimensionError("hierarchy needs at least one bottom series");
  Hierarchy h;
  h.n_bottom_ = n_bottom;
  for (auto& level : levels) {
    if (level.empty()) continue;
    std::vector<LeafSet> nodes;
    nodes.reserve(level.size());
    for (auto& s : level) nodes.push_back(normalized(std::move(s), n_bottom));
    h.levels_.push_back(std::move(nodes));
  }

  // owner[l][leaf] = node of level l that aggregates the leaf, or npos.
  constexpr std::size_t npos = static_cast<std::size_t>(-1);
  std::vector<std::vector<std::size_t>> owner(h.levels_.size(),
                                              std::vector<std::size_t>(n_bottom, npos));
  for (std::size_t l = 0; l < h.levels_.size(); ++l) {
    for (std::size_t j = 0; j < h.levels_[l].size(); ++j) {
      for (auto leaf : h.levels_[l][j]) {
        if (owner[l][leaf] != npos) {
          throw OverlapError("level " + std::to_string(l + 1) + ": nodes " +
                             describe(h.levels_[l][owner[l][leaf]]) + " and " +
                             describe(h.levels_[l][j]) + " share leaf " + std::to_string(leaf));
        }
        owner[l][leaf] = j;
      }
    }
  }
  for (std::size_t l = 0; l < h.levels_.size(); ++l) {
    for (const auto& node : h.levels_[l]) {
      for (std::size_t up = l + 1; up < h.levels_.size(); ++up) {
        const std::size_t first = owner[up][node.front()];
        bool ok = std::all_of(node.begin(), node.end(),
                              [&](std::size_t leaf) { return owner[up][leaf] == first; });
        if (!ok) {
          throw NestingError("node " + describe(node) + " at level " + std::to_string(l + 1) +
                             " is not nested in a single node of level " +
                             std::to_string(up + 1));
        }
      }
    }
  }

  h.row_index_.resize(h.levels_.size());
  for (std::size_t l = h.levels_.size(); l-- > 0;) {
    for (std::size_t j = 0; j < h.levels_[l].size(); ++j) {
      h.row_index_[l].push_back(h.rows_.size());
      h.rows_.push_back(h.levels_[l][j]);
    }
  }
  return h;
}

GroupedStructure::GroupedStructure(std::size_t n_bottom, std::vector<LeafSet> constraints,
                                   Hierarchy sub, std::vector<std::size_t> sub_rows,
                                   std::vector<std::size_t> extra)
    : n_bottom_(n_bottom),
      constraints_(std::move(constraints)),
      sub_(std::move(sub)),
      sub_rows_(std::move(sub_rows)),
      extra_(std::move(extra)) {
  if (sub_rows_.size() + extra_.size() != constraints_.size()) {
    throw std::invalid_argument("sub-hierarchy rows and extra constraints must partition the set");
  }
  if (sub_rows_.size() != sub_.n_upper()) {
    throw std::invalid_argument("one sub-hierarchy row index is needed per sub-hierarchy node");
  }
  std::vector<bool> seen(constraints_.size(), false);
  auto mark = [&](std::size_t i) {
    if (i >= constraints_.size() || seen[i]) {
      throw std::invalid_argument("sub-hierarchy rows and extra constraints must partition the set");
    }
    seen[i] = true;
  };
  for (std::size_t r = 0; r < sub_rows_.size(); ++r) {
    mark(sub_rows_[r]);
    if (sub_.constraints()[r] != constraints_[sub_rows_[r]]) {
      throw std::invalid_argument("sub-hierarchy row " + std::to_string(r) +
                                  " does not match its constraint");
    }
  }
  for (std::size_t e : extra_) mark(e);
}

Hierarchy build_hierarchy(std::size_t n_bottom, std::vector<std::vector<LeafSet>> levels) {
  return Hierarchy::build(n_bottom, std::move(levels));
}

Eigen::MatrixXd aggregating_matrix(StructureView s) {
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(s.n_upper()),
                                            static_cast<Eigen::Index>(s.n_bottom));
  for (std::size_t r = 0; r < s.n_upper(); ++r) {
    for (auto leaf : s.constraints[r]) {
      a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(leaf)) = 1.0;
    }
  }
  return a;
}

Eigen::MatrixXd summing_matrix(StructureView s) {
  const auto m = static_cast<Eigen::Index>(s.n_bottom);
  const auto u = static_cast<Eigen::Index>(s.n_upper());
  Eigen::MatrixXd out(u + m, m);
  out.topRows(u) = aggregating_matrix(s);
  out.bottomRows(m).setIdentity();
  return out;
}

std::vector<double> aggregate(StructureView s, std::span<const double> bottom) {
  if (bottom.size() != s.n_bottom) throw DimensionError("bottom vector has wrong length");
  std::vector<double> u(s.n_upper(), 0.0);
  for (std::size_t r = 0; r < u.size(); ++r) {
    for (auto leaf : s.constraints[r]) u[r] += bottom[leaf];
  }
  return u;
}

std::vector<double> lift(StructureView s, std::span<const double> bottom) {
  auto y = aggregate(s, bottom);
  y.insert(y.end(), bottom.begin(), bottom.end());
  return y;
}

GroupedStructure temporal_structure(std::size_t base_periods, std::vector<std::size_t> factors) {
  if (base_periods == 0) throw DimensionError("temporal structure needs at least one period");
  std::vector<LeafSet> constraints;
  for (std::size_t i = 0; i < factors.size(); ++i) {
    const std::size_t f = factors[i];
    if (f <= 1) throw std::invalid_argument("aggregation factors must be > 1");
    if (std::find(factors.begin(), factors.begin() + static_cast<std::ptrdiff_t>(i), f) !=
        factors.begin() + static_cast<std::ptrdiff_t>(i)) {
      throw std::invalid_argument("aggregation factor " + std::to_string(f) + " repeated");
    }
    if (base_periods % f != 0) {
      throw NonDivisorError("aggregation factor " + std::to_string(f) + " does not divide " +
                            std::to_string(base_periods));
    }
    for (std::size_t start = 0; start < base_periods; start += f) {
      LeafSet block(f);
      std::iota(block.begin(), block.end(), start);
      constraints.push_back(std::move(block));
    }
  }
  return extract_max_subhierarchy(std::move(constraints), base_periods);
}

// Search rule: complete temporal structures are searched exhaustively over
// divisibility chains of their aggregation factors (a longest-chain DP beyond
// 16 factors); other inputs use an exact branch and bound up to 64
// constraints and a greedy conflict-removal pass above that. Ties between
// equally large candidates go to the largest level-count vector, compared
// from the bottom level up.
GroupedStructure extract_max_subhierarchy(std::vector<LeafSet> constraints, std::size_t n_bottom) {
  if (n_bottom == 0) throw DimensionError("structure needs at least one bottom series");
  for (auto& c : constraints) c = normalized(std::move(c), n_bottom);

  std::vector<std::size_t> chosen;
  if (constraints.empty()) {
    // nothing to choose
  } else if (auto factor_of = temporal_factors(constraints, n_bottom)) {
    chosen = search_factor_chains(constraints, *factor_of, n_bottom);
    complete(constraints, chosen);
  } else if (constraints.size() <= 64) {
    chosen = search_exact(constraints);
  } else {
    chosen = search_greedy(constraints);
  }

  const auto h = heights(constraints, chosen);
  const std::size_t n_levels = h.empty() ? 0 : *std::max_element(h.begin(), h.end());
  std::vector<std::vector<LeafSet>> levels(n_levels);
  std::vector<std::vector<std::size_t>> level_members(n_levels);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    levels[h[i] - 1].push_back(constraints[chosen[i]]);
    level_members[h[i] - 1].push_back(chosen[i]);
  }
  Hierarchy sub = Hierarchy::build(n_bottom, levels);

  std::vector<std::size_t> sub_rows(sub.n_upper());
  for (std::size_t l = 0; l < n_levels; ++l) {
    for (std::size_t j = 0; j < level_members[l].size(); ++j) {
      sub_rows[sub.row_of(l, j)] = level_members[l][j];
    }
  }
  std::vector<std::size_t> extra;
  std::vector<bool> in(constraints.size(), false);
  for (auto c : chosen) in[c] = true;
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    if (!in[i]) extra.push_back(i);
  }
  return {n_bottom, std::move(constraints), std::move(sub), std::move(sub_rows), std::move(extra)};
}

GroupedStructure as_grouped(const Hierarchy& h) {
  std::vector<std::size_t> rows(h.n_upper());
  std::iota(rows.begin(), rows.end(), 0);
  return {h.n_bottom(), h.constraints(), h, std::move(rows), {}};
}

bool coherence_check(std::span<const double> y, StructureView s, double tol) {
  if (y.size() != s.n_nodes()) {
    throw DimensionError("coherence check: expected " + std::to_string(s.n_nodes()) +
                         " values, got " + std::to_string(y.size()));
  }
  const auto bottom = y.subspan(s.n_upper());
  for (std::size_t r = 0; r < s.n_upper(); ++r) {
    double sum = 0.0;
    for (auto leaf : s.constraints[r]) sum += bottom[leaf];
    if (!(std::abs(y[r] - sum) <= tol)) return false;
  }
  return true;
}

bool is_nesting_compatible(std::span<const LeafSet> constraints) {
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    for (std::size_t j = i + 1; j < constraints.size(); ++j) {
      if (!compatible(constraints[i], constraints[j])) return false;
    }
  }
  return true;
}

Hierarchy binary_hierarchy(std::size_t depth) {
  if (depth == 0) throw std::invalid_argument("binary hierarchy depth must be >= 1");
  const std::size_t m = std::size_t{1} << depth;
  std::vector<std::vector<LeafSet>> levels;
  for (std::size_t width = 2; width <= m; width *= 2) {
    std::vector<LeafSet> level;
    for (std::size_t start = 0; start < m; start += width) {
      LeafSet block(width);
      std::iota(block.begin(), block.end(), start);
      level.push_back(std::move(block));
    }
    levels.push_back(std::move(level));
  }
  return Hierarchy::build(m, std::move(levels));
}

std::string structure_digest(StructureView s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&](std::uint64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xff;
      h *= 0x100000001b3ULL;
    }
  };
  feed(s.n_bottom);
  for (const auto& c : s.constraints) {
    feed(c.size());
    for (auto leaf : c) feed(leaf);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace hierreconc
