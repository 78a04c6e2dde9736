#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hierreconc {

/// Sorted, duplicate-free list of bottom-series indices aggregated by one
/// upper node.
using LeafSet = std::vector<std::size_t>;

/// Tree-structured aggregation constraints.
///
/// Levels are stored bottom-up: `level(0)` holds the upper nodes closest to
/// the bottom series. Rows of the aggregating matrix follow the opposite
/// order: the top level first, then each lower level, left to right within a
/// level.
class Hierarchy {
 public:
  Hierarchy() = default;

  /// Validates and builds a hierarchy. `levels[l][j]` is the leaf set of the
  /// j-th node of level l + 1. Empty levels are dropped.
  ///
  /// Throws EmptyNodeError, OverlapError (siblings share a leaf),
  /// NestingError (a node has two parents or sits below a descendant) and
  /// DimensionError (leaf index out of range).
  static Hierarchy build(std::size_t n_bottom, std::vector<std::vector<LeafSet>> levels);

  std::size_t n_bottom() const noexcept { return n_bottom_; }
  std::size_t n_upper() const noexcept { return rows_.size(); }
  std::size_t n_nodes() const noexcept { return n_bottom_ + rows_.size(); }
  std::size_t n_levels() const noexcept { return levels_.size(); }

  const std::vector<LeafSet>& level(std::size_t l) const { return levels_.at(l); }
  const std::vector<std::vector<LeafSet>>& levels() const noexcept { return levels_; }

  /// Upper nodes in aggregating-matrix row order.
  const std::vector<LeafSet>& constraints() const noexcept { return rows_; }

  /// Row index of node j at level l.
  std::size_t row_of(std::size_t l, std::size_t j) const { return row_index_.at(l).at(j); }

 private:
  std::size_t n_bottom_ = 0;
  std::vector<std::vector<LeafSet>> levels_;
  std::vector<LeafSet> rows_;
  std::vector<std::vector<std::size_t>> row_index_;
};

/// A general constraint set split into a maximal tree sub-hierarchy plus
/// residual constraints. Constraint order is the caller's input order; this
/// is also the row order of its aggregating matrix.
class GroupedStructure {
 public:
  GroupedStructure() = default;
  GroupedStructure(std::size_t n_bottom, std::vector<LeafSet> constraints, Hierarchy sub,
                   std::vector<std::size_t> sub_rows, std::vector<std::size_t> extra);

  std::size_t n_bottom() const noexcept { return n_bottom_; }
  std::size_t n_upper() const noexcept { return constraints_.size(); }
  std::size_t n_nodes() const noexcept { return n_bottom_ + constraints_.size(); }
  const std::vector<LeafSet>& constraints() const noexcept { return constraints_; }

  const Hierarchy& subhierarchy() const noexcept { return sub_; }
  /// For each row of the sub-hierarchy, the index of the matching constraint.
  const std::vector<std::size_t>& subhierarchy_rows() const noexcept { return sub_rows_; }
  /// Indices of the constraints left out of the sub-hierarchy.
  const std::vector<std::size_t>& extra_constraints() const noexcept { return extra_; }

  bool is_tree() const noexcept { return extra_.empty(); }

 private:
  std::size_t n_bottom_ = 0;
  std::vector<LeafSet> constraints_;
  Hierarchy sub_;
  std::vector<std::size_t> sub_rows_;
  std::vector<std::size_t> extra_;
};

/// Non-owning view of (n_bottom, constraints in row order). Both structure
/// types convert to it implicitly.
struct StructureView {
  std::size_t n_bottom = 0;
  std::span<const LeafSet> constraints;

  StructureView(std::size_t n, std::span<const LeafSet> c) : n_bottom(n), constraints(c) {}
  StructureView(const Hierarchy& h)  // NOLINT(google-explicit-constructor)
      : n_bottom(h.n_bottom()), constraints(h.constraints()) {}
  StructureView(const GroupedStructure& g)  // NOLINT(google-explicit-constructor)
      : n_bottom(g.n_bottom()), constraints(g.constraints()) {}

  std::size_t n_upper() const noexcept { return constraints.size(); }
  std::size_t n_nodes() const noexcept { return n_bottom + constraints.size(); }
};

/// Convenience wrapper around Hierarchy::build.
Hierarchy build_hierarchy(std::size_t n_bottom, std::vector<std::vector<LeafSet>> levels);

/// (n - m) x m binary aggregating matrix A.
Eigen::MatrixXd aggregating_matrix(StructureView s);

/// Summing matrix S = [A; I].
Eigen::MatrixXd summing_matrix(StructureView s);

/// Upper values A b for a bottom vector b.
std::vector<double> aggregate(StructureView s, std::span<const double> bottom);

/// Full vector y = [A b; b].
std::vector<double> lift(StructureView s, std::span<const double> bottom);

/// Temporal hierarchy of one full cycle of `base_periods` bottom periods:
/// one constraint per aligned, contiguous block of each aggregation factor.
/// Constraints are listed factor by factor in the given order. Throws
/// NonDivisorError when a factor does not divide `base_periods`, and
/// std::invalid_argument for factors <= 1 or repeated factors.
GroupedStructure temporal_structure(std::size_t base_periods, std::vector<std::size_t> factors);

/// Splits a constraint set into a maximum nesting-compatible sub-hierarchy and
/// residual constraints. See the implementation notes for the search rule.
GroupedStructure extract_max_subhierarchy(std::vector<LeafSet> constraints, std::size_t n_bottom);

/// Wraps a tree as a GroupedStructure with no extra constraints.
GroupedStructure as_grouped(const Hierarchy& h);

/// True iff max |u - A b| <= tol, with y = [u; b].
bool coherence_check(std::span<const double> y, StructureView s, double tol);

/// True iff every pair of leaf sets is either disjoint or nested.
bool is_nesting_compatible(std::span<const LeafSet> constraints);

/// Balanced binary hierarchy with 2^depth bottoms (depth = 3 gives 8 bottoms
/// and 4 + 2 + 1 upper nodes).
Hierarchy binary_hierarchy(std::size_t depth);

/// Short stable digest of a structure, used in provenance metadata.
std::string structure_digest(StructureView s);

}  // namespace hierreconc
