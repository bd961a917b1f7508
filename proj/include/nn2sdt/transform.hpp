#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "nn2sdt/lp.hpp"
#include "nn2sdt/network.hpp"
#include "nn2sdt/tree.hpp"

namespace nn2sdt {

/// Sign behaviour of a hidden neuron over a domain.
enum class Phase : unsigned char {
  unknown,   // not examined yet
  active,    // pre > 0 everywhere on the domain
  inactive,  // pre <= 0 everywhere on the domain
  crossing,  // both sides are feasible
};

/// Pre- and post-activation functions of every neuron, as affine functions of
/// the network input, valid on one domain. Undefined entries are nullopt.
///
/// Decided phases stay valid on any subset of the domain, so a child node
/// starts from a copy of its parent's table with crossing reset to unknown.
class ActivationTable {
 public:
  explicit ActivationTable(const NeuralNetwork& net);

  std::size_t depth() const noexcept { return pre_.size() + 1; }
  std::size_t width(std::size_t layer) const { return pre_.at(layer - 2).size(); }

  /// Layers 2..L, neurons 1..N^l.
  const std::optional<AffineFunc>& pre(std::size_t layer, std::size_t neuron) const;
  /// Layers 2..L-1: pre when active, 0 when inactive, undefined otherwise.
  std::optional<AffineFunc> post(std::size_t layer, std::size_t neuron) const;
  Phase phase(std::size_t layer, std::size_t neuron) const;

  /// True when every output pre-activation is defined.
  bool output_defined() const;
  /// Output pre-activations; requires output_defined().
  std::vector<AffineFunc> outputs() const;

  /// Fill in phases and deeper rows over `domain`. With `stop_at_crossing`
  /// the scan ends at the first crossing neuron.
  void refine(const NeuralNetwork& net, const Polyhedron& domain, double eps, bool stop_at_crossing);

  /// Table for a subset of this table's domain on which `neuron` of `layer`
  /// is known to have the given phase.
  ActivationTable child(std::size_t layer, std::size_t neuron, Phase known) const;
  ActivationTable child() const;

 private:
  void compute_row(const NeuralNetwork& net, std::size_t layer);

  std::vector<std::vector<std::optional<AffineFunc>>> pre_;  // index l-2
  std::vector<std::vector<Phase>> phase_;                     // index l-2, hidden layers only
};

/// Full table on `domain` (no early stop).
ActivationTable build_activation_table(const NeuralNetwork& net, const Polyhedron& domain, double eps = kDefaultEps);

/// Smallest (layer, neuron), layer-major, whose pre-activation is defined and
/// crosses zero on the domain.
std::optional<std::pair<std::size_t, std::size_t>> try_rule1(const ActivationTable& table);

/// Region of the domain where output i wins under lowest-index tie breaking:
/// F_i > F_j for j < i and F_i >= F_j for j > i.
Polyhedron winner_region(const std::vector<AffineFunc>& outputs, std::size_t i, const Polyhedron& domain);

/// First two outputs i1 < i2 whose winner regions are both feasible.
std::optional<std::pair<std::size_t, std::size_t>> try_rule2(const ActivationTable& table, const Polyhedron& domain,
                                                             double eps = kDefaultEps);

/// Split used for an output pair: g = F_i2 - F_i1, so g <= 0 (left) keeps
/// the tie with the lower index.
AffineFunc output_split(const std::vector<AffineFunc>& outputs, std::size_t i1, std::size_t i2);

/// Index i certified to win on the whole domain: D and {F_j >= F_i} empty for
/// j < i, D and {F_j > F_i} empty for j > i.
std::size_t make_leaf(const ActivationTable& table, const Polyhedron& domain, double eps = kDefaultEps);

struct TransformOptions {
  double eps = kDefaultEps;
  std::size_t max_nodes = 1'000'000;
  std::size_t parallel_depth = 12;  // task spawning stops below this depth
};

/// Exact tree equivalent of `net`, built with OpenMP tasks.
SoftDecisionTree transform(const NeuralNetwork& net, const TransformOptions& options = {});

/// Single-threaded reference build. Produces the same tree as transform().
SoftDecisionTree transform_serial(const NeuralNetwork& net, const TransformOptions& options = {});

struct SizeBound {
  std::uint64_t value = 0;
  bool saturated = false;
};

/// Leaf-count bound prod_{l=2}^{L-1} sum_{k=0}^{N^1} C(N^l, k) * 2^{N^L}.
SizeBound size_bound(const std::vector<std::size_t>& widths);

/// Leaves of the tree that splits on every hidden neuron and every output
/// pair without pruning: 2^(sum of hidden widths) * 2^(N^L - 1).
SizeBound naive_full_split(const std::vector<std::size_t>& widths);

}  // namespace nn2sdt
