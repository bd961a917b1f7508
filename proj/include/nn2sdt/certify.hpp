#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "nn2sdt/box.hpp"
#include "nn2sdt/network.hpp"
#include "nn2sdt/transform.hpp"
#include "nn2sdt/tree.hpp"

namespace nn2sdt {

/// Disagreements whose decisive quantity is within this relative distance of
/// zero are rounding ties: the stored split coefficients and the network's
/// own arithmetic each carry error of order 1e-16 there.
inline constexpr double kBandTolerance = 1e-12;

struct Mismatch {
  std::vector<double> x;
  std::size_t nn_action = 0;
  std::size_t sdt_action = 0;
  bool on_boundary = false;  // hyperplane-targeted sample
  double closeness = 0.0;    // see tie_closeness
};

/// Smallest relative magnitude |q| / (sum of |terms| of q) over the
/// quantities that decide either evaluation at x: every hidden
/// pre-activation, the gap between the two outputs' values, and every split
/// on the tree path.
double tie_closeness(const NeuralNetwork& net, const SoftDecisionTree& tree, std::span<const double> x,
                     std::size_t nn_action, std::size_t sdt_action);

struct EquivalenceReport {
  std::size_t samples_tested = 0;
  std::size_t boundary_samples_tested = 0;
  std::vector<Mismatch> mismatches;         // outside the rounding band
  std::vector<Mismatch> band_disagreements; // closeness <= kBandTolerance

  bool pass() const noexcept { return mismatches.empty(); }
};

struct SampleOptions {
  std::size_t samples = 100'000;
  std::uint64_t seed = 0;
  std::size_t points_per_split = 2;  // 0 disables hyperplane targeting
};

/// Points on each inner node's split hyperplane within its domain and the
/// region: an LP witness of D and {g = 0}, then vertices maximizing random
/// directions, each projected back onto g = 0. Each is followed by its two
/// neighbours 1e-6 (relative) off the hyperplane on either side.
std::vector<std::vector<double>> boundary_points(const SoftDecisionTree& tree, const Box& region,
                                                 std::size_t per_split, std::uint64_t seed);

/// Exact action comparison on uniform samples over `region` plus
/// hyperplane-targeted points.
EquivalenceReport sample_equivalence(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                                     const SampleOptions& options = {});
EquivalenceReport sample_equivalence_serial(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                                            const SampleOptions& options = {});

struct LeafCertificate {
  std::size_t node = 0;
  std::size_t action = 0;
  bool pass = false;
  std::string reason;             // empty when passing
  std::size_t competitor = 0;     // output that can beat `action`, if any
  std::vector<double> witness;    // point where it does
};

/// Rebuilds the activation table on every leaf domain from the network and
/// checks that the leaf's action wins everywhere on it.
std::vector<LeafCertificate> certify_leaves(const NeuralNetwork& net, const SoftDecisionTree& tree,
                                            double eps = kDefaultEps);
std::vector<LeafCertificate> certify_leaves_serial(const NeuralNetwork& net, const SoftDecisionTree& tree,
                                                   double eps = kDefaultEps);

struct SplitCertificate {
  std::size_t node = 0;
  bool pass = false;
  std::string reason;
};

/// Checks that each inner node's split is the function its provenance names,
/// recomputed from the network on that node's domain, and that the named
/// rule is the one the construction would pick there.
std::vector<SplitCertificate> certify_splits(const NeuralNetwork& net, const SoftDecisionTree& tree,
                                             double eps = kDefaultEps);

struct SizeAudit {
  std::size_t leaves = 0;
  std::size_t nodes = 0;
  SizeBound bound;
  SizeBound naive;
  double reduction_ratio = 0.0;  // 1 - leaves / naive
  bool within_bound = false;
};

SizeAudit audit_size(const SoftDecisionTree& tree, const std::vector<std::size_t>& widths);

struct LeafAffineCheck {
  std::size_t points = 0;
  double max_relative_error = 0.0;
};

/// Compares the leaf's output affine functions with the network's layer-L
/// values at points of each leaf domain inside `region`.
LeafAffineCheck check_leaf_affine(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                                  std::size_t per_leaf, std::uint64_t seed, double eps = kDefaultEps);

enum class MutationKind { leaf_flip, split_negation };

struct Mutant {
  MutationKind kind;
  std::size_t node;
  SoftDecisionTree tree;
};

/// Single-fault copies of `tree`: each leaf's action moved to the next index,
/// each split negated. All of them when there are at most `max_count`,
/// otherwise a seeded random subset of that size in node order.
std::vector<Mutant> make_mutants(const SoftDecisionTree& tree, std::size_t max_count, std::uint64_t seed);

struct CertifyReport {
  EquivalenceReport equivalence;
  std::vector<LeafCertificate> leaves;
  std::vector<SplitCertificate> splits;

  std::size_t failed_leaves() const noexcept;
  std::size_t failed_splits() const noexcept;
  bool pass() const noexcept { return equivalence.pass() && failed_leaves() == 0 && failed_splits() == 0; }
};

CertifyReport certify(const NeuralNetwork& net, const SoftDecisionTree& tree, const Box& region,
                      const SampleOptions& options = {}, double eps = kDefaultEps);

nlohmann::json report_to_json(const CertifyReport& report);
std::string report_to_text(const CertifyReport& report);

}  // namespace nn2sdt
