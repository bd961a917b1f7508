#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <variant>
#include <vector>

#include "json.hpp"
#include "nn2sdt/lp.hpp"

namespace nn2sdt {

/// Which construction rule produced a split.
enum class SplitRule { none, relu, output };

struct Provenance {
  SplitRule rule = SplitRule::none;
  // relu: (layer, neuron); output: (i1, i2). All 1-based.
  std::size_t first = 0;
  std::size_t second = 0;

  static Provenance relu(std::size_t layer, std::size_t neuron) { return {SplitRule::relu, layer, neuron}; }
  static Provenance output(std::size_t i1, std::size_t i2) { return {SplitRule::output, i1, i2}; }

  bool operator==(const Provenance&) const = default;
};

/// Inner node. The sigmoid of the split is never evaluated: sigma(g) <= 0.5
/// exactly when g <= 0, so inputs with split(x) <= 0 go left.
struct InnerNode {
  AffineFunc split;
  Provenance provenance;
  std::size_t left = 0;
  std::size_t right = 0;

  bool operator==(const InnerNode&) const = default;
};

struct LeafNode {
  std::vector<int> q;  // one-hot

  std::size_t action() const;  // 1-based
  bool operator==(const LeafNode&) const = default;
};

using SdtNode = std::variant<InnerNode, LeafNode>;

/// Binary tree of affine splits with one-hot leaves, stored as a flat node
/// array in preorder with the root at index 0.
class SoftDecisionTree {
 public:
  SoftDecisionTree(std::size_t input_dim, std::size_t action_count, std::vector<SdtNode> nodes);

  static SoftDecisionTree leaf(std::size_t input_dim, std::size_t action_count, std::size_t action);
  static SoftDecisionTree join(AffineFunc split, Provenance provenance, const SoftDecisionTree& left,
                               const SoftDecisionTree& right);

  std::size_t input_dim() const noexcept { return input_dim_; }
  std::size_t action_count() const noexcept { return action_count_; }
  const std::vector<SdtNode>& nodes() const noexcept { return nodes_; }
  const SdtNode& node(std::size_t i) const { return nodes_.at(i); }
  std::size_t size() const noexcept { return nodes_.size(); }
  std::size_t leaf_count() const noexcept;
  std::size_t inner_count() const noexcept { return size() - leaf_count(); }
  std::size_t max_depth() const;

  bool operator==(const SoftDecisionTree&) const = default;

 private:
  std::size_t input_dim_;
  std::size_t action_count_;
  std::vector<SdtNode> nodes_;
};

/// Node index of the leaf reached by x.
std::size_t sdt_leaf_index(const SoftDecisionTree& tree, std::span<const double> x);

/// Action (1-based) of the leaf reached by x.
std::size_t sdt_eval(const SoftDecisionTree& tree, std::span<const double> x);

struct LeafDomain {
  std::size_t node = 0;
  std::size_t action = 0;
  Polyhedron domain;
};

/// Input set of every leaf: left edges add {g <= 0}, right edges {g > 0},
/// starting from R^n at the root. Returned in preorder.
std::vector<LeafDomain> leaf_domains(const SoftDecisionTree& tree);

/// Parent index of every node; the root maps to itself.
std::vector<std::size_t> parent_indices(const SoftDecisionTree& tree);

/// Input set routed to `node`, from the path constraints above it.
Polyhedron node_domain(const SoftDecisionTree& tree, const std::vector<std::size_t>& parents, std::size_t node);

nlohmann::json tree_to_json(const SoftDecisionTree& tree);
SoftDecisionTree tree_from_json(const nlohmann::json& doc);
SoftDecisionTree load_tree(const std::filesystem::path& path);
void save_tree(const SoftDecisionTree& tree, const std::filesystem::path& path);

}  // namespace nn2sdt
