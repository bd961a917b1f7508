#include "nn2sdt/tree.hpp"

#include <string>

#include "nn2sdt/errors.hpp"
#include "nn2sdt/io.hpp"

namespace nn2sdt {

std::size_t LeafNode::action() const {
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] == 1) return i + 1;
  throw StructuralError("leaf without a hot entry");
}

namespace {

void check_one_hot(const std::vector<int>& q, std::size_t action_count, const std::string& where) {
  if (q.size() != action_count)
    throw StructuralError(where + ": leaf vector has length " + std::to_string(q.size()) + ", expected " +
                          std::to_string(action_count));
  std::size_t ones = 0;
  for (int v : q) {
    if (v != 0 && v != 1) throw StructuralError(where + ": leaf entries must be 0 or 1");
    ones += static_cast<std::size_t>(v);
  }
  if (ones != 1) throw StructuralError(where + ": leaf vector must be one-hot");
}

}  // namespace

SoftDecisionTree::SoftDecisionTree(std::size_t input_dim, std::size_t action_count, std::vector<SdtNode> nodes)
    : input_dim_(input_dim), action_count_(action_count), nodes_(std::move(nodes)) {
  if (input_dim_ == 0) throw StructuralError("tree input dimension must be positive");
  if (action_count_ == 0) throw StructuralError("tree action count must be positive");
  if (nodes_.empty()) throw StructuralError("tree has no nodes");
  std::vector<char> referenced(nodes_.size(), 0);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const std::string where = "node " + std::to_string(i);
    if (const auto* inner = std::get_if<InnerNode>(&nodes_[i])) {
      if (inner->split.dim() != input_dim_) throw StructuralError(where + ": split has the wrong dimension");
      // Children after their parent keeps the structure finite and acyclic.
      for (std::size_t c : {inner->left, inner->right}) {
        if (c <= i || c >= nodes_.size()) throw StructuralError(where + ": child index out of range");
        if (referenced[c]) throw StructuralError(where + ": node " + std::to_string(c) + " has two parents");
        referenced[c] = 1;
      }
    } else {
      check_one_hot(std::get<LeafNode>(nodes_[i]).q, action_count_, where);
    }
  }
  for (std::size_t i = 1; i < nodes_.size(); ++i)
    if (!referenced[i]) throw StructuralError("node " + std::to_string(i) + " is unreachable");
}

SoftDecisionTree SoftDecisionTree::leaf(std::size_t input_dim, std::size_t action_count, std::size_t action) {
  if (action < 1 || action > action_count) throw StructuralError("leaf action out of range");
  LeafNode leaf;
  leaf.q.assign(action_count, 0);
  leaf.q[action - 1] = 1;
  return SoftDecisionTree(input_dim, action_count, {leaf});
}

SoftDecisionTree SoftDecisionTree::join(AffineFunc split, Provenance provenance, const SoftDecisionTree& left,
                                        const SoftDecisionTree& right) {
  if (left.input_dim_ != right.input_dim_ || left.action_count_ != right.action_count_)
    throw StructuralError("joined subtrees disagree on shape");
  std::vector<SdtNode> nodes;
  nodes.reserve(1 + left.size() + right.size());
  nodes.emplace_back(InnerNode{std::move(split), provenance, 1, 1 + left.size()});
  auto append = [&nodes](const SoftDecisionTree& sub, std::size_t offset) {
    for (const auto& n : sub.nodes_) {
      if (const auto* inner = std::get_if<InnerNode>(&n)) {
        InnerNode moved = *inner;
        moved.left += offset;
        moved.right += offset;
        nodes.emplace_back(std::move(moved));
      } else {
        nodes.push_back(n);
      }
    }
  };
  append(left, 1);
  append(right, 1 + left.size());
  return SoftDecisionTree(left.input_dim_, left.action_count_, std::move(nodes));
}

std::size_t SoftDecisionTree::leaf_count() const noexcept {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += std::holds_alternative<LeafNode>(node) ? 1 : 0;
  return n;
}

std::size_t SoftDecisionTree::max_depth() const {
  std::vector<std::size_t> depth(nodes_.size(), 0);
  std::size_t best = 0;
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    best = std::max(best, depth[i]);
    if (const auto* inner = std::get_if<InnerNode>(&nodes_[i])) depth[inner->left] = depth[inner->right] = depth[i] + 1;
  }
  return best;
}

std::size_t sdt_leaf_index(const SoftDecisionTree& tree, std::span<const double> x) {
  if (x.size() != tree.input_dim()) throw StructuralError("tree input has the wrong dimension");
  std::size_t i = 0;
  const auto& nodes = tree.nodes();
  while (const auto* inner = std::get_if<InnerNode>(&nodes[i])) i = inner->split(x) <= 0.0 ? inner->left : inner->right;
  return i;
}

std::size_t sdt_eval(const SoftDecisionTree& tree, std::span<const double> x) {
  return std::get<LeafNode>(tree.nodes()[sdt_leaf_index(tree, x)]).action();
}

std::vector<LeafDomain> leaf_domains(const SoftDecisionTree& tree) {
  std::vector<LeafDomain> out;
  // Preorder walk with an explicit stack of (node, domain).
  std::vector<std::pair<std::size_t, Polyhedron>> stack;
  stack.emplace_back(0, Polyhedron(tree.input_dim()));
  while (!stack.empty()) {
    auto [i, dom] = std::move(stack.back());
    stack.pop_back();
    if (const auto* inner = std::get_if<InnerNode>(&tree.node(i))) {
      stack.emplace_back(inner->right, dom.with({inner->split, Relation::gt}));
      stack.emplace_back(inner->left, dom.with({inner->split, Relation::leq}));
    } else {
      out.push_back({i, std::get<LeafNode>(tree.node(i)).action(), std::move(dom)});
    }
  }
  return out;
}

std::vector<std::size_t> parent_indices(const SoftDecisionTree& tree) {
  std::vector<std::size_t> parents(tree.size(), 0);
  for (std::size_t i = 0; i < tree.size(); ++i)
    if (const auto* inner = std::get_if<InnerNode>(&tree.node(i))) parents[inner->left] = parents[inner->right] = i;
  return parents;
}

Polyhedron node_domain(const SoftDecisionTree& tree, const std::vector<std::size_t>& parents, std::size_t node) {
  std::vector<HalfSpace> path;
  for (std::size_t i = node; i != 0; i = parents.at(i)) {
    const auto& inner = std::get<InnerNode>(tree.node(parents[i]));
    path.push_back({inner.split, inner.left == i ? Relation::leq : Relation::gt});
  }
  // Root first, matching leaf_domains.
  return Polyhedron(tree.input_dim(), {path.rbegin(), path.rend()});
}

namespace {

nlohmann::json node_to_json(const SoftDecisionTree& tree, std::size_t i) {
  nlohmann::json j;
  if (const auto* inner = std::get_if<InnerNode>(&tree.node(i))) {
    j["split"] = {{"weights", inner->split.weights}, {"bias", inner->split.bias}};
    switch (inner->provenance.rule) {
      case SplitRule::relu:
        j["provenance"] = {{"rule", "relu"}, {"layer", inner->provenance.first}, {"neuron", inner->provenance.second}};
        break;
      case SplitRule::output:
        j["provenance"] = {{"rule", "output"}, {"i1", inner->provenance.first}, {"i2", inner->provenance.second}};
        break;
      case SplitRule::none: break;
    }
    j["left"] = node_to_json(tree, inner->left);
    j["right"] = node_to_json(tree, inner->right);
  } else {
    j["leaf"] = std::get<LeafNode>(tree.node(i)).q;
  }
  return j;
}

std::size_t index_field(const nlohmann::json& j, const char* key, const std::string& where) {
  if (!j.contains(key) || !j.at(key).is_number_integer() || j.at(key).get<long long>() < 1)
    throw ParseError(where + "." + key + ": expected a positive integer");
  return j.at(key).get<std::size_t>();
}

void node_from_json(const nlohmann::json& j, std::size_t n, std::vector<SdtNode>& nodes, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": expected an object");
  if (j.contains("leaf")) {
    const auto& jq = j.at("leaf");
    if (!jq.is_array()) throw ParseError(where + ".leaf: expected an array");
    LeafNode leaf;
    for (const auto& v : jq) {
      if (!v.is_number_integer()) throw ParseError(where + ".leaf: entries must be integers");
      leaf.q.push_back(v.get<int>());
    }
    nodes.emplace_back(std::move(leaf));
    return;
  }
  if (!j.contains("split") || !j.contains("left") || !j.contains("right"))
    throw ParseError(where + ": node needs either leaf or split/left/right");
  const auto& js = j.at("split");
  if (!js.is_object() || !js.contains("weights") || !js.at("weights").is_array() || js.at("weights").size() != n)
    throw ParseError(where + ".split.weights: expected " + std::to_string(n) + " numbers");
  if (!js.contains("bias") || !js.at("bias").is_number()) throw ParseError(where + ".split.bias: expected a number");
  InnerNode inner;
  for (const auto& w : js.at("weights")) {
    if (!w.is_number()) throw ParseError(where + ".split.weights: entries must be numbers");
    inner.split.weights.push_back(w.get<double>());
  }
  inner.split.bias = js.at("bias").get<double>();
  if (j.contains("provenance")) {
    const auto& jp = j.at("provenance");
    const std::string pw = where + ".provenance";
    if (!jp.is_object() || !jp.contains("rule") || !jp.at("rule").is_string()) throw ParseError(pw + ": missing rule");
    const auto rule = jp.at("rule").get<std::string>();
    if (rule == "relu")
      inner.provenance = Provenance::relu(index_field(jp, "layer", pw), index_field(jp, "neuron", pw));
    else if (rule == "output")
      inner.provenance = Provenance::output(index_field(jp, "i1", pw), index_field(jp, "i2", pw));
    else if (rule != "none")
      throw ParseError(pw + ".rule: unknown rule '" + rule + "'");
  }
  const std::size_t self = nodes.size();
  nodes.emplace_back(inner);
  std::get<InnerNode>(nodes[self]).left = nodes.size();
  node_from_json(j.at("left"), n, nodes, where + ".left");
  std::get<InnerNode>(nodes[self]).right = nodes.size();
  node_from_json(j.at("right"), n, nodes, where + ".right");
}

}  // namespace

nlohmann::json tree_to_json(const SoftDecisionTree& tree) {
  return {{"input_dim", tree.input_dim()}, {"action_count", tree.action_count()}, {"root", node_to_json(tree, 0)}};
}

SoftDecisionTree tree_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) throw ParseError("tree: expected an object");
  for (const char* key : {"input_dim", "action_count"})
    if (!doc.contains(key) || !doc.at(key).is_number_integer() || doc.at(key).get<long long>() < 1)
      throw ParseError(std::string(key) + ": expected a positive integer");
  if (!doc.contains("root")) throw ParseError("root: missing field");
  const auto n = doc.at("input_dim").get<std::size_t>();
  const auto actions = doc.at("action_count").get<std::size_t>();
  std::vector<SdtNode> nodes;
  node_from_json(doc.at("root"), n, nodes, "root");
  try {
    return SoftDecisionTree(n, actions, std::move(nodes));
  } catch (const StructuralError& e) {
    throw ParseError(std::string("tree: ") + e.what());
  }
}

SoftDecisionTree load_tree(const std::filesystem::path& path) {
  const nlohmann::json doc = read_json_file(path);
  try {
    return tree_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_tree(const SoftDecisionTree& tree, const std::filesystem::path& path) {
  write_file_atomic(path, tree_to_json(tree).dump() + "\n");
}

}  // namespace nn2sdt
