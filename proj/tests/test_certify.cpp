#include <filesystem>
#include <random>

#include "doctest.h"
#include "nn2sdt/certify.hpp"
#include "nn2sdt/errors.hpp"

using namespace nn2sdt;

namespace {

const std::filesystem::path kData = NN2SDT_DATA_DIR;

NeuralNetwork fig1() { return load_network(kData / "fig1_network.json"); }

SoftDecisionTree flip_leaf(const SoftDecisionTree& t, std::size_t node) {
  auto nodes = t.nodes();
  auto& q = std::get<LeafNode>(nodes[node]).q;
  const std::size_t a = std::get<LeafNode>(nodes[node]).action();
  q[a - 1] = 0;
  q[a % q.size()] = 1;
  return SoftDecisionTree(t.input_dim(), t.action_count(), nodes);
}

bool all_pass(const std::vector<LeafCertificate>& cs) {
  return std::all_of(cs.begin(), cs.end(), [](const auto& c) { return c.pass; });
}

}  // namespace

TEST_CASE("fig1 pair is equivalent") {
  const auto net = fig1();
  const auto tree = load_tree(kData / "fig1_tree.json");
  const auto r = sample_equivalence(net, tree, Box::cube(2, 1.0), {10000, 0, 2});
  CHECK(r.samples_tested == 10000);
  CHECK(r.boundary_samples_tested > 0);
  CHECK(r.mismatches.empty());
  CHECK(r.band_disagreements.empty());  // first-layer and exact-tie splits agree bitwise
  const auto leaves = certify_leaves(net, tree);
  REQUIRE(leaves.size() == 3);
  CHECK(all_pass(leaves));
  for (const auto& c : certify_splits(net, tree)) CHECK(c.pass);
}

TEST_CASE("fig1 boundary points hit the tie") {
  const auto tree = load_tree(kData / "fig1_tree.json");
  const auto pts = boundary_points(tree, Box::cube(2, 1.0), 1, 0);
  // Root split x1 = 0 and output split x1 = 0.001, each with two neighbours.
  REQUIRE(pts.size() == 6);
  CHECK(pts[0][1] == 0.0);
  CHECK(pts[3][1] == doctest::Approx(0.001).epsilon(1e-15));
  CHECK(pts[1][1] < 0.0);
  CHECK(pts[2][1] > 0.0);
}

TEST_CASE("leaf flip is caught by sampling and by certificates") {
  const auto net = fig1();
  const auto tree = load_tree(kData / "fig1_tree.json");
  const auto bad = flip_leaf(tree, 1);  // v1 now says action 2
  const auto r = sample_equivalence(net, bad, Box::cube(2, 1.0), {10000, 0, 2});
  CHECK_FALSE(r.mismatches.empty());
  const auto leaves = certify_leaves(net, bad);
  const auto it = std::find_if(leaves.begin(), leaves.end(), [](const auto& c) { return !c.pass; });
  REQUIRE(it != leaves.end());
  CHECK(it->node == 1);
  CHECK(it->competitor == 1);
  REQUIRE(it->witness.size() == 2);
  CHECK(it->witness[1] <= 1e-9);  // inside {x1 <= 0}
  CHECK(nn_output(net, it->witness) != 2);
}

TEST_CASE("single leaf zero network is certified") {
  const NeuralNetwork net({2, 2}, {Matrix(2, 2)}, {{0.0, 0.0}});
  const auto tree = SoftDecisionTree::leaf(2, 2, 1);
  CHECK(all_pass(certify_leaves(net, tree)));
  CHECK_FALSE(all_pass(certify_leaves(net, SoftDecisionTree::leaf(2, 2, 2))));
  const auto a = audit_size(tree, {2, 2});
  CHECK(a.leaves == 1);
  CHECK(a.within_bound);
}

TEST_CASE("random (2,8,8,3) pair over 1e5 samples") {
  const auto net = random_network({2, 8, 8, 3}, 0);
  const auto tree = transform(net);
  const auto r = sample_equivalence(net, tree, Box::cube(2, 10.0), {100000, 0, 2});
  CHECK(r.mismatches.empty());
  for (const auto& m : r.band_disagreements) {
    CHECK(m.on_boundary);
    CHECK(m.closeness <= 1e-15);
  }
  CHECK(all_pass(certify_leaves(net, tree)));
}

TEST_CASE("serial and parallel certification agree") {
  const auto net = random_network({3, 8, 3}, 2);
  const auto tree = transform(net);
  const auto box = Box::cube(3, 5.0);
  const auto a = sample_equivalence(net, tree, box, {5000, 9, 2});
  const auto b = sample_equivalence_serial(net, tree, box, {5000, 9, 2});
  CHECK(a.boundary_samples_tested == b.boundary_samples_tested);
  CHECK(a.band_disagreements.size() == b.band_disagreements.size());
  CHECK(a.mismatches.size() == b.mismatches.size());
  const auto la = certify_leaves(net, tree), lb = certify_leaves_serial(net, tree);
  REQUIRE(la.size() == lb.size());
  for (std::size_t k = 0; k < la.size(); ++k) CHECK((la[k].pass == lb[k].pass && la[k].node == lb[k].node));
}

TEST_CASE("size audit") {
  const auto a = audit_size(load_tree(kData / "fig1_tree.json"), {2, 1, 3});
  CHECK(a.leaves == 3);
  CHECK(a.nodes == 5);
  CHECK(a.bound.value == 16);
  CHECK(a.naive.value == 8);
  CHECK(a.reduction_ratio == doctest::Approx(0.625));
  CHECK(a.within_bound);

  const auto net = random_network({2, 16, 16, 3}, 0);
  const auto b = audit_size(transform(net), net.widths());
  CHECK(b.leaves <= b.bound.value);
}

TEST_CASE("every mutant is detected") {
  const auto net = random_network({2, 8, 8, 3}, 1);
  const auto tree = transform(net);
  const auto mutants = make_mutants(tree, 100, 5);
  CHECK(mutants.size() == 100);
  for (const auto& m : mutants) {
    const auto r = certify(net, m.tree, Box::cube(2, 10.0), {2000, 1, 2});
    CHECK_MESSAGE(!r.pass(), "node " << m.node);
  }
  // Every site is used when there are fewer than the cap.
  const auto small = make_mutants(load_tree(kData / "fig1_tree.json"), 100, 0);
  CHECK(small.size() == 5);
  CHECK(std::count_if(small.begin(), small.end(), [](const auto& m) { return m.kind == MutationKind::leaf_flip; }) == 3);
}

TEST_CASE("passing leaves never disagree inside their domain") {
  const auto net = random_network({2, 6, 6, 3}, 8);
  const auto tree = transform(net);
  const auto certs = certify_leaves(net, tree);
  REQUIRE(all_pass(certs));
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  const auto leaves = leaf_domains(tree);
  for (int s = 0; s < 20000; ++s) {
    const std::vector<double> x{u(rng), u(rng)};
    for (const auto& leaf : leaves)
      if (leaf.domain.contains(x)) CHECK(nn_output(net, x) == leaf.action);
  }
}

TEST_CASE("tie closeness") {
  const auto net = fig1();
  const auto tree = load_tree(kData / "fig1_tree.json");
  CHECK(tie_closeness(net, tree, std::vector<double>{0.0, 0.001}, 1, 3) == 0.0);
  CHECK(tie_closeness(net, tree, std::vector<double>{0.0, 0.5}, 1, 3) > 0.1);
}
