#include <filesystem>
#include <random>

#include "doctest.h"
#include "nn2sdt/errors.hpp"
#include "nn2sdt/tree.hpp"

using namespace nn2sdt;

namespace {

const std::filesystem::path kData = NN2SDT_DATA_DIR;

SoftDecisionTree fig1b() { return load_tree(kData / "fig1_tree.json"); }

// Balanced tree over x0 thresholds with 2^depth leaves.
SoftDecisionTree ladder(std::size_t depth, double lo, double hi, std::size_t& next_action) {
  if (depth == 0) return SoftDecisionTree::leaf(2, 4, 1 + (next_action++ % 4));
  const double mid = 0.5 * (lo + hi);
  auto left = ladder(depth - 1, lo, mid, next_action);
  auto right = ladder(depth - 1, mid, hi, next_action);
  return SoftDecisionTree::join({{1.0, 0.0}, -mid}, {}, left, right);
}

std::size_t count_containing(const std::vector<LeafDomain>& doms, std::span<const double> x, std::size_t* which) {
  std::size_t n = 0;
  for (const auto& d : doms)
    if (d.domain.contains(x)) ++n, *which = d.node;
  return n;
}

}  // namespace

TEST_CASE("fig1b evaluation") {
  const auto t = fig1b();
  CHECK(t.leaf_count() == 3);
  CHECK(sdt_eval(t, std::vector<double>{0.0, -1.0}) == 1);
  CHECK(sdt_eval(t, std::vector<double>{0.0, 0.002}) == 3);
  CHECK(sdt_eval(t, std::vector<double>{0.0, 0.001}) == 1);
  CHECK(sdt_eval(t, std::vector<double>{0.0, 0.0}) == 1);
  CHECK_THROWS_AS(sdt_eval(t, std::vector<double>{0.0}), StructuralError);
}

TEST_CASE("single leaf tree") {
  const auto t = SoftDecisionTree::leaf(3, 5, 4);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 100.0);
  for (int i = 0; i < 50; ++i) CHECK(sdt_eval(t, std::vector<double>{g(rng), g(rng), g(rng)}) == 4);
  const auto doms = leaf_domains(t);
  REQUIRE(doms.size() == 1);
  CHECK(doms[0].domain.constraints().empty());
  CHECK(doms[0].domain.dim() == 3);
}

TEST_CASE("fig1b leaf domains") {
  const auto doms = leaf_domains(fig1b());
  REQUIRE(doms.size() == 3);
  const auto& c0 = doms[0].domain.constraints();
  REQUIRE(c0.size() == 1);
  CHECK(c0[0].relation == Relation::leq);
  CHECK(c0[0].func == AffineFunc{{0.0, 1.0}, 0.0});
  CHECK(doms[0].action == 1);
  for (std::size_t k : {1u, 2u}) {
    const auto& c = doms[k].domain.constraints();
    REQUIRE(c.size() == 2);
    CHECK(c[0].relation == Relation::gt);
    CHECK(c[0].func == AffineFunc{{0.0, 1.0}, 0.0});
    CHECK(c[1].func == AffineFunc{{0.0, 1.0}, -0.001});
  }
  CHECK(doms[1].domain.constraints()[1].relation == Relation::leq);
  CHECK(doms[2].domain.constraints()[1].relation == Relation::gt);
  CHECK(doms[2].action == 3);
}

TEST_CASE("sigmoid-free threshold") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-30.0, 30.0);
  for (int i = 0; i < 2000; ++i) {
    const double g = i % 10 == 0 ? 0.0 : u(rng);
    CHECK((1.0 / (1.0 + std::exp(-g)) <= 0.5) == (g <= 0.0));
  }
}

TEST_CASE("domains partition and agree with evaluation") {
  std::size_t next = 0;
  const auto t = ladder(6, -1.0, 1.0, next);
  const auto doms = leaf_domains(t);
  CHECK(doms.size() == 64);
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(-1.2, 1.2);
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> x{u(rng), u(rng)};
    if (i % 50 == 0) x[0] = -1.0 + 2.0 * static_cast<double>(i % 64) / 64.0;  // on a threshold
    std::size_t which = 0;
    REQUIRE(count_containing(doms, x, &which) == 1);
    CHECK(which == sdt_leaf_index(t, x));
  }
}

TEST_CASE("round trip") {
  const auto path = std::filesystem::temp_directory_path() / "nn2sdt_test_tree.json";
  SUBCASE("fig1b") {
    const auto t = fig1b();
    save_tree(t, path);
    CHECK(load_tree(path) == t);
  }
  SUBCASE("1024 leaves with awkward doubles") {
    std::size_t next = 0;
    const auto t = ladder(10, -0.1, 0.3, next);
    CHECK(t.leaf_count() == 1024);
    CHECK(t.max_depth() == 10);
    save_tree(t, path);
    CHECK(load_tree(path) == t);
  }
  std::filesystem::remove(path);
}

TEST_CASE("malformed trees are rejected") {
  auto doc = tree_to_json(fig1b());
  auto d1 = doc;
  d1["root"]["left"]["leaf"] = {1, 0, 1};
  CHECK_THROWS_AS(tree_from_json(d1), ParseError);
  auto d2 = doc;
  d2["root"]["left"]["leaf"] = {1, 0};
  CHECK_THROWS_AS(tree_from_json(d2), ParseError);
  auto d3 = doc;
  d3["root"]["split"]["weights"] = {1.0};
  CHECK_THROWS_AS(tree_from_json(d3), ParseError);
  auto d4 = doc;
  d4["root"].erase("right");
  CHECK_THROWS_AS(tree_from_json(d4), ParseError);
  auto d5 = doc;
  d5["root"]["provenance"]["rule"] = "rule9";
  CHECK_THROWS_AS(tree_from_json(d5), ParseError);

  std::vector<SdtNode> cyclic{InnerNode{{{1.0}, 0.0}, {}, 0, 1}, LeafNode{{1}}};
  CHECK_THROWS_AS(SoftDecisionTree(1, 1, cyclic), StructuralError);
  std::vector<SdtNode> shared{InnerNode{{{1.0}, 0.0}, {}, 1, 1}, LeafNode{{1}}};
  CHECK_THROWS_AS(SoftDecisionTree(1, 1, shared), StructuralError);
}
