#include <filesystem>
#include <random>

#include "doctest.h"
#include "nn2sdt/errors.hpp"
#include "nn2sdt/network.hpp"

using namespace nn2sdt;

namespace {

const std::filesystem::path kData = NN2SDT_DATA_DIR;

NeuralNetwork fig1() { return load_network(kData / "fig1_network.json"); }

std::vector<bool> pattern(const NeuralNetwork& net, std::span<const double> x) {
  std::vector<bool> signs;
  for (std::size_t l = 2; l < net.depth(); ++l)
    for (double v : layer_characteristic(net, l, x)) signs.push_back(v > 0.0);
  return signs;
}

}  // namespace

TEST_CASE("fig1 layer feedforward") {
  const auto net = fig1();
  const std::vector<double> x{7.0, -2.0};
  CHECK(layer_feedforward(net, 2, x) == std::vector<double>{-2.0});
  const std::vector<double> h{0.5};
  CHECK(layer_feedforward(net, 3, h) == std::vector<double>{0.001, 0.0, 0.5});
}

TEST_CASE("zero-weight layer returns its bias") {
  const NeuralNetwork net({3, 2}, {Matrix(2, 3)}, {{1.5, -4.0}});
  const std::vector<double> x{9.0, -1.0, 3.0};
  CHECK(layer_feedforward(net, 2, x) == std::vector<double>{1.5, -4.0});
}

TEST_CASE("fig1 characteristic") {
  const auto net = fig1();
  const std::vector<double> a{0.0, -4.0}, b{0.0, 0.5};
  CHECK(layer_characteristic(net, 3, a) == std::vector<double>{0.001, 0.0, 0.0});
  CHECK(layer_characteristic(net, 3, b) == std::vector<double>{0.001, 0.0, 0.5});
}

TEST_CASE("identity pass-through") {
  Matrix eye(2, 2);
  eye(0, 0) = eye(1, 1) = 1.0;
  const NeuralNetwork net({2, 2}, {eye}, {{0.0, 0.0}});
  const std::vector<double> x{-3.25, 8.0};
  CHECK(layer_characteristic(net, 2, x) == x);
}

TEST_CASE("fig1 output with lowest-index tie break") {
  const auto net = fig1();
  CHECK(nn_output(net, std::vector<double>{0.0, -1.0}) == 1);
  CHECK(nn_output(net, std::vector<double>{0.0, 0.002}) == 3);
  CHECK(nn_output(net, std::vector<double>{0.0, 0.001}) == 1);
}

TEST_CASE("argmax ties") {
  CHECK(argmax_lowest(std::vector<double>{1.0, 1.0, 1.0}) == 1);
  CHECK(argmax_lowest(std::vector<double>{0.0, 2.0, 2.0}) == 2);
  CHECK_THROWS_AS(argmax_lowest(std::vector<double>{}), StructuralError);
}

TEST_CASE("shape errors") {
  const auto net = fig1();
  CHECK_THROWS_AS(layer_feedforward(net, 1, std::vector<double>{0.0}), StructuralError);
  CHECK_THROWS_AS(layer_feedforward(net, 4, std::vector<double>{0.0}), StructuralError);
  CHECK_THROWS_AS(layer_feedforward(net, 2, std::vector<double>{0.0}), StructuralError);
  CHECK_THROWS_AS(nn_output(net, std::vector<double>{0.0, 0.0, 0.0}), StructuralError);
  CHECK_THROWS_AS(NeuralNetwork({2, 3}, {Matrix(2, 2)}, {{0.0, 0.0, 0.0}}), StructuralError);
  CHECK_THROWS_AS(NeuralNetwork({2, 0}, {Matrix(0, 2)}, {{}}), StructuralError);
}

TEST_CASE("random networks") {
  const auto a = random_network({2, 1, 3}, 0);
  const auto b = random_network({2, 1, 3}, 0);
  CHECK(a == b);
  CHECK_FALSE(a == random_network({2, 1, 3}, 1));

  const auto net = random_network({4, 8, 8, 2}, 7);
  REQUIRE(net.depth() == 4);
  for (std::size_t l = 2; l <= 4; ++l) {
    CHECK(net.weight(l).rows == net.width(l));
    CHECK(net.weight(l).cols == net.width(l - 1));
    CHECK(net.bias(l).size() == net.width(l));
  }
  for (std::size_t l = 2; l < 4; ++l)
    for (double v : net.weight(l).data) CHECK(std::abs(v) <= 1.0);
}

TEST_CASE("json round trip is exact") {
  const auto net = random_network({3, 5, 4, 2}, 99);
  CHECK(network_from_json(network_to_json(net)) == net);
  const auto path = std::filesystem::temp_directory_path() / "nn2sdt_test_network.json";
  save_network(net, path);
  CHECK(load_network(path) == net);
  std::filesystem::remove(path);
}

TEST_CASE("parse errors name the field") {
  auto doc = network_to_json(fig1());
  auto expect = [](const nlohmann::json& d, const std::string& field) {
    try {
      network_from_json(d);
      FAIL("accepted a malformed document");
    } catch (const ParseError& e) {
      CHECK(std::string(e.what()).find(field) != std::string::npos);
    }
  };
  auto d1 = doc;
  d1.erase("biases");
  expect(d1, "biases");
  auto d2 = doc;
  d2["weights"][0][0] = {1.0};
  expect(d2, "weights[0][0]");
  auto d3 = doc;
  d3["widths"][1] = 0;
  expect(d3, "widths[1]");
  auto d4 = doc;
  d4["biases"][1][2] = "x";
  expect(d4, "biases[1][2]");
  CHECK_THROWS_AS(load_network(kData / "does_not_exist.json"), ParseError);
}

TEST_CASE("affine within an activation pattern") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  const auto net = random_network({3, 8, 8, 4}, 21);
  int checked = 0;
  for (int trial = 0; trial < 4000 && checked < 300; ++trial) {
    std::vector<double> x{u(rng), u(rng), u(rng)}, y(3), m(3);
    for (int k = 0; k < 3; ++k) y[k] = x[k] + 1e-3 * u(rng);
    for (int k = 0; k < 3; ++k) m[k] = 0.5 * (x[k] + y[k]);
    const auto px = pattern(net, x);
    if (px != pattern(net, y) || px != pattern(net, m)) continue;
    ++checked;
    const auto fx = layer_characteristic(net, 4, x), fy = layer_characteristic(net, 4, y);
    const auto fm = layer_characteristic(net, 4, m);
    for (std::size_t i = 0; i < fm.size(); ++i) {
      const double mid = 0.5 * (fx[i] + fy[i]);
      CHECK(std::abs(fm[i] - mid) <= 1e-9 * std::max(1.0, std::abs(mid)));
    }
  }
  CHECK(checked >= 300);
}
