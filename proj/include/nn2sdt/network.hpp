#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "json.hpp"

namespace nn2sdt {

/// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  bool operator==(const Matrix&) const = default;
};

/// Fully connected ReLU network with an argmax output head.
///
/// Layers are numbered 1..L with layer 1 the input. Weights and biases exist
/// for layers 2..L; W^l has shape N^l x N^(l-1). Neuron and action indices
/// are 1-based in the public API.
class NeuralNetwork {
 public:
  NeuralNetwork(std::vector<std::size_t> widths, std::vector<Matrix> weights, std::vector<std::vector<double>> biases);

  std::size_t depth() const noexcept { return widths_.size(); }
  std::size_t width(std::size_t layer) const;
  const std::vector<std::size_t>& widths() const noexcept { return widths_; }
  std::size_t input_dim() const noexcept { return widths_.front(); }
  std::size_t action_count() const noexcept { return widths_.back(); }

  const Matrix& weight(std::size_t layer) const;
  std::span<const double> bias(std::size_t layer) const;

  bool operator==(const NeuralNetwork&) const = default;

 private:
  std::vector<std::size_t> widths_;
  std::vector<Matrix> weights_;
  std::vector<std::vector<double>> biases_;
};

/// W^l x + B^l.
std::vector<double> layer_feedforward(const NeuralNetwork& net, std::size_t layer, std::span<const double> x);

/// Pre-activation values of `layer` for network input x (ReLU between layers,
/// none after `layer` itself).
std::vector<double> layer_characteristic(const NeuralNetwork& net, std::size_t layer, std::span<const double> x);

/// 1-based index of the largest entry; ties go to the lowest index.
std::size_t argmax_lowest(std::span<const double> values);

/// Action selected by the network (1-based).
std::size_t nn_output(const NeuralNetwork& net, std::span<const double> x);

/// Weights i.i.d. uniform in [-1, 1] from a seeded mt19937_64. Output bias i
/// additionally gets i * 1e-3 / N^L so that generated cases rarely sit on an
/// exact output tie.
NeuralNetwork random_network(const std::vector<std::size_t>& widths, std::uint64_t seed);

nlohmann::json network_to_json(const NeuralNetwork& net);
NeuralNetwork network_from_json(const nlohmann::json& doc);
NeuralNetwork load_network(const std::filesystem::path& path);
void save_network(const NeuralNetwork& net, const std::filesystem::path& path);

}  // namespace nn2sdt
