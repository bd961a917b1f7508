#include "nn2sdt/network.hpp"

#include <random>
#include <string>

#include "nn2sdt/errors.hpp"
#include "nn2sdt/io.hpp"

namespace nn2sdt {

NeuralNetwork::NeuralNetwork(std::vector<std::size_t> widths, std::vector<Matrix> weights,
                             std::vector<std::vector<double>> biases)
    : widths_(std::move(widths)), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (widths_.size() < 2) throw StructuralError("network needs at least an input and an output layer");
  for (std::size_t l = 0; l < widths_.size(); ++l)
    if (widths_[l] == 0) throw StructuralError("layer " + std::to_string(l + 1) + " has width 0");
  if (weights_.size() != widths_.size() - 1 || biases_.size() != widths_.size() - 1)
    throw StructuralError("expected " + std::to_string(widths_.size() - 1) + " weight matrices and bias vectors");
  for (std::size_t l = 2; l <= widths_.size(); ++l) {
    const Matrix& w = weights_[l - 2];
    if (w.rows != widths_[l - 1] || w.cols != widths_[l - 2] || w.data.size() != w.rows * w.cols)
      throw StructuralError("W^" + std::to_string(l) + " must be " + std::to_string(widths_[l - 1]) + "x" +
                            std::to_string(widths_[l - 2]));
    if (biases_[l - 2].size() != widths_[l - 1])
      throw StructuralError("B^" + std::to_string(l) + " must have length " + std::to_string(widths_[l - 1]));
  }
}

std::size_t NeuralNetwork::width(std::size_t layer) const {
  if (layer < 1 || layer > depth()) throw StructuralError("layer index " + std::to_string(layer) + " out of range");
  return widths_[layer - 1];
}

const Matrix& NeuralNetwork::weight(std::size_t layer) const {
  if (layer < 2 || layer > depth()) throw StructuralError("no weights for layer " + std::to_string(layer));
  return weights_[layer - 2];
}

std::span<const double> NeuralNetwork::bias(std::size_t layer) const {
  if (layer < 2 || layer > depth()) throw StructuralError("no biases for layer " + std::to_string(layer));
  return biases_[layer - 2];
}

std::vector<double> layer_feedforward(const NeuralNetwork& net, std::size_t layer, std::span<const double> x) {
  const Matrix& w = net.weight(layer);
  const auto b = net.bias(layer);
  if (x.size() != w.cols)
    throw StructuralError("layer " + std::to_string(layer) + " expects input of length " + std::to_string(w.cols));
  std::vector<double> out(w.rows);
  for (std::size_t i = 0; i < w.rows; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < w.cols; ++j) acc += w(i, j) * x[j];
    out[i] = acc + b[i];
  }
  return out;
}

std::vector<double> layer_characteristic(const NeuralNetwork& net, std::size_t layer, std::span<const double> x) {
  if (layer < 2 || layer > net.depth()) throw StructuralError("layer index " + std::to_string(layer) + " out of range");
  if (x.size() != net.input_dim()) throw StructuralError("network input has the wrong dimension");
  std::vector<double> h = layer_feedforward(net, 2, x);
  for (std::size_t l = 3; l <= layer; ++l) {
    for (double& v : h) v = v > 0.0 ? v : 0.0;
    h = layer_feedforward(net, l, h);
  }
  return h;
}

std::size_t argmax_lowest(std::span<const double> values) {
  if (values.empty()) throw StructuralError("argmax of an empty vector");
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best + 1;
}

std::size_t nn_output(const NeuralNetwork& net, std::span<const double> x) {
  return argmax_lowest(layer_characteristic(net, net.depth(), x));
}

NeuralNetwork random_network(const std::vector<std::size_t>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw StructuralError("network needs at least an input and an output layer");
  for (std::size_t w : widths)
    if (w == 0) throw StructuralError("layer widths must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  for (std::size_t l = 1; l < widths.size(); ++l) {
    Matrix w(widths[l], widths[l - 1]);
    for (double& v : w.data) v = u(rng);
    std::vector<double> b(widths[l]);
    for (double& v : b) v = u(rng);
    weights.push_back(std::move(w));
    biases.push_back(std::move(b));
  }
  auto& out = biases.back();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += 1e-3 * static_cast<double>(i + 1) / static_cast<double>(out.size());
  return NeuralNetwork(widths, std::move(weights), std::move(biases));
}

nlohmann::json network_to_json(const NeuralNetwork& net) {
  nlohmann::json doc;
  doc["widths"] = net.widths();
  doc["weights"] = nlohmann::json::array();
  doc["biases"] = nlohmann::json::array();
  for (std::size_t l = 2; l <= net.depth(); ++l) {
    const Matrix& w = net.weight(l);
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < w.rows; ++i) {
      const auto r = w.row(i);
      rows.push_back(std::vector<double>(r.begin(), r.end()));
    }
    doc["weights"].push_back(std::move(rows));
    const auto b = net.bias(l);
    doc["biases"].push_back(std::vector<double>(b.begin(), b.end()));
  }
  return doc;
}

namespace {

double number_at(const nlohmann::json& v, const std::string& where) {
  if (!v.is_number()) throw ParseError(where + ": expected a number");
  return v.get<double>();
}

const nlohmann::json& array_at(const nlohmann::json& doc, const std::string& key) {
  if (!doc.is_object() || !doc.contains(key)) throw ParseError(key + ": missing field");
  const auto& v = doc.at(key);
  if (!v.is_array()) throw ParseError(key + ": expected an array");
  return v;
}

}  // namespace

NeuralNetwork network_from_json(const nlohmann::json& doc) {
  const auto& jw = array_at(doc, "widths");
  std::vector<std::size_t> widths;
  for (std::size_t l = 0; l < jw.size(); ++l) {
    const auto& v = jw[l];
    if (!v.is_number_integer() || v.get<long long>() < 1)
      throw ParseError("widths[" + std::to_string(l) + "]: expected a positive integer");
    widths.push_back(v.get<std::size_t>());
  }
  if (widths.size() < 2) throw ParseError("widths: need at least two layers");

  const auto& jweights = array_at(doc, "weights");
  const auto& jbiases = array_at(doc, "biases");
  if (jweights.size() != widths.size() - 1)
    throw ParseError("weights: expected " + std::to_string(widths.size() - 1) + " matrices");
  if (jbiases.size() != widths.size() - 1)
    throw ParseError("biases: expected " + std::to_string(widths.size() - 1) + " vectors");

  std::vector<Matrix> weights;
  std::vector<std::vector<double>> biases;
  for (std::size_t k = 0; k + 1 < widths.size(); ++k) {
    const std::size_t rows = widths[k + 1];
    const std::size_t cols = widths[k];
    const std::string wname = "weights[" + std::to_string(k) + "]";
    const auto& jm = jweights[k];
    if (!jm.is_array() || jm.size() != rows) throw ParseError(wname + ": expected " + std::to_string(rows) + " rows");
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      const auto& jr = jm[i];
      const std::string rname = wname + "[" + std::to_string(i) + "]";
      if (!jr.is_array() || jr.size() != cols) throw ParseError(rname + ": expected " + std::to_string(cols) + " columns");
      for (std::size_t j = 0; j < cols; ++j) m(i, j) = number_at(jr[j], rname + "[" + std::to_string(j) + "]");
    }
    weights.push_back(std::move(m));

    const std::string bname = "biases[" + std::to_string(k) + "]";
    const auto& jb = jbiases[k];
    if (!jb.is_array() || jb.size() != rows) throw ParseError(bname + ": expected " + std::to_string(rows) + " entries");
    std::vector<double> b(rows);
    for (std::size_t i = 0; i < rows; ++i) b[i] = number_at(jb[i], bname + "[" + std::to_string(i) + "]");
    biases.push_back(std::move(b));
  }
  return NeuralNetwork(std::move(widths), std::move(weights), std::move(biases));
}

NeuralNetwork load_network(const std::filesystem::path& path) {
  const nlohmann::json doc = read_json_file(path);
  try {
    return network_from_json(doc);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void save_network(const NeuralNetwork& net, const std::filesystem::path& path) {
  write_file_atomic(path, network_to_json(net).dump(1) + "\n");
}

}  // namespace nn2sdt
