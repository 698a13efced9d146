#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fedaugmix/tensor.hpp"

namespace fam {

enum class Activation { relu, sigmoid };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

struct ModelSpec {
  // Input dimension, hidden widths, class count.
  std::vector<std::size_t> layer_sizes;
  Activation activation = Activation::relu;
  std::uint64_t init_seed = 0;

  void validate() const;
  std::size_t input_dim() const { return layer_sizes.front(); }
  std::size_t class_count() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }
};

// Dense MLP parameters, ordered W0, b0, W1, b1, ... with W_i of shape
// [fan_in x fan_out] and b_i of shape [fan_out].
struct ModelState {
  ModelSpec spec;
  std::vector<Tensor> params;

  const Tensor& weight(std::size_t layer) const { return params[2 * layer]; }
  const Tensor& bias(std::size_t layer) const { return params[2 * layer + 1]; }
  std::size_t parameter_count() const;
};

ModelState init_model(const ModelSpec& spec);

// Copy of `model` whose parameters are leaves of `graph`.
ModelState attach(Graph& graph, const ModelState& model);
ModelState detach(const ModelState& model);

Tensor logits(const ModelState& model, const Tensor& batch);
// Softmax probability rows, one per batch row.
Tensor forward(const ModelState& model, const Tensor& batch);
// Argmax of the logits; ties resolve to the lowest class index.
std::vector<std::size_t> predict(const ModelState& model, const Tensor& batch);

// Checks that `b` has the same layer geometry as `a`.
bool same_geometry(const ModelState& a, const ModelState& b);

// Snapshot format: the ASCII header line
//   FAMB-MODEL v1; layer_sizes=784,128,10;\n
// followed by every parameter (W0, b0, W1, b1, ...) as little-endian float64.
void save_model(const ModelState& model, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path, Activation activation = Activation::relu);

}  // namespace fam
