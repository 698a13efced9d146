#include "fedaugmix/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "fedaugmix/errors.hpp"

namespace fam {

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "sigmoid") return Activation::sigmoid;
  throw ConfigError("unknown activation '" + name + "' (expected relu or sigmoid)");
}

const char* activation_name(Activation a) { return a == Activation::relu ? "relu" : "sigmoid"; }

void ModelSpec::validate() const {
  if (layer_sizes.size() < 2) throw ConfigError("model needs at least an input and an output layer");
  for (auto s : layer_sizes) {
    if (s == 0) throw ConfigError("layer sizes must be positive");
  }
  if (class_count() < 2) throw ConfigError("model needs at least two classes");
}

std::size_t ModelState::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.numel();
  return n;
}

ModelState init_model(const ModelSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.init_seed);
  ModelState model{spec, {}};
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    const std::size_t fan_in = spec.layer_sizes[l];
    const std::size_t fan_out = spec.layer_sizes[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    std::vector<double> w(fan_in * fan_out);
    for (auto& v : w) v = u(rng);
    model.params.emplace_back(Shape{fan_in, fan_out}, std::move(w));
    model.params.push_back(Tensor::zeros({fan_out}));
  }
  return model;
}

ModelState attach(Graph& graph, const ModelState& model) {
  ModelState out{model.spec, {}};
  out.params.reserve(model.params.size());
  for (const auto& p : model.params) out.params.push_back(graph.leaf(p));
  return out;
}

ModelState detach(const ModelState& model) {
  ModelState out{model.spec, {}};
  for (const auto& p : model.params) out.params.push_back(p.detach());
  return out;
}

Tensor logits(const ModelState& model, const Tensor& batch) {
  if (batch.rank() != 2 || batch.shape()[1] != model.spec.input_dim()) {
    throw DimensionError("model expects input dimension " + std::to_string(model.spec.input_dim()) +
                         ", got batch " + shape_str(batch.shape()));
  }
  Tensor h = batch;
  const std::size_t layers = model.spec.layer_count();
  for (std::size_t l = 0; l < layers; ++l) {
    h = add(matmul(h, model.weight(l)), model.bias(l));
    if (l + 1 < layers) h = model.spec.activation == Activation::relu ? relu(h) : sigmoid(h);
  }
  return h;
}

Tensor forward(const ModelState& model, const Tensor& batch) { return softmax(logits(model, batch)); }

std::vector<std::size_t> predict(const ModelState& model, const Tensor& batch) {
  const Tensor z = logits(detach(model), batch.detach());
  const std::size_t classes = z.shape()[1];
  std::vector<std::size_t> out(z.shape()[0]);
  const auto v = z.data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    auto first = v.begin() + r * classes;
    out[r] = static_cast<std::size_t>(std::max_element(first, first + classes) - first);
  }
  return out;
}

bool same_geometry(const ModelState& a, const ModelState& b) {
  if (a.params.size() != b.params.size()) return false;
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    if (a.params[i].shape() != b.params[i].shape()) return false;
  }
  return true;
}

namespace {

std::string header_for(const ModelSpec& spec) {
  std::ostringstream os;
  os << "FAMB-MODEL v1; layer_sizes=";
  for (std::size_t i = 0; i < spec.layer_sizes.size(); ++i) {
    if (i) os << ',';
    os << spec.layer_sizes[i];
  }
  os << ";\n";
  return os.str();
}

void put_le(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
  os.write(reinterpret_cast<const char*>(b), 8);
}

}  // namespace

void save_model(const ModelState& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << header_for(model.spec);
  for (const auto& p : model.params)
    for (double v : p.data()) put_le(os, v);
  if (!os) throw IoError("failed writing " + path.string());
}

ModelState load_model(const std::filesystem::path& path, Activation activation) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open model snapshot " + path.string());
  std::string header;
  std::getline(is, header);
  const std::string prefix = "FAMB-MODEL v1; layer_sizes=";
  if (header.rfind(prefix, 0) != 0 || header.empty() || header.back() != ';') {
    throw FormatError(path.string() + ": bad snapshot header '" + header + "'");
  }
  ModelSpec spec;
  spec.activation = activation;
  std::stringstream sizes(header.substr(prefix.size(), header.size() - prefix.size() - 1));
  std::string item;
  while (std::getline(sizes, item, ',')) {
    try {
      spec.layer_sizes.push_back(std::stoul(item));
    } catch (const std::exception&) {
      throw FormatError(path.string() + ": bad layer size '" + item + "'");
    }
  }
  spec.validate();
  ModelState model = init_model(spec);
  for (auto& p : model.params) {
    std::vector<double> values(p.numel());
    for (auto& v : values) {
      unsigned char b[8];
      if (!is.read(reinterpret_cast<char*>(b), 8)) {
        throw FormatError(path.string() + ": truncated parameter data");
      }
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(b[i]) << (8 * i);
      v = std::bit_cast<double>(bits);
    }
    p = Tensor(p.shape(), std::move(values));
  }
  if (is.peek() != std::char_traits<char>::eof()) {
    throw FormatError(path.string() + ": trailing bytes after parameter data");
  }
  return model;
}

}  // namespace fam
