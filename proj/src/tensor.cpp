#include "fedaugmix/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fedaugmix/errors.hpp"

namespace fam {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)) {
  if (shape_.empty()) throw DimensionError("tensor shape must have at least one extent");
  for (auto e : shape_) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape_));
  }
  if (shape_numel(shape_) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape_));
  }
  data_ = std::make_shared<const std::vector<double>>(std::move(data));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({1}, {value}); }

std::span<const double> Tensor::data() const {
  if (!data_) return {};
  return {data_->data(), data_->size()};
}

double Tensor::item() const {
  if (numel() != 1) throw RankError("item() requires a one-element tensor, got " + shape_str(shape_));
  return (*data_)[0];
}

Tensor Tensor::detach() const {
  Tensor t = *this;
  t.graph_ = nullptr;
  t.node_ = -1;
  return t;
}

std::vector<double> Tensor::to_vector() const {
  if (!data_) return {};
  return *data_;
}

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::div: return "div";
    case OpKind::scalar_mul: return "scalar_mul";
    case OpKind::scalar_add: return "scalar_add";
    case OpKind::relu: return "relu";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::reshape: return "reshape";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::log: return "log";
    case OpKind::exp: return "exp";
    case OpKind::sqrt: return "sqrt";
    case OpKind::abs: return "abs";
    case OpKind::max_reduce: return "max_reduce";
    case OpKind::softmax: return "softmax";
    case OpKind::log_softmax: return "log_softmax";
    case OpKind::clamp: return "clamp";
    case OpKind::broadcast_to: return "broadcast_to";
    case OpKind::sum_to: return "sum_to";
  }
  return "unknown";
}

Tensor Graph::leaf(const Tensor& value) {
  if (!value.defined()) throw DimensionError("cannot attach an undefined tensor");
  Node node;
  node.kind = OpKind::leaf;
  return record(std::move(node), value.detach());
}

void Graph::clear() {
  nodes_.clear();
  retain_ = false;
}

Tensor Graph::record(Node node, Tensor value) {
  value.graph_ = this;
  value.node_ = static_cast<std::int64_t>(nodes_.size());
  node.output = value;
  nodes_.push_back(std::move(node));
  return value;
}

namespace {

void require_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw DimensionError(std::string(op) + ": undefined input tensor");
}

Tensor finish(OpKind kind, std::vector<Tensor> inputs, Shape shape, std::vector<double> values,
              double scalar = 0.0, double lo = 0.0, double hi = 0.0) {
  Tensor value(std::move(shape), std::move(values));
  Graph* g = nullptr;
  for (const auto& t : inputs) {
    if (!t.attached()) continue;
    if (g && g != t.graph()) {
      throw UnreachableError(std::string(op_name(kind)) + ": inputs belong to different graphs");
    }
    g = t.graph();
  }
  if (!g) return value;
  Node node;
  node.kind = kind;
  node.inputs = std::move(inputs);
  node.scalar = scalar;
  node.lo = lo;
  node.hi = hi;
  return g->record(std::move(node), std::move(value));
}

Shape last_axis_reduced(const Shape& s) {
  Shape r = s;
  r.back() = 1;
  return r;
}

// Shape `s` left-padded with ones to `rank`.
Shape pad_rank(const Shape& s, std::size_t rank) {
  Shape r(rank - s.size(), 1);
  r.insert(r.end(), s.begin(), s.end());
  return r;
}

bool broadcastable(const Shape& from, const Shape& to) {
  if (from.size() > to.size()) return false;
  const Shape p = pad_rank(from, to.size());
  for (std::size_t i = 0; i < to.size(); ++i) {
    if (p[i] != to[i] && p[i] != 1) return false;
  }
  return true;
}

Shape broadcast_shape(const Shape& a, const Shape& b, OpKind kind) {
  const std::size_t rank = std::max(a.size(), b.size());
  const Shape pa = pad_rank(a, rank);
  const Shape pb = pad_rank(b, rank);
  Shape out(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      out[i] = pa[i];
    } else if (pa[i] == 1) {
      out[i] = pb[i];
    } else {
      throw DimensionError(std::string(op_name(kind)) + ": incompatible shapes " + shape_str(a) +
                           " and " + shape_str(b));
    }
  }
  return out;
}

// For each element of the (larger) `to` shape, the flat index into `from`.
std::vector<std::size_t> broadcast_index(const Shape& from, const Shape& to) {
  const Shape p = pad_rank(from, to.size());
  std::vector<std::size_t> stride(to.size(), 0);
  std::size_t acc = 1;
  for (std::size_t i = to.size(); i-- > 0;) {
    stride[i] = p[i] == 1 ? 0 : acc;
    acc *= p[i];
  }
  const std::size_t n = shape_numel(to);
  std::vector<std::size_t> index(n);
  std::vector<std::size_t> counter(to.size(), 0);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < n; ++k) {
    index[k] = offset;
    for (std::size_t d = to.size(); d-- > 0;) {
      ++counter[d];
      offset += stride[d];
      if (counter[d] < to[d]) break;
      offset -= stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return index;
}

template <class F>
Tensor unary(OpKind kind, const Tensor& a, F f) {
  require_defined(a, op_name(kind));
  std::vector<double> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return finish(kind, {a}, a.shape(), std::move(out));
}

template <class F>
Tensor binary(OpKind kind, const Tensor& a, const Tensor& b, F f) {
  require_defined(a, op_name(kind));
  require_defined(b, op_name(kind));
  const Shape s = broadcast_shape(a.shape(), b.shape(), kind);
  const Tensor aa = a.shape() == s ? a : broadcast_to(a, s);
  const Tensor bb = b.shape() == s ? b : broadcast_to(b, s);
  std::vector<double> out(aa.numel());
  const auto x = aa.data();
  const auto y = bb.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i], y[i]);
  return finish(kind, {aa, bb}, s, std::move(out));
}

Tensor constant_mask(const Tensor& x, double (*f)(double)) {
  std::vector<double> m(x.numel());
  const auto in = x.data();
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = f(in[i]);
  return Tensor(x.shape(), std::move(m));
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_defined(a, "matmul");
  require_defined(b, "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    throw DimensionError("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<double> out(m * n, 0.0);
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double xv = x[i * k + p];
      if (xv == 0.0) continue;
      const double* yrow = y.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += xv * yrow[j];
    }
  }
  return finish(OpKind::matmul, {a, b}, {m, n}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  require_defined(a, "transpose");
  if (a.rank() != 2) throw DimensionError("transpose: expected rank 2, got " + shape_str(a.shape()));
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  std::vector<double> out(m * n);
  const auto x = a.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x[i * n + j];
  return finish(OpKind::transpose, {a}, {n, m}, std::move(out));
}

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(OpKind::add, a, b, [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(OpKind::sub, a, b, [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(OpKind::mul, a, b, [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(OpKind::div, a, b, [](double x, double y) { return x / y; });
}

Tensor scalar_mul(const Tensor& a, double factor) {
  require_defined(a, "scalar_mul");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  return finish(OpKind::scalar_mul, {a}, a.shape(), std::move(out), factor);
}

Tensor scalar_add(const Tensor& a, double offset) {
  require_defined(a, "scalar_add");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + offset;
  return finish(OpKind::scalar_add, {a}, a.shape(), std::move(out), offset);
}

Tensor relu(const Tensor& a) {
  return unary(OpKind::relu, a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(OpKind::sigmoid, a, [](double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  require_defined(a, "reshape");
  if (shape_numel(shape) != a.numel()) {
    throw DimensionError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
  }
  return finish(OpKind::reshape, {a}, std::move(shape), a.to_vector());
}

Tensor sum(const Tensor& a) {
  require_defined(a, "sum");
  const auto x = a.data();
  return finish(OpKind::sum, {a}, {1}, {std::accumulate(x.begin(), x.end(), 0.0)});
}

Tensor mean(const Tensor& a) {
  require_defined(a, "mean");
  const auto x = a.data();
  return finish(OpKind::mean, {a}, {1},
                {std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(a.numel())});
}

Tensor log(const Tensor& a) {
  require_defined(a, "log");
  for (double v : a.data()) {
    if (!(v > 0.0)) throw DomainError("log: non-positive input " + std::to_string(v));
  }
  return unary(OpKind::log, a, [](double x) { return std::log(x); });
}

Tensor exp(const Tensor& a) {
  return unary(OpKind::exp, a, [](double x) { return std::exp(x); });
}

Tensor sqrt(const Tensor& a) {
  require_defined(a, "sqrt");
  for (double v : a.data()) {
    if (v < 0.0) throw DomainError("sqrt: negative input " + std::to_string(v));
  }
  return unary(OpKind::sqrt, a, [](double x) { return std::sqrt(x); });
}

Tensor abs(const Tensor& a) {
  return unary(OpKind::abs, a, [](double x) { return std::fabs(x); });
}

Tensor max_reduce(const Tensor& a) {
  require_defined(a, "max_reduce");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.numel() / cols;
  std::vector<double> out(rows);
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = *std::max_element(x.begin() + r * cols, x.begin() + (r + 1) * cols);
  }
  return finish(OpKind::max_reduce, {a}, last_axis_reduced(a.shape()), std::move(out));
}

Tensor softmax(const Tensor& a) {
  require_defined(a, "softmax");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.numel() / cols;
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < cols; ++j) o[j] /= z;
  }
  return finish(OpKind::softmax, {a}, a.shape(), std::move(out));
}

Tensor log_softmax(const Tensor& a) {
  require_defined(a, "log_softmax");
  const std::size_t cols = a.shape().back();
  const std::size_t rows = a.numel() / cols;
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data() + r * cols;
    double* o = out.data() + r * cols;
    const double mx = *std::max_element(in, in + cols);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(in[j] - mx);
    const double lz = mx + std::log(z);
    for (std::size_t j = 0; j < cols; ++j) o[j] = in[j] - lz;
  }
  return finish(OpKind::log_softmax, {a}, a.shape(), std::move(out));
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  require_defined(a, "clamp");
  if (lo > hi) throw DomainError("clamp: lower bound exceeds upper bound");
  std::vector<double> out(a.numel());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x[i], lo, hi);
  return finish(OpKind::clamp, {a}, a.shape(), std::move(out), 0.0, lo, hi);
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  require_defined(a, "broadcast_to");
  if (a.shape() == shape) return a;
  if (!broadcastable(a.shape(), shape)) {
    throw DimensionError("broadcast_to: cannot broadcast " + shape_str(a.shape()) + " to " +
                         shape_str(shape));
  }
  const auto index = broadcast_index(a.shape(), shape);
  std::vector<double> out(index.size());
  const auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[index[i]];
  return finish(OpKind::broadcast_to, {a}, shape, std::move(out));
}

Tensor sum_to(const Tensor& a, const Shape& shape) {
  require_defined(a, "sum_to");
  if (a.shape() == shape) return a;
  if (!broadcastable(shape, a.shape())) {
    throw DimensionError("sum_to: cannot reduce " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  const auto index = broadcast_index(shape, a.shape());
  std::vector<double> out(shape_numel(shape), 0.0);
  const auto x = a.data();
  for (std::size_t i = 0; i < index.size(); ++i) out[index[i]] += x[i];
  return finish(OpKind::sum_to, {a}, shape, std::move(out));
}

namespace {

// Vector-Jacobian products for one node, expressed with differentiable ops so
// they record themselves when the inputs are graph-attached.
std::vector<Tensor> vjp(const Node& node, const Tensor& g, bool create,
                        const std::vector<bool>& want) {
  auto in = [&](std::size_t i) { return create ? node.inputs[i] : node.inputs[i].detach(); };
  const Tensor out = create ? node.output : node.output.detach();
  std::vector<Tensor> r(node.inputs.size());
  auto wanted = [&](std::size_t i) { return want[i]; };

  switch (node.kind) {
    case OpKind::leaf:
      break;
    case OpKind::matmul:
      if (wanted(0)) r[0] = matmul(g, transpose(in(1)));
      if (wanted(1)) r[1] = matmul(transpose(in(0)), g);
      break;
    case OpKind::transpose:
      r[0] = transpose(g);
      break;
    case OpKind::add:
      if (wanted(0)) r[0] = g;
      if (wanted(1)) r[1] = g;
      break;
    case OpKind::sub:
      if (wanted(0)) r[0] = g;
      if (wanted(1)) r[1] = scalar_mul(g, -1.0);
      break;
    case OpKind::mul:
      if (wanted(0)) r[0] = mul(g, in(1));
      if (wanted(1)) r[1] = mul(g, in(0));
      break;
    case OpKind::div: {
      const Tensor b = in(1);
      if (wanted(0)) r[0] = div(g, b);
      if (wanted(1)) r[1] = scalar_mul(div(mul(g, in(0)), mul(b, b)), -1.0);
      break;
    }
    case OpKind::scalar_mul:
      r[0] = scalar_mul(g, node.scalar);
      break;
    case OpKind::scalar_add:
      r[0] = g;
      break;
    case OpKind::relu:
      r[0] = mul(g, constant_mask(node.inputs[0], [](double x) { return x > 0.0 ? 1.0 : 0.0; }));
      break;
    case OpKind::sigmoid:
      r[0] = mul(g, mul(out, scalar_add(scalar_mul(out, -1.0), 1.0)));
      break;
    case OpKind::reshape:
      r[0] = reshape(g, node.inputs[0].shape());
      break;
    case OpKind::sum:
      r[0] = broadcast_to(g, node.inputs[0].shape());
      break;
    case OpKind::mean:
      r[0] = scalar_mul(broadcast_to(g, node.inputs[0].shape()),
                        1.0 / static_cast<double>(node.inputs[0].numel()));
      break;
    case OpKind::log:
      r[0] = div(g, in(0));
      break;
    case OpKind::exp:
      r[0] = mul(g, out);
      break;
    case OpKind::sqrt:
      r[0] = div(scalar_mul(g, 0.5), out);
      break;
    case OpKind::abs:
      r[0] = mul(g, constant_mask(node.inputs[0], [](double x) {
                   return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                 }));
      break;
    case OpKind::max_reduce: {
      const Tensor& x = node.inputs[0];
      const std::size_t cols = x.shape().back();
      const std::size_t rows = x.numel() / cols;
      std::vector<double> mask(x.numel(), 0.0);
      const auto xv = x.data();
      for (std::size_t row = 0; row < rows; ++row) {
        auto first = xv.begin() + row * cols;
        mask[row * cols + static_cast<std::size_t>(std::max_element(first, first + cols) - first)] = 1.0;
      }
      r[0] = mul(broadcast_to(g, x.shape()), Tensor(x.shape(), std::move(mask)));
      break;
    }
    case OpKind::softmax: {
      const Tensor s = sum_to(mul(g, out), last_axis_reduced(out.shape()));
      r[0] = mul(out, sub(g, s));
      break;
    }
    case OpKind::log_softmax: {
      const Tensor s = sum_to(g, last_axis_reduced(out.shape()));
      r[0] = sub(g, mul(exp(out), s));
      break;
    }
    case OpKind::clamp: {
      const double lo = node.lo, hi = node.hi;
      std::vector<double> mask(node.inputs[0].numel());
      const auto xv = node.inputs[0].data();
      for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (xv[i] >= lo && xv[i] <= hi) ? 1.0 : 0.0;
      r[0] = mul(g, Tensor(node.inputs[0].shape(), std::move(mask)));
      break;
    }
    case OpKind::broadcast_to:
      r[0] = sum_to(g, node.inputs[0].shape());
      break;
    case OpKind::sum_to:
      r[0] = broadcast_to(g, node.inputs[0].shape());
      break;
  }
  return r;
}

}  // namespace

std::vector<Tensor> backward(Graph& graph, const Tensor& output, const std::vector<Tensor>& wrt,
                             bool create_graph) {
  if (!output.attached() || output.graph() != &graph) {
    throw UnreachableError("backward: output is not recorded in this graph");
  }
  if (output.numel() != 1) {
    throw RankError("backward: output must be scalar, got " + shape_str(output.shape()));
  }
  for (const auto& w : wrt) {
    if (!w.attached() || w.graph() != &graph) {
      throw UnreachableError("backward: tensor of shape " + shape_str(w.shape()) +
                             " is not recorded in this graph");
    }
  }

  const auto count = static_cast<std::size_t>(output.node()) + 1;
  std::vector<bool> needs(count, false);
  for (const auto& w : wrt) {
    if (static_cast<std::size_t>(w.node()) < count) needs[static_cast<std::size_t>(w.node())] = true;
  }
  for (std::size_t id = 0; id < count; ++id) {
    if (needs[id]) continue;
    for (const auto& in : graph.node(static_cast<std::int64_t>(id)).inputs) {
      if (in.attached() && needs[static_cast<std::size_t>(in.node())]) {
        needs[id] = true;
        break;
      }
    }
  }

  if (create_graph) graph.set_retain_for_higher_order(true);
  std::vector<Tensor> adjoint(count);
  adjoint[count - 1] = Tensor::full(output.shape(), 1.0);

  for (std::size_t id = count; id-- > 0;) {
    if (!adjoint[id].defined() || !needs[id]) continue;
    // Copy: recording new nodes may reallocate the graph's storage.
    const Node node = graph.node(static_cast<std::int64_t>(id));
    if (node.kind == OpKind::leaf) continue;
    std::vector<bool> want(node.inputs.size(), false);
    bool any = false;
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      const auto& in = node.inputs[i];
      want[i] = in.attached() && needs[static_cast<std::size_t>(in.node())];
      any = any || want[i];
    }
    if (!any) continue;
    const Tensor g = create_graph ? adjoint[id] : adjoint[id].detach();
    auto grads = vjp(node, g, create_graph, want);
    for (std::size_t i = 0; i < node.inputs.size(); ++i) {
      if (!want[i] || !grads[i].defined()) continue;
      auto& slot = adjoint[static_cast<std::size_t>(node.inputs[i].node())];
      slot = slot.defined() ? add(slot, grads[i]) : grads[i];
    }
  }

  std::vector<Tensor> result;
  result.reserve(wrt.size());
  for (const auto& w : wrt) {
    const auto id = static_cast<std::size_t>(w.node());
    if (id < count && adjoint[id].defined()) {
      result.push_back(create_graph ? adjoint[id] : adjoint[id].detach());
    } else {
      result.push_back(Tensor::zeros(w.shape()));
    }
  }
  return result;
}

Tensor finite_difference_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                              double step) {
  if (!(step > 0.0)) throw DomainError("finite_difference_grad: step must be positive");
  std::vector<double> base = x.to_vector();
  std::vector<double> grad(base.size());
  for (std::size_t i = 0; i < base.size(); ++i) {
    const double orig = base[i];
    base[i] = orig + step;
    const double up = f(Tensor(x.shape(), base)).item();
    base[i] = orig - step;
    const double down = f(Tensor(x.shape(), base)).item();
    base[i] = orig;
    grad[i] = (up - down) / (2.0 * step);
  }
  return Tensor(x.shape(), std::move(grad));
}

}  // namespace fam
