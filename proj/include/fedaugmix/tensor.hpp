#pragma once

// Dense float64 tensors with a tape-based reverse-mode differentiation engine.
//
// A Tensor is a shape plus an immutable, shared data buffer. Tensors produced
// by operations on graph-attached inputs are themselves attached: the graph
// records the operation kind, the input tensors and the output, so a later
// backward() sweep can propagate adjoints. Vector-Jacobian products are
// written in terms of the same differentiable operations, which makes the
// gradient pass itself recordable (create_graph) and lets callers
// differentiate through gradients, as the gradient-matching attack does.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace fam {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

class Graph;

class Tensor {
 public:
  Tensor() = default;
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_ ? data_->size() : 0; }
  std::span<const double> data() const;
  double operator[](std::size_t i) const { return (*data_)[i]; }
  // Single value of a one-element tensor; throws RankError otherwise.
  double item() const;

  bool attached() const { return graph_ != nullptr; }
  Graph* graph() const { return graph_; }
  std::int64_t node() const { return node_; }

  // Same buffer, no graph handle.
  Tensor detach() const;
  std::vector<double> to_vector() const;

 private:
  friend class Graph;

  Shape shape_;
  std::shared_ptr<const std::vector<double>> data_;
  Graph* graph_ = nullptr;
  std::int64_t node_ = -1;
};

enum class OpKind {
  leaf,
  matmul,
  transpose,
  add,
  sub,
  mul,
  div,
  scalar_mul,
  scalar_add,
  relu,
  sigmoid,
  reshape,
  sum,
  mean,
  log,
  exp,
  sqrt,
  abs,
  max_reduce,
  softmax,
  log_softmax,
  clamp,
  broadcast_to,
  sum_to,
};

const char* op_name(OpKind kind);

struct Node {
  OpKind kind = OpKind::leaf;
  std::vector<Tensor> inputs;
  Tensor output;
  double scalar = 0.0;  // scalar_mul / scalar_add factor
  double lo = 0.0;      // clamp bounds
  double hi = 0.0;
};

// Append-only operation record. Parents always precede children. A graph is
// confined to one thread and is meant to live for a single training or attack
// step; tensors attached to it must not outlive it.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Registers a leaf sharing `value`'s buffer.
  Tensor leaf(const Tensor& value);

  std::size_t size() const { return nodes_.size(); }
  const Node& node(std::int64_t id) const { return nodes_.at(static_cast<std::size_t>(id)); }
  bool retain_for_higher_order() const { return retain_; }
  void set_retain_for_higher_order(bool retain) { retain_ = retain; }
  void clear();

  Tensor record(Node node, Tensor value);

 private:
  std::vector<Node> nodes_;
  bool retain_ = false;
};

// Elementwise binary operations broadcast numpy-style (trailing alignment,
// extents equal or 1); broadcasting is itself recorded as a broadcast_to node.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, double factor);
Tensor scalar_add(const Tensor& a, double offset);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor abs(const Tensor& a);
// Maximum over the last axis; the last extent becomes 1.
Tensor max_reduce(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor sum_to(const Tensor& a, const Shape& shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator*(const Tensor& a, double c) { return scalar_mul(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scalar_mul(a, c); }

// Gradients of scalar `output` with respect to each tensor in `wrt`. With
// create_graph the returned tensors are attached to `graph` and can be
// differentiated again. Tensors attached to the graph but not influencing
// `output` receive zeros.
std::vector<Tensor> backward(Graph& graph, const Tensor& output, const std::vector<Tensor>& wrt,
                             bool create_graph = false);

// Central-difference gradient of a scalar function; the test oracle for backward().
Tensor finite_difference_grad(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                              double step);

}  // namespace fam
