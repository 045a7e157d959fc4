#pragma once

// Dense 64-bit tensors recorded on a reverse-mode differentiation tape.
//
// A Tensor is a light handle (tape pointer + node index). All storage lives
// in the Tape; resetting the tape invalidates every handle created on it.
// Activations use the (batch, channels, height, width) layout, row-major.

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace piconv {

using Index = Eigen::Index;
using Shape = std::vector<Index>;
using Array = Eigen::ArrayXd;

Index shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;

class Tensor {
 public:
  Tensor() = default;

  const Shape& shape() const;
  Index size() const;
  Index dim(std::size_t axis) const;
  const Array& value() const;
  /// Gradient after Tape::backward; empty array when the node received none.
  const Array& grad() const;
  bool has_grad() const;
  bool requires_grad() const;
  /// Value of a one-element tensor.
  double item() const;

  Tape& tape() const;
  std::size_t node_id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Tensor(Tape* tape, std::size_t id, std::uint64_t generation)
      : tape_(tape), id_(id), generation_(generation) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
  std::uint64_t generation_ = 0;
};

/// Ordered record of executed operations. Nodes are appended in execution
/// order, so parents always precede children and backward is a single
/// reverse sweep.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that receives a gradient.
  Tensor variable(Shape shape, Array values);
  /// Leaf that never receives a gradient.
  Tensor constant(Shape shape, Array values);
  Tensor scalar_constant(double value);
  Tensor zeros(Shape shape);

  /// Records an operation node. `backward` receives the node id and must
  /// accumulate into parents via accumulate_grad.
  Tensor record(Shape shape, Array values, std::vector<std::size_t> parents,
                BackwardFn backward);

  /// Reverse sweep from a one-element loss. A tape may be swept once; call
  /// reset() before recording a new graph.
  void backward(const Tensor& loss);

  void reset();

  std::size_t node_count() const { return nodes_.size(); }
  bool swept() const { return swept_; }

  // Node access used by operation implementations.
  const Shape& shape_of(std::size_t id) const { return nodes_[id].shape; }
  const Array& value_of(std::size_t id) const { return nodes_[id].value; }
  const Array& grad_of(std::size_t id) const { return nodes_[id].grad; }
  bool requires_grad_of(std::size_t id) const {
    return nodes_[id].requires_grad;
  }
  void accumulate_grad(std::size_t id, const Array& g);
  template <typename Expr>
  void accumulate_grad_expr(std::size_t id, const Expr& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  void check(const Tensor& t) const;

 private:
  struct Node {
    Shape shape;
    Array value;
    Array grad;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad = false;
  };

  Tensor make_handle(std::size_t id) {
    return Tensor(this, id, generation_);
  }

  friend class Tensor;
  std::vector<Node> nodes_;
  std::uint64_t generation_ = 1;
  bool swept_ = false;
};

// ---------------------------------------------------------------------------
// Operations. Binary elementwise operations require equal shapes, or a
// one-element right operand which is broadcast.

enum class ElementwiseOp { add, sub, mul, div, square, abs, scale, power4 };
enum class ActivationKind { sigmoid, tanh };
enum class ReduceKind { mean, sum };

/// `scalar` is the factor for ElementwiseOp::scale and ignored otherwise.
Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b = nullptr,
                   double scalar = 1.0);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor square(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor power4(const Tensor& a);
/// a + c elementwise.
Tensor offset(const Tensor& a, double c);

Tensor activation(ActivationKind kind, const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);

/// Stride-1 cross-correlation with "same" zero padding.
/// x: [B, Cin, H, W], kernel: [Cout, Cin, kh, kw] (odd kh, kw), bias: [Cout].
Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias);

/// [B, Ca, H, W] ++ [B, Cb, H, W] -> [B, Ca + Cb, H, W].
Tensor concat_channels(const Tensor& a, const Tensor& b);
/// Channels [begin, begin + count) of a 4-D tensor.
Tensor slice_channels(const Tensor& x, Index begin, Index count);

/// Same values under a new shape with the same element count.
Tensor reshape(const Tensor& x, Shape shape);

/// out[.., r, c] = x[.., r + drow, c + dcol], zero outside the field.
Tensor shift2d(const Tensor& x, Index drow, Index dcol);

Tensor reduce(ReduceKind kind, const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

}  // namespace piconv
