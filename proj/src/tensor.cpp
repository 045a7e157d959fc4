#include "piconv/tensor.hpp"

#include "piconv/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <numeric>
#include <sstream>

namespace piconv {

Index shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), Index{1},
                         [](Index a, Index b) { return a * b; });
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Tensor

Tape& Tensor::tape() const {
  if (tape_ == nullptr) throw TapeError("tensor is not attached to a tape");
  tape_->check(*this);
  return *tape_;
}

const Shape& Tensor::shape() const { return tape().shape_of(id_); }
Index Tensor::size() const { return tape().value_of(id_).size(); }

Index Tensor::dim(std::size_t axis) const {
  const Shape& s = shape();
  if (axis >= s.size()) {
    throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " +
                     shape_string(s));
  }
  return s[axis];
}

const Array& Tensor::value() const { return tape().value_of(id_); }
const Array& Tensor::grad() const { return tape().grad_of(id_); }
bool Tensor::has_grad() const { return grad().size() != 0; }
bool Tensor::requires_grad() const { return tape().requires_grad_of(id_); }

double Tensor::item() const {
  const Array& v = value();
  if (v.size() != 1) {
    throw ShapeError("item() on non-scalar tensor of shape " +
                     shape_string(shape()));
  }
  return v[0];
}

// ---------------------------------------------------------------------------
// Tape

void Tape::check(const Tensor& t) const {
  if (t.tape_ != this) throw TapeError("tensor belongs to a different tape");
  if (t.generation_ != generation_ || t.id_ >= nodes_.size()) {
    throw TapeError("stale tensor handle: tape was reset after it was created");
  }
}

Tensor Tape::variable(Shape shape, Array values) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  if (swept_) throw TapeError("tape already swept; reset before recording");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return make_handle(nodes_.size() - 1);
}

Tensor Tape::constant(Shape shape, Array values) {
  if (shape_size(shape) != values.size()) {
    throw ShapeError("shape " + shape_string(shape) + " does not match " +
                     std::to_string(values.size()) + " values");
  }
  if (swept_) throw TapeError("tape already swept; reset before recording");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  nodes_.push_back(std::move(n));
  return make_handle(nodes_.size() - 1);
}

Tensor Tape::scalar_constant(double value) {
  return constant({}, Array::Constant(1, value));
}

Tensor Tape::zeros(Shape shape) {
  const Index n = shape_size(shape);
  return constant(std::move(shape), Array::Zero(n));
}

Tensor Tape::record(Shape shape, Array values, std::vector<std::size_t> parents,
                    BackwardFn backward) {
  if (swept_) throw TapeError("tape already swept; reset before recording");
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(values);
  for (std::size_t p : parents) {
    if (p >= nodes_.size()) throw TapeError("parent recorded after child");
    n.requires_grad = n.requires_grad || nodes_[p].requires_grad;
  }
  n.parents = std::move(parents);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return make_handle(nodes_.size() - 1);
}

void Tape::accumulate_grad(std::size_t id, const Array& g) {
  accumulate_grad_expr(id, g);
}

void Tape::backward(const Tensor& loss) {
  check(loss);
  if (swept_) {
    throw TapeError("backward already run on this tape; reset before reuse");
  }
  const Node& root = nodes_[loss.id_];
  if (root.value.size() != 1) {
    throw ShapeError("backward requires a one-element loss, got shape " +
                     shape_string(root.shape));
  }
  swept_ = true;
  if (!root.requires_grad) return;
  nodes_[loss.id_].grad = Array::Ones(1);
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0 || !n.backward) continue;
    n.backward(*this, id);
  }
}

void Tape::reset() {
  nodes_.clear();
  ++generation_;
  swept_ = false;
}

// ---------------------------------------------------------------------------
// Elementwise

namespace {

Tape& common_tape(const Tensor& a, const Tensor& b) {
  Tape& t = a.tape();
  if (&b.tape() != &t) throw TapeError("operands live on different tapes");
  return t;
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

void require_same_or_scalar(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape() || is_scalar(b)) return;
  throw ShapeError(std::string(op) + ": shape mismatch " +
                   shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

template <typename Forward, typename GradA, typename GradB>
Tensor binary(const char* name, const Tensor& a, const Tensor& b, Forward fwd,
              GradA grad_a, GradB grad_b) {
  Tape& tape = common_tape(a, b);
  require_same_or_scalar(name, a, b);
  const std::size_t ia = a.node_id();
  const std::size_t ib = b.node_id();
  const bool bcast = a.shape() != b.shape();
  Array out;
  if (bcast) {
    out = fwd(a.value(), Array::Constant(a.size(), b.value()[0]));
  } else {
    out = fwd(a.value(), b.value());
  }
  return tape.record(
      a.shape(), std::move(out), {ia, ib},
      [ia, ib, bcast, grad_a, grad_b](Tape& t, std::size_t self) {
        const Array& g = t.grad_of(self);
        const Array& av = t.value_of(ia);
        Array bv = bcast ? Array::Constant(av.size(), t.value_of(ib)[0])
                         : Array(t.value_of(ib));
        if (t.requires_grad_of(ia)) t.accumulate_grad(ia, grad_a(g, av, bv));
        if (t.requires_grad_of(ib)) {
          Array gb = grad_b(g, av, bv);
          if (bcast) {
            t.accumulate_grad(ib, Array::Constant(1, gb.sum()));
          } else {
            t.accumulate_grad(ib, gb);
          }
        }
      });
}

template <typename Forward, typename Deriv>
Tensor unary(const Tensor& a, Forward fwd, Deriv deriv) {
  Tape& tape = a.tape();
  const std::size_t ia = a.node_id();
  Array out = fwd(a.value());
  return tape.record(a.shape(), std::move(out), {ia},
                     [ia, deriv](Tape& t, std::size_t self) {
                       t.accumulate_grad(
                           ia, deriv(t.grad_of(self), t.value_of(ia),
                                     t.value_of(self)));
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](const Array& x, const Array& y) -> Array { return x + y; },
      [](const Array& g, const Array&, const Array&) -> Array { return g; },
      [](const Array& g, const Array&, const Array&) -> Array { return g; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](const Array& x, const Array& y) -> Array { return x - y; },
      [](const Array& g, const Array&, const Array&) -> Array { return g; },
      [](const Array& g, const Array&, const Array&) -> Array { return -g; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](const Array& x, const Array& y) -> Array { return x * y; },
      [](const Array& g, const Array&, const Array& y) -> Array { return g * y; },
      [](const Array& g, const Array& x, const Array&) -> Array {
        return g * x;
      });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](const Array& x, const Array& y) -> Array { return x / y; },
      [](const Array& g, const Array&, const Array& y) -> Array { return g / y; },
      [](const Array& g, const Array& x, const Array& y) -> Array {
        return -g * x / y.square();
      });
}

Tensor square(const Tensor& a) {
  return unary(
      a, [](const Array& x) -> Array { return x.square(); },
      [](const Array& g, const Array& x, const Array&) -> Array {
        return 2.0 * g * x;
      });
}

Tensor abs(const Tensor& a) {
  return unary(
      a, [](const Array& x) -> Array { return x.abs(); },
      [](const Array& g, const Array& x, const Array&) -> Array {
        return g * x.sign();
      });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](const Array& x) -> Array { return factor * x; },
      [factor](const Array& g, const Array&, const Array&) -> Array {
        return factor * g;
      });
}

Tensor power4(const Tensor& a) {
  return unary(
      a, [](const Array& x) -> Array { return x.square().square(); },
      [](const Array& g, const Array& x, const Array&) -> Array {
        return 4.0 * g * x.cube();
      });
}

Tensor offset(const Tensor& a, double c) {
  return unary(
      a, [c](const Array& x) -> Array { return x + c; },
      [](const Array& g, const Array&, const Array&) -> Array { return g; });
}

Tensor elementwise(ElementwiseOp op, const Tensor& a, const Tensor* b,
                   double scalar) {
  auto need_b = [&](const char* name) -> const Tensor& {
    if (b == nullptr) {
      throw ShapeError(std::string(name) + " requires a second operand");
    }
    return *b;
  };
  switch (op) {
    case ElementwiseOp::add: return add(a, need_b("add"));
    case ElementwiseOp::sub: return sub(a, need_b("sub"));
    case ElementwiseOp::mul: return mul(a, need_b("mul"));
    case ElementwiseOp::div: return div(a, need_b("div"));
    case ElementwiseOp::square: return square(a);
    case ElementwiseOp::abs: return abs(a);
    case ElementwiseOp::scale: return scale(a, scalar);
    case ElementwiseOp::power4: return power4(a);
  }
  throw ShapeError("unknown elementwise op");
}

// ---------------------------------------------------------------------------
// Activations

namespace {

Array stable_sigmoid(const Array& x) {
  // exp of a non-positive argument only; never overflows.
  return x.unaryExpr([](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  });
}

}  // namespace

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return stable_sigmoid(v); },
      [](const Array& g, const Array&, const Array& y) -> Array {
        return g * y * (1.0 - y);
      });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](const Array& v) -> Array { return v.tanh(); },
      [](const Array& g, const Array&, const Array& y) -> Array {
        return g * (1.0 - y.square());
      });
}

Tensor activation(ActivationKind kind, const Tensor& x) {
  return kind == ActivationKind::sigmoid ? sigmoid(x) : tanh(x);
}

// ---------------------------------------------------------------------------
// conv2d via im2col + GEMM

namespace {

using RowMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct ConvGeometry {
  Index batch, cin, height, width, cout, kh, kw;
  Index plane() const { return height * width; }
  Index patch() const { return cin * kh * kw; }
  Index columns() const { return batch * plane(); }
};

// col(ci*kh*kw + u*kw + v, b*H*W + r*W + c) = x[b, ci, r + u - kh/2, c + v - kw/2]
void im2col(const ConvGeometry& g, const double* x, RowMatrix& col) {
  col.setZero(g.patch(), g.columns());
  const Index ph = g.kh / 2, pw = g.kw / 2;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index u = 0; u < g.kh; ++u) {
      for (Index v = 0; v < g.kw; ++v) {
        double* row = col.row((ci * g.kh + u) * g.kw + v).data();
        const Index dr = u - ph, dc = v - pw;
        const Index c_lo = std::max<Index>(0, -dc);
        const Index c_hi = std::min<Index>(g.width, g.width - dc);
        for (Index b = 0; b < g.batch; ++b) {
          const double* src = x + (b * g.cin + ci) * g.plane();
          double* dst = row + b * g.plane();
          for (Index r = std::max<Index>(0, -dr);
               r < std::min<Index>(g.height, g.height - dr); ++r) {
            const double* s = src + (r + dr) * g.width + dc;
            double* d = dst + r * g.width;
            for (Index c = c_lo; c < c_hi; ++c) d[c] = s[c];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const RowMatrix& col, double* dx) {
  const Index ph = g.kh / 2, pw = g.kw / 2;
  for (Index ci = 0; ci < g.cin; ++ci) {
    for (Index u = 0; u < g.kh; ++u) {
      for (Index v = 0; v < g.kw; ++v) {
        const double* row = col.row((ci * g.kh + u) * g.kw + v).data();
        const Index dr = u - ph, dc = v - pw;
        const Index c_lo = std::max<Index>(0, -dc);
        const Index c_hi = std::min<Index>(g.width, g.width - dc);
        for (Index b = 0; b < g.batch; ++b) {
          double* dst = dx + (b * g.cin + ci) * g.plane();
          const double* src = row + b * g.plane();
          for (Index r = std::max<Index>(0, -dr);
               r < std::min<Index>(g.height, g.height - dr); ++r) {
            double* d = dst + (r + dr) * g.width + dc;
            const double* s = src + r * g.width;
            for (Index c = c_lo; c < c_hi; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
  Tape& tape = common_tape(x, kernel);
  common_tape(x, bias);
  const Shape& xs = x.shape();
  const Shape& ks = kernel.shape();
  if (xs.size() != 4 || ks.size() != 4) {
    throw ShapeError("conv2d expects 4-D input and kernel, got " +
                     shape_string(xs) + " and " + shape_string(ks));
  }
  if (xs[1] != ks[1]) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(xs) +
                     " vs kernel " + shape_string(ks));
  }
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0) {
    throw ShapeError("conv2d requires odd kernel extents, got " +
                     shape_string(ks));
  }
  if (bias.shape() != Shape{ks[0]}) {
    throw ShapeError("conv2d bias shape " + shape_string(bias.shape()) +
                     " does not match output channels " + std::to_string(ks[0]));
  }
  const ConvGeometry g{xs[0], xs[1], xs[2], xs[3], ks[0], ks[2], ks[3]};

  auto col = std::make_shared<RowMatrix>();
  im2col(g, x.value().data(), *col);
  Eigen::Map<const RowMatrix> kmat(kernel.value().data(), g.cout, g.patch());
  RowMatrix out_mat(g.cout, g.columns());
  out_mat.noalias() = kmat * (*col);
  out_mat.colwise() += bias.value().matrix();

  Array out(g.batch * g.cout * g.plane());
  for (Index b = 0; b < g.batch; ++b) {
    for (Index co = 0; co < g.cout; ++co) {
      out.segment((b * g.cout + co) * g.plane(), g.plane()) =
          out_mat.row(co).segment(b * g.plane(), g.plane()).transpose().array();
    }
  }

  const std::size_t ix = x.node_id(), ik = kernel.node_id(), ib = bias.node_id();
  return tape.record(
      {g.batch, g.cout, g.height, g.width}, std::move(out), {ix, ik, ib},
      [g, col, ix, ik, ib](Tape& t, std::size_t self) {
        const Array& grad = t.grad_of(self);
        RowMatrix dy(g.cout, g.columns());
        for (Index b = 0; b < g.batch; ++b) {
          for (Index co = 0; co < g.cout; ++co) {
            dy.row(co).segment(b * g.plane(), g.plane()) =
                grad.segment((b * g.cout + co) * g.plane(), g.plane())
                    .matrix()
                    .transpose();
          }
        }
        if (t.requires_grad_of(ik)) {
          RowMatrix dk(g.cout, g.patch());
          dk.noalias() = dy * col->transpose();
          t.accumulate_grad(ik, Eigen::Map<const Array>(dk.data(), dk.size()));
        }
        if (t.requires_grad_of(ib)) {
          t.accumulate_grad(ib, dy.rowwise().sum().array());
        }
        if (t.requires_grad_of(ix)) {
          Eigen::Map<const RowMatrix> kmat(t.value_of(ik).data(), g.cout,
                                           g.patch());
          RowMatrix dcol(g.patch(), g.columns());
          dcol.noalias() = kmat.transpose() * dy;
          Array dx = Array::Zero(g.batch * g.cin * g.plane());
          col2im(g, dcol, dx.data());
          t.accumulate_grad(ix, dx);
        }
      });
}

// ---------------------------------------------------------------------------
// Channel plumbing

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  Tape& tape = common_tape(a, b);
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  if (as.size() != 4 || bs.size() != 4 || as[0] != bs[0] || as[2] != bs[2] ||
      as[3] != bs[3]) {
    throw ShapeError("concat_channels: incompatible shapes " + shape_string(as) +
                     " and " + shape_string(bs));
  }
  const Index batch = as[0], ca = as[1], cb = bs[1], plane = as[2] * as[3];
  Array out(batch * (ca + cb) * plane);
  for (Index n = 0; n < batch; ++n) {
    out.segment(n * (ca + cb) * plane, ca * plane) =
        a.value().segment(n * ca * plane, ca * plane);
    out.segment((n * (ca + cb) + ca) * plane, cb * plane) =
        b.value().segment(n * cb * plane, cb * plane);
  }
  const std::size_t ia = a.node_id(), ib = b.node_id();
  return tape.record(
      {batch, ca + cb, as[2], as[3]}, std::move(out), {ia, ib},
      [=](Tape& t, std::size_t self) {
        const Array& g = t.grad_of(self);
        if (t.requires_grad_of(ia)) {
          Array ga(batch * ca * plane);
          for (Index n = 0; n < batch; ++n) {
            ga.segment(n * ca * plane, ca * plane) =
                g.segment(n * (ca + cb) * plane, ca * plane);
          }
          t.accumulate_grad(ia, ga);
        }
        if (t.requires_grad_of(ib)) {
          Array gb(batch * cb * plane);
          for (Index n = 0; n < batch; ++n) {
            gb.segment(n * cb * plane, cb * plane) =
                g.segment((n * (ca + cb) + ca) * plane, cb * plane);
          }
          t.accumulate_grad(ib, gb);
        }
      });
}

Tensor slice_channels(const Tensor& x, Index begin, Index count) {
  Tape& tape = x.tape();
  const Shape& s = x.shape();
  if (s.size() != 4 || begin < 0 || count < 0 || begin + count > s[1]) {
    throw ShapeError("slice_channels: range [" + std::to_string(begin) + ", " +
                     std::to_string(begin + count) + ") invalid for shape " +
                     shape_string(s));
  }
  const Index batch = s[0], c = s[1], plane = s[2] * s[3];
  Array out(batch * count * plane);
  for (Index n = 0; n < batch; ++n) {
    out.segment(n * count * plane, count * plane) =
        x.value().segment((n * c + begin) * plane, count * plane);
  }
  const std::size_t ix = x.node_id();
  return tape.record({batch, count, s[2], s[3]}, std::move(out), {ix},
                     [=](Tape& t, std::size_t self) {
                       const Array& g = t.grad_of(self);
                       Array gx = Array::Zero(batch * c * plane);
                       for (Index n = 0; n < batch; ++n) {
                         gx.segment((n * c + begin) * plane, count * plane) =
                             g.segment(n * count * plane, count * plane);
                       }
                       t.accumulate_grad(ix, gx);
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_size(shape) != x.size()) {
    throw ShapeError("reshape: cannot view " + shape_string(x.shape()) + " as " +
                     shape_string(shape));
  }
  const std::size_t ix = x.node_id();
  return x.tape().record(std::move(shape), x.value(), {ix},
                         [ix](Tape& t, std::size_t self) {
                           t.accumulate_grad(ix, t.grad_of(self));
                         });
}

namespace {

// out[r, c] += in[r + drow, c + dcol] over every trailing 2-D plane.
void shift_planes(const Array& in, Array& out, Index planes, Index h, Index w,
                  Index drow, Index dcol) {
  for (Index p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    double* dst = out.data() + p * h * w;
    for (Index r = std::max<Index>(0, -drow);
         r < std::min<Index>(h, h - drow); ++r) {
      for (Index c = std::max<Index>(0, -dcol);
           c < std::min<Index>(w, w - dcol); ++c) {
        dst[r * w + c] += src[(r + drow) * w + c + dcol];
      }
    }
  }
}

}  // namespace

Tensor shift2d(const Tensor& x, Index drow, Index dcol) {
  Tape& tape = x.tape();
  const Shape& s = x.shape();
  if (s.size() < 2) {
    throw ShapeError("shift2d needs at least 2 dimensions, got " +
                     shape_string(s));
  }
  const Index h = s[s.size() - 2], w = s[s.size() - 1];
  const Index planes = x.size() / std::max<Index>(1, h * w);
  Array out = Array::Zero(x.size());
  shift_planes(x.value(), out, planes, h, w, drow, dcol);
  const std::size_t ix = x.node_id();
  return tape.record(s, std::move(out), {ix}, [=](Tape& t, std::size_t self) {
    Array gx = Array::Zero(t.grad_of(self).size());
    shift_planes(t.grad_of(self), gx, planes, h, w, -drow, -dcol);
    t.accumulate_grad(ix, gx);
  });
}

// ---------------------------------------------------------------------------
// Reductions

Tensor reduce(ReduceKind kind, const Tensor& x) {
  Tape& tape = x.tape();
  const Index n = x.size();
  if (n == 0) {
    throw ShapeError("reduce over empty tensor of shape " +
                     shape_string(x.shape()));
  }
  const double factor = kind == ReduceKind::mean ? 1.0 / double(n) : 1.0;
  const double v = x.value().sum() * factor;
  const std::size_t ix = x.node_id();
  return tape.record({}, Array::Constant(1, v), {ix},
                     [ix, n, factor](Tape& t, std::size_t self) {
                       t.accumulate_grad_expr(
                           ix, Array::Constant(n, t.grad_of(self)[0] * factor));
                     });
}

Tensor sum(const Tensor& x) { return reduce(ReduceKind::sum, x); }
Tensor mean(const Tensor& x) { return reduce(ReduceKind::mean, x); }

}  // namespace piconv
