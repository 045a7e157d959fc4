#pragma once

#include "piconv/tensor.hpp"

#include <cstdint>
#include <functional>

namespace piconv {

/// Builds a one-element loss from a single differentiable input.
using TensorFunction = std::function<Tensor(Tape&, const Tensor&)>;

struct GradCheckOptions {
  double eps = 1e-5;
  /// Above this many elements only `max_coordinates` sampled coordinates are
  /// probed.
  Index sample_above = 10000;
  Index max_coordinates = 2000;
  std::uint64_t seed = 0;
};

/// Worst relative error between tape gradients and central differences
/// (f(x + eps e_i) - f(x - eps e_i)) / 2 eps, with the relative error taken
/// against max(|analytic|, |numeric|, 1e-8).
double grad_check(const TensorFunction& f, const Shape& shape, const Array& x,
                  const GradCheckOptions& options = {});

inline double grad_check(const TensorFunction& f, const Shape& shape,
                         const Array& x, double eps) {
  GradCheckOptions o;
  o.eps = eps;
  return grad_check(f, shape, x, o);
}

}  // namespace piconv
