#include "piconv/grad_check.hpp"

#include "piconv/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace piconv {

namespace {

double evaluate(const TensorFunction& f, const Shape& shape, const Array& x) {
  Tape tape;
  Tensor in = tape.constant(shape, x);
  const double v = f(tape, in).item();
  if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss value");
  return v;
}

}  // namespace

double grad_check(const TensorFunction& f, const Shape& shape, const Array& x,
                  const GradCheckOptions& options) {
  if (!(options.eps > 0.0)) throw ValidationError("grad_check: eps must be > 0");
  if (shape_size(shape) != x.size()) {
    throw ShapeError("grad_check: shape " + shape_string(shape) +
                     " does not match input size");
  }

  Array analytic;
  {
    Tape tape;
    Tensor in = tape.variable(shape, x);
    Tensor loss = f(tape, in);
    if (!std::isfinite(loss.item())) {
      throw NumericError("grad_check: non-finite loss value");
    }
    tape.backward(loss);
    analytic = in.has_grad() ? in.grad() : Array::Zero(x.size());
  }
  if (!analytic.allFinite()) {
    throw NumericError("grad_check: non-finite analytic gradient");
  }

  std::vector<Index> coords(static_cast<std::size_t>(x.size()));
  std::iota(coords.begin(), coords.end(), Index{0});
  if (x.size() > options.sample_above) {
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);
    coords.resize(static_cast<std::size_t>(options.max_coordinates));
  }

  double worst = 0.0;
  Array probe = x;
  for (Index i : coords) {
    probe[i] = x[i] + options.eps;
    const double up = evaluate(f, shape, probe);
    probe[i] = x[i] - options.eps;
    const double down = evaluate(f, shape, probe);
    probe[i] = x[i];
    const double numeric = (up - down) / (2.0 * options.eps);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace piconv
