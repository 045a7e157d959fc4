#include "piconv/adam.hpp"

#include "piconv/error.hpp"

#include <cmath>

namespace piconv {

void Adam::step(std::vector<Array*> params, const std::vector<const Array*>& grads,
                const std::vector<std::string>& names) {
  if (params.size() != grads.size() || params.size() != names.size()) {
    throw ValidationError("adam: parameter, gradient and name lists differ in length");
  }
  if (moments_.empty()) {
    for (const Array* p : params) {
      moments_.push_back({Array::Zero(p->size()), Array::Zero(p->size())});
    }
  }
  if (moments_.size() != params.size()) {
    throw ValidationError("adam: parameter group count changed between steps");
  }
  for (std::size_t g = 0; g < params.size(); ++g) {
    const Array* grad = grads[g];
    if (grad == nullptr || grad->size() == 0) continue;
    if (grad->size() != params[g]->size()) {
      throw ShapeError("adam: gradient of '" + names[g] + "' has " +
                       std::to_string(grad->size()) + " values, parameter has " +
                       std::to_string(params[g]->size()));
    }
    if (!grad->isFinite().all()) {
      throw NumericError("adam: non-finite gradient in parameter group '" + names[g] + "'");
    }
  }

  ++t_;
  const auto& o = options_;
  const double c1 = 1.0 - std::pow(o.beta1, double(t_));
  const double c2 = 1.0 - std::pow(o.beta2, double(t_));
  for (std::size_t g = 0; g < params.size(); ++g) {
    AdamMoments& mo = moments_[g];
    const Array* grad = grads[g];
    if (grad == nullptr || grad->size() == 0) {
      mo.m *= o.beta1;
      mo.v *= o.beta2;
    } else {
      mo.m = o.beta1 * mo.m + (1.0 - o.beta1) * *grad;
      mo.v = o.beta2 * mo.v + (1.0 - o.beta2) * grad->square();
    }
    *params[g] -= o.learning_rate * (mo.m / c1) / ((mo.v / c2).sqrt() + o.eps);
  }
}

}  // namespace piconv
