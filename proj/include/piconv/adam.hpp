#pragma once

#include "piconv/tensor.hpp"

#include <string>
#include <vector>

namespace piconv {

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Moment estimates for one parameter group.
struct AdamMoments {
  Array m;
  Array v;
};

/// Bias-corrected Adam over named parameter groups.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  /// One update. `step` counts from 1. Groups without a gradient (empty
  /// array) are treated as zero gradient. A non-finite gradient throws
  /// NumericError naming the group; nothing is modified in that case.
  void step(std::vector<Array*> params, const std::vector<const Array*>& grads,
            const std::vector<std::string>& names);

  long steps_taken() const { return t_; }
  const std::vector<AdamMoments>& moments() const { return moments_; }
  const AdamOptions& options() const { return options_; }

 private:
  AdamOptions options_;
  std::vector<AdamMoments> moments_;
  long t_ = 0;
};

}  // namespace piconv
