#include "piconv/metrics.hpp"

#include "piconv/error.hpp"

#include <cmath>

namespace piconv {

Metrics field_metrics(const Field& prediction, const Field& target) {
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols()) {
    throw ValidationError("metrics: prediction and target shapes differ");
  }
  if (target.size() == 0) throw ValidationError("metrics: empty field");
  const Field err = prediction - target;
  Metrics m;
  m.mse = err.array().square().mean();
  m.mae = err.array().abs().mean();
  double sum = 0;
  Eigen::Index counted = 0;
  for (Eigen::Index i = 0; i < target.size(); ++i) {
    const double y = target.data()[i];
    if (std::abs(y) < kMapeFloor) continue;
    sum += 100.0 * std::abs(err.data()[i]) / std::abs(y);
    ++counted;
  }
  if (counted == 0) {
    throw ValidationError("metrics: MAPE undefined, every target is within " +
                          std::to_string(kMapeFloor) + " C of zero");
  }
  m.mape = sum / double(counted);
  return m;
}

Metrics mean_metrics(std::span<const Metrics> per_sample) {
  if (per_sample.empty()) throw ValidationError("metrics: empty dataset");
  Metrics out;
  for (const Metrics& m : per_sample) {
    out.mse += m.mse;
    out.mae += m.mae;
    out.mape += m.mape;
  }
  const double n = double(per_sample.size());
  out.mse /= n;
  out.mae /= n;
  out.mape /= n;
  return out;
}

}  // namespace piconv
