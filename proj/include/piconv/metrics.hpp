#pragma once

#include "piconv/field.hpp"

#include <span>

namespace piconv {

/// Field errors: mse in C^2, mae in C, mape in percent.
struct Metrics {
  double mse = 0;
  double mae = 0;
  double mape = 0;
};

/// Cells with |target| below this are left out of the MAPE average.
inline constexpr double kMapeFloor = 0.5;

/// Per-field mean squared, mean absolute and mean absolute percentage error.
/// Throws ValidationError on a shape mismatch or when every target cell is
/// below the MAPE floor.
Metrics field_metrics(const Field& prediction, const Field& target);

/// Per-sample metrics averaged over samples.
Metrics mean_metrics(std::span<const Metrics> per_sample);

}  // namespace piconv
