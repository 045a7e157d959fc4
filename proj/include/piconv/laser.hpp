#pragma once

#include "piconv/error.hpp"
#include "piconv/field.hpp"
#include "piconv/material.hpp"

#include <cmath>
#include <numbers>

namespace piconv {

struct LaserSpec {
  double power = 100.0;        // W
  double absorptivity = 0.35;  // eta
  double beam_radius = 1e-3;   // m

  /// 2 eta P / (pi r^2): the flux at the beam centre.
  double peak_flux() const {
    return 2.0 * absorptivity * power /
           (std::numbers::pi * beam_radius * beam_radius);
  }

  void validate() const {
    if (!(power >= 0)) throw ValidationError("laser: power must be >= 0");
    if (!(absorptivity >= 0 && absorptivity <= 1)) {
      throw ValidationError("laser: absorptivity outside [0, 1]");
    }
    if (!(beam_radius > 0)) {
      throw ValidationError("laser: beam radius must be > 0");
    }
  }
};

/// Beam centre in metres: x along columns, y down the rows, measured from the
/// top-left corner of the grid. Cell (i, j) has its centre at
/// ((j + 0.5) dx, (i + 0.5) dx).
struct LaserState {
  double x = 0.0;
  double y = 0.0;
  bool on = false;
};

/// Gaussian surface flux magnitude at every cell centre, in W/m^2:
/// q = 2 eta P / (pi r^2) exp(-2 d^2 / r^2). Zero when the laser is off.
/// The returned field is non-negative; the direction (into the body) is
/// applied by the boundary terms.
template <typename Scalar = double>
FieldT<Scalar> gaussian_flux(const LaserSpec& spec, const LaserState& state,
                             const GridSpec& grid) {
  FieldT<Scalar> q = FieldT<Scalar>::Zero(grid.rows, grid.cols);
  if (!state.on) return q;
  const Scalar peak = Scalar(spec.peak_flux());
  // Offsets are formed in cell units so that moving the beam by whole cells
  // moves the field by whole cells without rounding drift.
  const Scalar rc = Scalar(spec.beam_radius) / Scalar(grid.dx);
  const Scalar xc = Scalar(state.x) / Scalar(grid.dx);
  const Scalar yc = Scalar(state.y) / Scalar(grid.dx);
  for (Eigen::Index i = 0; i < grid.rows; ++i) {
    const Scalar dy = Scalar(i) + Scalar(0.5) - yc;
    for (Eigen::Index j = 0; j < grid.cols; ++j) {
      const Scalar dxx = Scalar(j) + Scalar(0.5) - xc;
      q(i, j) = peak * std::exp(Scalar(-2) * (dxx * dxx + dy * dy) / (rc * rc));
    }
  }
  return q;
}

}  // namespace piconv
