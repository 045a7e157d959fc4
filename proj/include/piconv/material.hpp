#pragma once

#include "piconv/error.hpp"
#include "piconv/field.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <string>

namespace piconv {

/// Linear-in-temperature properties plus surface exchange constants. All
/// temperatures are in degrees Celsius; radiation converts to kelvin.
template <typename Scalar>
struct MaterialModelT {
  Scalar rho0 = 7915.0;  // kg/m^3
  Scalar rho1 = -0.59;
  Scalar k0 = 12.6;  // W/(m C)
  Scalar k1 = 0.015;
  Scalar cp0 = 496.5;  // J/(kg C)
  Scalar cp1 = 0.133;
  Scalar h_conv = 10.0;  // lateral / through-thickness convection, W/(m^2 C)
  Scalar h_top = 10.0;   // top-surface convection
  Scalar emissivity = 0.3;
  Scalar sigma_sb = Scalar(kStefanBoltzmann);
  Scalar t_amb = 23.0;

  Scalar density(Scalar t) const { return rho0 + rho1 * t; }
  Scalar conductivity(Scalar t) const { return k0 + k1 * t; }
  Scalar heat_capacity(Scalar t) const { return cp0 + cp1 * t; }
  Scalar volumetric_heat_capacity(Scalar t) const {
    return density(t) * heat_capacity(t);
  }

  /// Throws ValidationError unless rho, k, Cp > 0 on [t_lo, t_hi] and the
  /// surface constants are admissible.
  void validate(Scalar t_lo, Scalar t_hi) const {
    if (!(t_lo <= t_hi)) {
      throw ValidationError("material: temperature range is empty");
    }
    auto positive_on_range = [&](const char* name, Scalar a, Scalar b) {
      if (!(a + b * t_lo > 0) || !(a + b * t_hi > 0)) {
        std::ostringstream os;
        os << "material: " << name << " must be positive over [" << t_lo
           << ", " << t_hi << "] C";
        throw ValidationError(os.str());
      }
    };
    positive_on_range("density", rho0, rho1);
    positive_on_range("conductivity", k0, k1);
    positive_on_range("heat capacity", cp0, cp1);
    if (!(emissivity >= 0 && emissivity <= 1)) {
      std::ostringstream os;
      os << "material: emissivity " << emissivity << " outside [0, 1]";
      throw ValidationError(os.str());
    }
    if (!(h_conv >= 0) || !(h_top >= 0)) {
      throw ValidationError("material: convection coefficients must be >= 0");
    }
    if (!(sigma_sb >= 0)) {
      throw ValidationError("material: Stefan-Boltzmann constant must be >= 0");
    }
  }

  /// Constant properties (useful for analytic checks).
  static MaterialModelT constant(Scalar rho_cp, Scalar k) {
    MaterialModelT m;
    m.rho0 = rho_cp;
    m.rho1 = 0;
    m.cp0 = 1;
    m.cp1 = 0;
    m.k0 = k;
    m.k1 = 0;
    return m;
  }

  /// Same material with every surface loss switched off.
  MaterialModelT insulated() const {
    MaterialModelT m = *this;
    m.h_conv = 0;
    m.h_top = 0;
    m.emissivity = 0;
    return m;
  }
};

using MaterialModel = MaterialModelT<double>;

/// Uniform square cells of side dx; `thickness` is the out-of-plane wall
/// thickness used by the thin-wall sink terms.
struct GridSpec {
  Eigen::Index rows = 32;
  Eigen::Index cols = 32;
  double dx = 1e-3;  // m
  double dt = 0.02;  // s
  double thickness = 1e-3;  // m

  void validate() const {
    if (rows < 3 || cols < 3) {
      throw ValidationError("grid: rows and cols must be >= 3");
    }
    if (!(dx > 0) || !(dt > 0) || !(thickness > 0)) {
      throw ValidationError("grid: dx, dt and thickness must be > 0");
    }
  }
};

/// min over T in [t_lo, t_hi] of rho(T) Cp(T) dx^2 / (4 k(T)), the 2-D FTCS
/// stability bound. The extremum is found exactly: the ratio of a quadratic
/// to a linear function has at most two critical points.
template <typename Scalar>
Scalar cfl_max_dt(const MaterialModelT<Scalar>& m, const GridSpec& grid,
                  Scalar t_lo, Scalar t_hi) {
  m.validate(t_lo, t_hi);
  const Scalar dx2 = Scalar(grid.dx) * Scalar(grid.dx);
  auto bound = [&](Scalar t) {
    return m.volumetric_heat_capacity(t) * dx2 / (4 * m.conductivity(t));
  };
  Scalar best = std::min(bound(t_lo), bound(t_hi));
  // d/dT [(a + bT)(c + dT) / (e + gT)] = 0  <=>
  // b d g T^2 + 2 b d e T + (b c + a d) e - a c g = 0
  const Scalar a = m.rho0, b = m.rho1, c = m.cp0, d = m.cp1, e = m.k0,
               g = m.k1;
  const Scalar qa = b * d * g, qb = 2 * b * d * e,
               qc = (b * c + a * d) * e - a * c * g;
  std::array<Scalar, 2> roots{};
  int n_roots = 0;
  if (qa != Scalar(0)) {
    const Scalar disc = qb * qb - 4 * qa * qc;
    if (disc >= 0) {
      const Scalar s = std::sqrt(disc);
      roots[n_roots++] = (-qb + s) / (2 * qa);
      roots[n_roots++] = (-qb - s) / (2 * qa);
    }
  } else if (qb != Scalar(0)) {
    roots[n_roots++] = -qc / qb;
  }
  for (int i = 0; i < n_roots; ++i) {
    if (roots[i] > t_lo && roots[i] < t_hi) best = std::min(best, bound(roots[i]));
  }
  return best;
}

}  // namespace piconv
