#pragma once

// Explicit finite-difference simulator for transient 2-D conduction with
// temperature-dependent properties, surface convection/radiation, a moving
// Gaussian laser and element activation along a deposition path.

#include "piconv/deposition.hpp"
#include "piconv/error.hpp"
#include "piconv/field.hpp"
#include "piconv/laser.hpp"
#include "piconv/material.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

namespace piconv {

enum class HeatMode {
  interior_2d,
  /// Adds through-thickness losses (h / w)(T - T_amb) + (sigma eps / w)(T^4 -
  /// T_amb^4) for a wall of thickness w = GridSpec::thickness.
  thin_wall,
};

std::string to_string(HeatMode mode);
HeatMode heat_mode_from_string(const std::string& name);

/// What lies beyond the outer grid edges. Faces towards inactive cells are
/// always exposed surfaces.
enum class EdgeCondition {
  robin,              // convection + radiation (+ laser on top faces)
  dirichlet_ambient,  // T = T_amb on the edge faces
};

struct StepOptions {
  HeatMode mode = HeatMode::interior_2d;
  EdgeCondition edges = EdgeCondition::robin;
};

template <typename Scalar>
struct ThermalFrameT {
  Eigen::Index t = 0;
  FieldT<Scalar> values;
  Mask active;
};
using ThermalFrame = ThermalFrameT<double>;

/// Face directions; `north` faces row - 1 and is the laser-side (top) face.
enum class Face { north, south, west, east };
inline constexpr std::array<Face, 4> kFaces{Face::north, Face::south, Face::west,
                                            Face::east};
inline constexpr Eigen::Index face_drow(Face f) {
  return f == Face::north ? -1 : (f == Face::south ? 1 : 0);
}
inline constexpr Eigen::Index face_dcol(Face f) {
  return f == Face::west ? -1 : (f == Face::east ? 1 : 0);
}

enum class FaceKind { conduct, exposed, dirichlet };

/// How face `f` of an active cell (i, j) is closed.
inline FaceKind face_kind(const Mask& active, Eigen::Index i, Eigen::Index j,
                          Face f, EdgeCondition edges) {
  const Eigen::Index ni = i + face_drow(f), nj = j + face_dcol(f);
  const bool inside =
      ni >= 0 && nj >= 0 && ni < active.rows() && nj < active.cols();
  if (inside) return active(ni, nj) ? FaceKind::conduct : FaceKind::exposed;
  return edges == EdgeCondition::dirichlet_ambient ? FaceKind::dirichlet
                                                   : FaceKind::exposed;
}

/// Outward surface loss in W/m^2 at temperature t: convection plus radiation
/// minus absorbed laser flux (top faces only).
template <typename Scalar>
Scalar surface_loss(const MaterialModelT<Scalar>& m, Scalar t, Face f,
                    Scalar laser_flux) {
  const Scalar tk = t + Scalar(kKelvinOffset);
  const Scalar ta = m.t_amb + Scalar(kKelvinOffset);
  const Scalar h = f == Face::north ? m.h_top : m.h_conv;
  Scalar loss = h * (t - m.t_amb) +
                m.sigma_sb * m.emissivity * (tk * tk * tk * tk - ta * ta * ta * ta);
  if (f == Face::north) loss -= laser_flux;
  return loss;
}

/// Through-thickness sink of the thin-wall reduction, W/m^3.
template <typename Scalar>
Scalar thin_wall_sink(const MaterialModelT<Scalar>& m, Scalar t,
                      Scalar thickness) {
  const Scalar tk = t + Scalar(kKelvinOffset);
  const Scalar ta = m.t_amb + Scalar(kKelvinOffset);
  return (m.h_conv * (t - m.t_amb) +
          m.sigma_sb * m.emissivity * (tk * tk * tk * tk - ta * ta * ta * ta)) /
         thickness;
}

/// Right-hand side of rho Cp dT/dt at every active cell (W/m^3, zero on
/// inactive cells), with coefficients evaluated at `t`:
///   k/dx^2 * sum_faces (T_ghost - T) - sink,
/// where T_ghost is the neighbour for conducting faces, 2 T_amb - T for
/// Dirichlet edges and T - (dx/k) * surface_loss(T) for exposed faces.
template <typename Scalar>
FieldT<Scalar> heat_rhs(const FieldT<Scalar>& t, const Mask& active,
                        const MaterialModelT<Scalar>& m, const GridSpec& grid,
                        const FieldT<Scalar>& flux, const StepOptions& opt) {
  const Eigen::Index rows = t.rows(), cols = t.cols();
  FieldT<Scalar> rhs = FieldT<Scalar>::Zero(rows, cols);
  const Scalar dx = Scalar(grid.dx);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (!active(i, j)) continue;
      const Scalar tc = t(i, j);
      const Scalar k = m.conductivity(tc);
      Scalar diff = 0;
      for (Face f : kFaces) {
        switch (face_kind(active, i, j, f, opt.edges)) {
          case FaceKind::conduct:
            diff += t(i + face_drow(f), j + face_dcol(f)) - tc;
            break;
          case FaceKind::dirichlet:
            diff += Scalar(2) * (m.t_amb - tc);
            break;
          case FaceKind::exposed:
            diff -= dx / k * surface_loss(m, tc, f, flux(i, j));
            break;
        }
      }
      Scalar r = k / (dx * dx) * diff;
      if (opt.mode == HeatMode::thin_wall) {
        r -= thin_wall_sink(m, tc, Scalar(grid.thickness));
      }
      rhs(i, j) = r;
    }
  }
  return rhs;
}

/// Largest stable dt for the active temperatures of a field.
template <typename Scalar>
Scalar frame_cfl_max_dt(const FieldT<Scalar>& t, const Mask& active,
                        const MaterialModelT<Scalar>& m, const GridSpec& grid) {
  Scalar lo = std::numeric_limits<Scalar>::infinity();
  Scalar hi = -lo;
  for (Eigen::Index i = 0; i < t.rows(); ++i) {
    for (Eigen::Index j = 0; j < t.cols(); ++j) {
      if (!active(i, j)) continue;
      lo = std::min(lo, t(i, j));
      hi = std::max(hi, t(i, j));
    }
  }
  if (!(lo <= hi)) return std::numeric_limits<Scalar>::infinity();
  return cfl_max_dt(m, grid, lo, hi);
}

/// One forward-time centred-space step with lagged coefficients. Inactive
/// cells are left untouched.
template <typename Scalar>
ThermalFrameT<Scalar> step_explicit(const ThermalFrameT<Scalar>& frame,
                                    const MaterialModelT<Scalar>& m,
                                    const GridSpec& grid,
                                    const FieldT<Scalar>& flux,
                                    const StepOptions& opt = {}) {
  const Scalar limit = frame_cfl_max_dt(frame.values, frame.active, m, grid);
  if (Scalar(grid.dt) > limit) {
    std::ostringstream os;
    os.precision(12);
    os << "CFL violation: dt = " << grid.dt
       << " s exceeds cfl_max_dt = " << limit << " s";
    throw NumericError(os.str());
  }
  const FieldT<Scalar> rhs =
      heat_rhs(frame.values, frame.active, m, grid, flux, opt);
  ThermalFrameT<Scalar> next{frame.t + 1, frame.values, frame.active};
  const Scalar dt = Scalar(grid.dt);
  for (Eigen::Index i = 0; i < grid.rows; ++i) {
    for (Eigen::Index j = 0; j < grid.cols; ++j) {
      if (!frame.active(i, j)) continue;
      const Scalar tc = frame.values(i, j);
      const Scalar v = tc + dt * rhs(i, j) / m.volumetric_heat_capacity(tc);
      if (!std::isfinite(double(v)) || v < Scalar(-kKelvinOffset)) {
        std::ostringstream os;
        os << "non-physical temperature " << v << " C at cell (" << i << ", "
           << j << ") after step " << next.t;
        throw NumericError(os.str());
      }
      next.values(i, j) = v;
    }
  }
  return next;
}

template <typename Scalar>
ThermalFrameT<Scalar> step_explicit(const ThermalFrameT<Scalar>& frame,
                                    const MaterialModelT<Scalar>& m,
                                    const GridSpec& grid, const LaserSpec& laser,
                                    const LaserState& state,
                                    const StepOptions& opt = {}) {
  return step_explicit(frame, m, grid, gaussian_flux<Scalar>(laser, state, grid),
                       opt);
}

struct SimScenario {
  MaterialModel material;
  GridSpec grid;
  LaserSpec laser;
  DepositionPath path;
  Eigen::Index n_steps = 0;
  Eigen::Index record_every = 1;
  StepOptions options;
};

/// Recorded frames; flux[k] is the laser flux applied during the step that
/// produced frames[k] (zero for the initial frame).
struct SimulationResult {
  std::vector<ThermalFrame> frames;
  std::vector<Field> flux;
};

/// Runs the scenario from T = T_amb with the substrate active. Each step
/// applies step_explicit with the laser state of that step and then switches
/// on the cells scheduled for it at the process temperature. The initial
/// frame is recorded, then every `record_every` steps.
SimulationResult simulate(const SimScenario& scenario);

}  // namespace piconv
