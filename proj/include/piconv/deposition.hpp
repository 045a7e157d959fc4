#pragma once

#include "piconv/laser.hpp"
#include "piconv/material.hpp"

#include <string>
#include <vector>

namespace piconv {

enum class PathKind { thin_wall_raster, cylinder_spiral, cube_zigzag };

std::string to_string(PathKind kind);
PathKind path_kind_from_string(const std::string& name);

struct PathParams {
  PathKind kind = PathKind::thin_wall_raster;
  double scan_speed = 7e-3;              // m/s
  double process_temperature = 1800.0;  // C
  Eigen::Index layers = 4;
  /// Rows at the bottom of the grid that are active from the start.
  Eigen::Index substrate_rows = 4;
  /// Fill width in cells for raster/zigzag; 0 uses the grid width minus the
  /// 2-cell margins.
  Eigen::Index width = 0;
};

/// Default scan speed per pattern: 10 mm/s spiral, 7 mm/s zigzag/raster.
double default_scan_speed(PathKind kind);

struct Cell {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
};

/// Cell switched on at the end of simulation step `step` (1-based).
struct Activation {
  Eigen::Index step = 0;
  Cell cell;
};

/// Laser track plus element activation schedule. track[s - 1] is the laser
/// state during step s; consecutive positions are at most scan_speed * dt
/// apart.
struct DepositionPath {
  PathKind kind = PathKind::thin_wall_raster;
  double scan_speed = 0.0;
  double process_temperature = 0.0;
  Eigen::Index substrate_rows = 0;
  std::vector<LaserState> track;
  std::vector<Activation> activations;  // non-decreasing step
  /// Visiting order of deposited cells (one entry per cell).
  std::vector<Cell> deposit_order;
  /// Total length of laser-on travel, in metres.
  double on_length = 0.0;
  Eigen::Index on_runs = 0;

  Eigen::Index steps() const { return Eigen::Index(track.size()); }
  /// Laser state for a 1-based step; off after the track ends.
  LaserState laser_at(Eigen::Index step) const;
  /// Initially active cells (the substrate).
  Mask initial_mask(const GridSpec& grid) const;
  void validate(const GridSpec& grid) const;
};

/// Builds the laser track and activation schedule for one pattern:
///  - thin_wall_raster: left-to-right passes, one row per pass, laser off on
///    the return travel;
///  - cube_zigzag: boustrophedon rows filled bottom-up;
///  - cylinder_spiral: concentric discretised circles, one per layer,
///    traversed by angle and stepping inward.
/// Throws ValidationError when the pattern does not fit with a 2-cell margin.
DepositionPath generate_path(const PathParams& params, const GridSpec& grid);

}  // namespace piconv
