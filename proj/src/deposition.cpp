#include "piconv/deposition.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace piconv {

std::string to_string(PathKind kind) {
  switch (kind) {
    case PathKind::thin_wall_raster: return "thin_wall_raster";
    case PathKind::cylinder_spiral: return "cylinder_spiral";
    case PathKind::cube_zigzag: return "cube_zigzag";
  }
  return "unknown";
}

PathKind path_kind_from_string(const std::string& name) {
  if (name == "thin_wall_raster") return PathKind::thin_wall_raster;
  if (name == "cylinder_spiral") return PathKind::cylinder_spiral;
  if (name == "cube_zigzag") return PathKind::cube_zigzag;
  throw ValidationError("unknown path kind '" + name +
                        "' (expected thin_wall_raster, cylinder_spiral or "
                        "cube_zigzag)");
}

double default_scan_speed(PathKind kind) {
  return kind == PathKind::cylinder_spiral ? 10e-3 : 7e-3;
}

LaserState DepositionPath::laser_at(Eigen::Index step) const {
  if (step < 1 || step > steps()) return {};
  return track[std::size_t(step - 1)];
}

Mask DepositionPath::initial_mask(const GridSpec& grid) const {
  Mask m = Mask::Constant(grid.rows, grid.cols, false);
  const Eigen::Index rows = std::min(substrate_rows, grid.rows);
  m.bottomRows(rows).setConstant(true);
  return m;
}

void DepositionPath::validate(const GridSpec& grid) const {
  Eigen::Index last = 0;
  for (const Activation& a : activations) {
    if (a.step < last) {
      throw ValidationError("path: activation steps must be non-decreasing");
    }
    last = a.step;
    if (a.cell.row < 0 || a.cell.row >= grid.rows || a.cell.col < 0 ||
        a.cell.col >= grid.cols) {
      throw ValidationError("path: activated cell outside the grid");
    }
  }
  const double max_move = scan_speed * grid.dt * (1.0 + 1e-6);
  for (std::size_t s = 1; s < track.size(); ++s) {
    const double d = std::hypot(track[s].x - track[s - 1].x,
                                track[s].y - track[s - 1].y);
    if (d > max_move) {
      throw ValidationError("path: laser moves faster than the scan speed");
    }
  }
  const double w = double(grid.cols) * grid.dx, h = double(grid.rows) * grid.dx;
  for (const LaserState& l : track) {
    if (l.on && (l.x < 0 || l.x > w || l.y < 0 || l.y > h)) {
      throw ValidationError("path: laser outside the grid while on");
    }
  }
}

namespace {

struct Vertex {
  double x, y;      // m
  bool on;          // laser state while travelling *to* this vertex
  bool deposit;     // activate the cell at this vertex when reached
  Cell cell;
};

Vertex at_cell(const GridSpec& g, Cell c, bool on, bool deposit) {
  return {(double(c.col) + 0.5) * g.dx, (double(c.row) + 0.5) * g.dx, on,
          deposit, c};
}

// Each laser-on run starts on a step boundary: the laser dwells (off) at the
// run's first vertex until the next multiple of scan_speed * dt.
DepositionPath sample(const std::vector<Vertex>& poly, const PathParams& p,
                      const GridSpec& g) {
  DepositionPath path;
  path.kind = p.kind;
  path.scan_speed = p.scan_speed;
  path.process_temperature = p.process_temperature;
  path.substrate_rows = p.substrate_rows;
  const double ds = p.scan_speed * g.dt;

  struct Piece {
    double x0, y0, x1, y1;
    bool on;
    double len;
  };
  std::vector<Piece> pieces;
  std::vector<std::pair<double, Cell>> deposits;  // arc position (time units)
  double t = 0.0;  // elapsed travel, in units of ds
  Vertex prev = poly.front();
  if (prev.deposit) {
    deposits.emplace_back(0.0, prev.cell);
  }
  for (std::size_t k = 1; k < poly.size(); ++k) {
    const Vertex& v = poly[k];
    const bool starts_run = v.on && (pieces.empty() || !pieces.back().on);
    if (starts_run) {
      const double aligned = std::ceil(t - 1e-9);
      if (aligned > t) {
        pieces.push_back({prev.x, prev.y, prev.x, prev.y, false,
                          (aligned - t) * ds});
        t = aligned;
      }
      ++path.on_runs;
    }
    const double len = std::hypot(v.x - prev.x, v.y - prev.y);
    pieces.push_back({prev.x, prev.y, v.x, v.y, v.on, len});
    t += len / ds;
    if (v.on) path.on_length += len;
    if (v.deposit) deposits.emplace_back(t, v.cell);
    prev = v;
  }

  const auto n_steps = Eigen::Index(std::ceil(t - 1e-9)) + 1;
  path.track.reserve(std::size_t(n_steps));
  std::size_t piece = 0;
  double piece_start = 0.0;
  for (Eigen::Index s = 0; s < n_steps; ++s) {
    const double arc = double(s) * ds;
    while (piece + 1 < pieces.size() &&
           arc >= piece_start + pieces[piece].len - 1e-12 * ds) {
      piece_start += pieces[piece].len;
      ++piece;
    }
    LaserState l;
    if (pieces.empty()) {
      l = {poly.front().x, poly.front().y, false};
    } else {
      const Piece& pc = pieces[piece];
      const double f =
          pc.len > 0 ? std::clamp((arc - piece_start) / pc.len, 0.0, 1.0) : 0.0;
      l.x = pc.x0 + f * (pc.x1 - pc.x0);
      l.y = pc.y0 + f * (pc.y1 - pc.y0);
      l.on = pc.on && arc < piece_start + pc.len - 1e-12 * ds;
    }
    path.track.push_back(l);
  }

  for (const auto& [when, cell] : deposits) {
    const auto step = Eigen::Index(std::ceil(when - 1e-9)) + 1;
    path.activations.push_back({step, cell});
    path.deposit_order.push_back(cell);
  }
  return path;
}

void require_fits(bool ok, const std::string& what) {
  if (!ok) throw ValidationError("path: pattern exceeds grid (" + what + ")");
}

std::vector<Vertex> raster_or_zigzag(const PathParams& p, const GridSpec& g,
                                     bool zigzag) {
  const Eigen::Index width = p.width > 0 ? p.width : g.cols - 4;
  require_fits(width >= 1 && width + 4 <= g.cols, "width plus 2-cell margins");
  const Eigen::Index bottom = g.rows - p.substrate_rows - 1;
  require_fits(p.layers >= 1 && bottom - (p.layers - 1) >= 2,
               "layers above the substrate plus 2-cell margin");
  const Eigen::Index c0 = (g.cols - width) / 2;
  std::vector<Vertex> poly;
  for (Eigen::Index layer = 0; layer < p.layers; ++layer) {
    const Eigen::Index row = bottom - layer;
    const bool reverse = zigzag && (layer % 2 == 1);
    for (Eigen::Index k = 0; k < width; ++k) {
      const Eigen::Index col = reverse ? c0 + width - 1 - k : c0 + k;
      // The first vertex of a raster pass is reached with the laser off.
      const bool on = !(poly.empty() || (!zigzag && k == 0));
      poly.push_back(at_cell(g, {row, col}, on, true));
    }
  }
  return poly;
}

std::vector<Vertex> spiral(const PathParams& p, const GridSpec& g) {
  const double cr = double(g.rows) / 2.0, cc = double(g.cols) / 2.0;
  const double r0 = std::min(cr, cc) - 2.5;  // cells
  require_fits(p.layers >= 1 && r0 - double(p.layers - 1) >= 1.0,
               "spiral radius minus layers");
  std::vector<Vertex> poly;
  for (Eigen::Index layer = 0; layer < p.layers; ++layer) {
    const double radius = r0 - double(layer);
    std::vector<std::pair<double, Cell>> ring;
    for (Eigen::Index i = 0; i < g.rows; ++i) {
      for (Eigen::Index j = 0; j < g.cols; ++j) {
        const double dy = double(i) + 0.5 - cr, dxx = double(j) + 0.5 - cc;
        if (std::abs(std::hypot(dxx, dy) - radius) < 0.5) {
          ring.emplace_back(std::atan2(dy, dxx), Cell{i, j});
        }
      }
    }
    std::sort(ring.begin(), ring.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    for (const auto& [angle, cell] : ring) {
      poly.push_back(at_cell(g, cell, !poly.empty(), true));
    }
  }
  return poly;
}

}  // namespace

DepositionPath generate_path(const PathParams& params, const GridSpec& grid) {
  grid.validate();
  if (!(params.scan_speed > 0)) {
    throw ValidationError("path: scan speed must be > 0");
  }
  require_fits(params.substrate_rows >= 0 && params.substrate_rows < grid.rows,
               "substrate rows");
  std::vector<Vertex> poly;
  switch (params.kind) {
    case PathKind::thin_wall_raster:
      poly = raster_or_zigzag(params, grid, false);
      break;
    case PathKind::cube_zigzag:
      poly = raster_or_zigzag(params, grid, true);
      break;
    case PathKind::cylinder_spiral:
      poly = spiral(params, grid);
      break;
  }
  DepositionPath path = sample(poly, params, grid);
  path.validate(grid);
  return path;
}

}  // namespace piconv
