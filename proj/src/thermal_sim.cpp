#include "piconv/thermal_sim.hpp"

namespace piconv {

std::string to_string(HeatMode mode) {
  return mode == HeatMode::thin_wall ? "thin_wall" : "interior_2d";
}

HeatMode heat_mode_from_string(const std::string& name) {
  if (name == "interior_2d") return HeatMode::interior_2d;
  if (name == "thin_wall") return HeatMode::thin_wall;
  throw ValidationError("unknown heat mode '" + name +
                        "' (expected interior_2d or thin_wall)");
}

SimulationResult simulate(const SimScenario& sc) {
  sc.grid.validate();
  sc.laser.validate();
  if (sc.n_steps < 0 || sc.record_every < 1) {
    throw ValidationError("simulate: n_steps must be >= 0, record_every >= 1");
  }
  const MaterialModel& m = sc.material;

  ThermalFrame frame;
  frame.t = 0;
  frame.values = Field::Constant(sc.grid.rows, sc.grid.cols, m.t_amb);
  frame.active = sc.path.initial_mask(sc.grid);

  SimulationResult out;
  out.frames.reserve(std::size_t(sc.n_steps / sc.record_every + 1));
  out.frames.push_back(frame);
  out.flux.push_back(Field::Zero(sc.grid.rows, sc.grid.cols));

  std::size_t next_activation = 0;
  const auto& acts = sc.path.activations;
  for (Eigen::Index s = 1; s <= sc.n_steps; ++s) {
    const LaserState laser = sc.path.laser_at(s);
    Field flux = gaussian_flux(sc.laser, laser, sc.grid);
    try {
      frame = step_explicit(frame, m, sc.grid, flux, sc.options);
    } catch (const Error& e) {
      throw Error(e.kind(), "simulate: step " + std::to_string(s) + ": " +
                                e.what());
    }
    frame.t = s;
    while (next_activation < acts.size() && acts[next_activation].step <= s) {
      const Cell c = acts[next_activation].cell;
      if (!frame.active(c.row, c.col)) {
        frame.active(c.row, c.col) = true;
        frame.values(c.row, c.col) = sc.path.process_temperature;
      }
      ++next_activation;
    }
    if (s % sc.record_every == 0) {
      out.frames.push_back(frame);
      out.flux.push_back(std::move(flux));
    }
  }
  return out;
}

}  // namespace piconv
