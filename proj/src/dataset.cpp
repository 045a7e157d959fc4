#include "piconv/dataset.hpp"

#include "piconv/error.hpp"

#include <cmath>

namespace piconv {

void FrameSeries::validate() const {
  if (channels.empty()) throw ValidationError("no frames found");
  const std::size_t n = channels.size();
  if (active.size() != n || flux.size() != n) {
    throw ValidationError("frame series: " + std::to_string(n) + " frames but " +
                          std::to_string(active.size()) + " masks and " +
                          std::to_string(flux.size()) + " flux fields");
  }
  const Index r = rows(), c = cols(), ch = channel_count();
  for (std::size_t k = 0; k < n; ++k) {
    if (Index(channels[k].size()) != ch) {
      throw ShapeError("frame " + std::to_string(k) + " has " +
                       std::to_string(channels[k].size()) + " channels, expected " +
                       std::to_string(ch));
    }
    for (const Field& f : channels[k]) {
      if (f.rows() != r || f.cols() != c) {
        throw ShapeError("frame " + std::to_string(k) + " is " +
                         std::to_string(f.rows()) + "x" + std::to_string(f.cols()) +
                         ", expected " + std::to_string(r) + "x" + std::to_string(c));
      }
    }
    if (active[k].rows() != r || active[k].cols() != c || flux[k].rows() != r ||
        flux[k].cols() != c) {
      throw ShapeError("mask or flux of frame " + std::to_string(k) +
                       " does not match the frame shape");
    }
  }
}

FrameSeries series_from_simulation(const SimulationResult& sim,
                                   const SimScenario& scenario) {
  FrameSeries s;
  s.channels.reserve(sim.frames.size());
  s.active.reserve(sim.frames.size());
  for (const ThermalFrame& f : sim.frames) {
    s.channels.push_back({f.values});
    s.active.push_back(f.active);
  }
  s.flux = sim.flux;
  s.physics.material = scenario.material;
  s.physics.grid = scenario.grid;
  s.physics.frame_dt = scenario.grid.dt * double(scenario.record_every);
  s.physics.options = scenario.options;
  s.process_temperature = scenario.path.process_temperature;
  s.peak_flux = scenario.laser.peak_flux();
  return s;
}

SampleInput WindowedDataset::input(const WindowedSample& s) const {
  SampleInput in;
  in.window.reserve(std::size_t(window));
  for (Index k = s.first; k <= s.last; ++k) {
    in.window.push_back(series->channels[std::size_t(k)]);
  }
  in.flux = series->flux[std::size_t(s.target)];
  return in;
}

WindowedDataset window_dataset(std::shared_ptr<const FrameSeries> series,
                               Index window, Index horizon) {
  if (!series) throw ValidationError("window_dataset: no series");
  if (window < 1 || horizon < 1) {
    throw ValidationError("window_dataset: window and horizon must be >= 1");
  }
  const Index n = series->size();
  if (n < window + horizon) {
    throw ValidationError("window_dataset: insufficient frames: " + std::to_string(n) +
                          " frames, need at least window + horizon = " +
                          std::to_string(window + horizon));
  }
  WindowedDataset d;
  d.series = std::move(series);
  d.window = window;
  d.horizon = horizon;
  for (Index first = 0; first + window - 1 + horizon < n; ++first) {
    const Index last = first + window - 1;
    d.samples.push_back({first, last, last + horizon, last + horizon - 1});
  }
  return d;
}

DatasetSplit split_dataset(const WindowedDataset& data, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ValidationError("split fraction must lie in (0, 1)");
  }
  const auto n_train = std::size_t(std::floor(fraction * double(data.size())));
  DatasetSplit out{data, data};
  out.train.samples.assign(data.samples.begin(),
                           data.samples.begin() + std::ptrdiff_t(n_train));
  out.validation.samples.assign(data.samples.begin() + std::ptrdiff_t(n_train),
                                data.samples.end());
  return out;
}

}  // namespace piconv
