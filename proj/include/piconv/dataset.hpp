#pragma once

// Frame sequences and the sliding-window samples drawn from them.

#include "piconv/field.hpp"
#include "piconv/model.hpp"
#include "piconv/physics.hpp"
#include "piconv/thermal_sim.hpp"

#include <memory>
#include <vector>

namespace piconv {

/// A recorded sequence. channels[n][c] is channel c of frame n; channel 0 is
/// the predicted temperature field. flux[n] is the laser flux applied while
/// producing frame n and active[n] the cells present in frame n.
struct FrameSeries {
  std::vector<std::vector<Field>> channels;
  std::vector<Mask> active;
  std::vector<Field> flux;
  /// Material, grid and time interval between consecutive frames.
  PhysicsSettings physics;
  /// Temperature of freshly deposited cells and peak laser flux
  /// 2 eta P / (pi r^2); zero when unknown (e.g. ingested frames).
  double process_temperature = 0.0;
  double peak_flux = 0.0;

  Index size() const { return Index(channels.size()); }
  Index rows() const { return channels.empty() ? 0 : channels.front().front().rows(); }
  Index cols() const { return channels.empty() ? 0 : channels.front().front().cols(); }
  Index channel_count() const {
    return channels.empty() ? 0 : Index(channels.front().size());
  }
  const Field& frame(Index n) const { return channels[std::size_t(n)].front(); }

  void validate() const;
};

/// Builds a single-channel series from simulator output.
FrameSeries series_from_simulation(const SimulationResult& sim,
                                   const SimScenario& scenario);

/// Inputs are frames first..last (last = first + w - 1), the target is
/// last + horizon and prev = target - 1.
struct WindowedSample {
  Index first = 0;
  Index last = 0;
  Index target = 0;
  Index prev = 0;
};

struct WindowedDataset {
  std::shared_ptr<const FrameSeries> series;
  Index window = 0;
  Index horizon = 0;
  std::vector<WindowedSample> samples;

  Index size() const { return Index(samples.size()); }
  SampleInput input(const WindowedSample& s) const;
  const Field& target(const WindowedSample& s) const {
    return series->frame(s.target);
  }
};

/// size() - w - i + 1 chronologically ordered samples.
WindowedDataset window_dataset(std::shared_ptr<const FrameSeries> series,
                               Index window, Index horizon);

struct DatasetSplit {
  WindowedDataset train;
  WindowedDataset validation;
};

/// Chronological split: the first floor(fraction * N) samples train.
DatasetSplit split_dataset(const WindowedDataset& data, double fraction);

}  // namespace piconv
