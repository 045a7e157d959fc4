#pragma once

// Multi-step prediction: iterative rolling with a horizon-1 model and direct
// prediction with a model trained for a fixed horizon.

#include "piconv/checkpoint.hpp"
#include "piconv/dataset.hpp"
#include "piconv/metrics.hpp"

#include <memory>
#include <string>
#include <vector>

namespace piconv {

struct StudyReport;
struct TrainConfig;

/// Feeds each prediction back as the newest frame. flux[s] is the true flux
/// at the s-th predicted time. For multi-channel models only channel 0 is
/// fed back; channels 1.. of the new frame come from lower_channels[s].
/// Returns `steps` frames. Requires a horizon-1 checkpoint.
std::vector<Field> rolling_predict(const Checkpoint& ck,
                                   const std::vector<std::vector<Field>>& window,
                                   const std::vector<Field>& flux, Index steps,
                                   const std::vector<std::vector<Field>>& lower_channels = {});

/// One forward call targeting `horizon` frames ahead; the checkpoint must have
/// been trained for that horizon.
Field direct_predict(const Checkpoint& ck, const std::vector<std::vector<Field>>& window,
                     const Field& flux_at_target, Index horizon);

/// Rolling metrics at `horizon` over the samples of a horizon-h dataset,
/// using a horizon-1 checkpoint. Samples are rolled together in batches.
Metrics rolling_metrics(const Checkpoint& ck, const WindowedDataset& data);

enum class HorizonMode { rolling, direct };

struct HorizonPoint {
  Index horizon = 0;
  Metrics metrics;  // median over seeds
  std::vector<Metrics> per_seed;
};

struct HorizonCurve {
  HorizonMode mode = HorizonMode::rolling;
  std::vector<HorizonPoint> points;
};

struct HorizonStudy {
  HorizonCurve rolling;
  HorizonCurve direct;
  double seconds = 0.0;
};

/// Trains one horizon-1 model per seed (evaluated by rolling at every
/// horizon) and one direct model per horizon and seed. Horizons are sorted
/// and must be distinct. Both curves are evaluated on the validation split
/// of the horizon-h windowed dataset.
HorizonStudy horizon_study(std::shared_ptr<const FrameSeries> series,
                           std::vector<Index> horizons, const ModelConfig& base,
                           const TrainConfig& tc, Index seeds);

/// Rows labelled "rolling i=<h>" and "direct i=<h>".
StudyReport horizon_report(const HorizonStudy& study);

}  // namespace piconv
