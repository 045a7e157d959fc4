#pragma once

// Minibatch Adam training of the composite loss, and evaluation.

#include "piconv/checkpoint.hpp"
#include "piconv/dataset.hpp"
#include "piconv/metrics.hpp"
#include "piconv/physics.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace piconv {

struct TrainConfig {
  double learning_rate = 1e-3;
  Index epochs = 40;
  Index batch_size = 8;
  std::uint64_t seed = 0;
  /// Fixed loss weights. When unset, w_d = 1 and the physics weights are
  /// chosen once from the first batch so that each weighted term equals the
  /// initial data term; they stay frozen afterwards.
  std::optional<LossWeights> weights;
  bool use_pi_loss = true;
  /// When false the network receives a zero flux field.
  bool use_pi_input = true;
  double split = 0.8;
  /// Truncate the training split to its first N samples (0 keeps all).
  Index max_train_samples = 0;
  /// Standard deviation (C) of Gaussian noise added to training targets.
  /// Drawn once per sample from the run seed.
  double target_noise = 0.0;
  /// Learn a scalar multiplier of the laser flux inside the physics terms.
  bool train_laser_power = false;

  void validate() const;
};

/// Unweighted terms averaged over the batches of one epoch, and their
/// weighted average.
struct EpochRecord {
  Index epoch = 0;
  LossBreakdown loss;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochRecord> history;
  LossWeights weights;
  /// Learned laser-power multiplier (1 unless train_laser_power).
  double laser_power_scale = 1.0;
};

/// Physics reference data for the given samples, from the series.
PhysicsBatch physics_batch(const WindowedDataset& data,
                           std::span<const WindowedSample> samples);

/// Trains on `train` from init_params(config, seed).
TrainResult train(const WindowedDataset& train, const ModelConfig& config,
                  const TrainConfig& tc);

/// Batched untaped forward over samples.
std::vector<Field> predict_samples(const ModelParams& params,
                                   const ModelConfig& config,
                                   const WindowedDataset& data,
                                   std::span<const WindowedSample> samples,
                                   bool zero_flux);

/// Per-sample metrics averaged over the dataset.
Metrics evaluate(const Checkpoint& ck, const WindowedDataset& data);

/// Model configuration for a series: window and horizon given, temperature
/// range (T_amb, 1.1 * max frame value) and flux normaliser from the data.
ModelConfig default_model_config(const FrameSeries& series, Index window,
                                 Index horizon);

}  // namespace piconv
