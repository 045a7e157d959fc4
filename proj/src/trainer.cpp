#include "piconv/trainer.hpp"

#include "piconv/adam.hpp"
#include "piconv/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace piconv {

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("train: learning_rate must be finite and >= 0");
  }
  if (epochs < 0) throw ValidationError("train: epochs must be >= 0");
  if (batch_size < 1) throw ValidationError("train: batch_size must be >= 1");
  if (!(split > 0.0 && split < 1.0)) throw ValidationError("train: split must lie in (0, 1)");
  if (max_train_samples < 0) throw ValidationError("train: max_train_samples must be >= 0");
  if (!(target_noise >= 0.0)) throw ValidationError("train: target_noise must be >= 0");
  if (weights) weights->validate();
}

PhysicsBatch physics_batch(const WindowedDataset& data,
                           std::span<const WindowedSample> samples) {
  const FrameSeries& s = *data.series;
  PhysicsBatch b;
  for (const WindowedSample& w : samples) {
    b.prev.push_back(s.frame(w.prev));
    b.prev_active.push_back(s.active[std::size_t(w.prev)]);
    b.target_active.push_back(s.active[std::size_t(w.target)]);
    b.flux.push_back(s.flux[std::size_t(w.target)]);
  }
  return b;
}

namespace {

Tensor stack_fields(Tape& tape, std::span<const Field* const> fields) {
  const Index rows = fields.front()->rows(), cols = fields.front()->cols();
  const Index plane = rows * cols;
  Array v(Index(fields.size()) * plane);
  for (std::size_t b = 0; b < fields.size(); ++b) {
    v.segment(Index(b) * plane, plane) = Eigen::Map<const Array>(fields[b]->data(), plane);
  }
  return tape.constant({Index(fields.size()), 1, rows, cols}, std::move(v));
}

LossWeights balanced_weights(const LossBreakdown& first) {
  auto ratio = [&](double term) {
    return term > 0.0 && first.l_data > 0.0 ? first.l_data / term : 1.0;
  };
  return {ratio(first.l_pde), ratio(first.l_ic), ratio(first.l_bc), 1.0};
}

}  // namespace

TrainResult train(const WindowedDataset& train_data, const ModelConfig& config,
                  const TrainConfig& tc) {
  config.validate();
  tc.validate();
  if (train_data.window != config.window || train_data.horizon != config.horizon) {
    throw ValidationError("train: dataset window/horizon (" +
                          std::to_string(train_data.window) + ", " +
                          std::to_string(train_data.horizon) +
                          ") differ from the model configuration (" +
                          std::to_string(config.window) + ", " +
                          std::to_string(config.horizon) + ")");
  }
  std::vector<WindowedSample> samples = train_data.samples;
  if (tc.max_train_samples > 0 && Index(samples.size()) > tc.max_train_samples) {
    samples.resize(std::size_t(tc.max_train_samples));
  }
  if (samples.empty()) throw ValidationError("train: empty training split");
  if (train_data.series->channel_count() != config.input_channels) {
    throw ValidationError("train: data has " +
                          std::to_string(train_data.series->channel_count()) +
                          " channels, model expects " +
                          std::to_string(config.input_channels));
  }

  std::mt19937_64 rng(tc.seed);
  TrainResult result;
  result.checkpoint.config = config;
  result.checkpoint.params = init_params(config, tc.seed);
  result.checkpoint.seed = tc.seed;
  result.checkpoint.use_pi_loss = tc.use_pi_loss;
  result.checkpoint.use_pi_input = tc.use_pi_input;
  ModelParams& params = result.checkpoint.params;
  Array power_scale = Array::Ones(1);

  // Noisy targets are fixed per sample for the whole run.
  std::vector<Field> targets;
  targets.reserve(samples.size());
  {
    std::normal_distribution<double> noise(0.0, tc.target_noise);
    for (const WindowedSample& s : samples) {
      Field t = train_data.target(s);
      if (tc.target_noise > 0.0) {
        for (Index k = 0; k < t.size(); ++k) t.data()[k] += noise(rng);
      }
      targets.push_back(std::move(t));
    }
  }

  std::optional<LossWeights> weights = tc.weights;
  if (!tc.use_pi_loss) {
    const double wd = weights ? weights->w_d : 1.0;
    weights = LossWeights{0.0, 0.0, 0.0, wd};
  }

  Adam adam({tc.learning_rate});
  std::vector<std::string> names;
  for (const NamedArray& a : params.arrays) names.push_back(a.name);
  if (tc.train_laser_power) names.push_back("laser_power_scale");

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto batch_size = std::size_t(tc.batch_size);

  Tape tape;
  for (Index epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    LossBreakdown sums;
    Index batches = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t end = std::min(order.size(), start + batch_size);
      std::vector<WindowedSample> batch_samples;
      std::vector<SampleInput> inputs;
      std::vector<const Field*> target_ptrs;
      for (std::size_t k = start; k < end; ++k) {
        batch_samples.push_back(samples[order[k]]);
        inputs.push_back(train_data.input(samples[order[k]]));
        target_ptrs.push_back(&targets[order[k]]);
      }
      std::vector<const SampleInput*> input_ptrs;
      for (const SampleInput& in : inputs) input_ptrs.push_back(&in);
      const PhysicsBatch pb = physics_batch(train_data, batch_samples);

      tape.reset();
      BoundParams bound = bind(tape, params, true);
      ModelInputs mi = make_inputs(tape, config, input_ptrs, !tc.use_pi_input);
      Tensor preds = forward(bound, config, mi);
      Tensor tgt = stack_fields(tape, target_ptrs);
      std::optional<Tensor> fs;
      if (tc.train_laser_power) fs = tape.variable({1}, power_scale);
      const Tensor* fs_ptr = fs ? &*fs : nullptr;

      if (!weights) {
        CompositeLoss probe = composite_loss(preds, tgt, pb, train_data.series->physics,
                                             LossWeights{}, fs_ptr);
        weights = balanced_weights(probe.breakdown);
      }
      CompositeLoss loss =
          composite_loss(preds, tgt, pb, train_data.series->physics, *weights, fs_ptr);
      const LossBreakdown& lb = loss.breakdown;
      if (!std::isfinite(lb.l_total)) {
        throw NumericError("train: loss diverged (non-finite l_total) at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batches));
      }
      tape.backward(loss.total);

      std::vector<Array*> groups;
      std::vector<const Array*> grads;
      for (std::size_t g = 0; g < params.arrays.size(); ++g) {
        groups.push_back(&params.arrays[g].value);
        grads.push_back(&bound.tensors[g].grad());
      }
      if (fs) {
        groups.push_back(&power_scale);
        grads.push_back(&fs->grad());
      }
      try {
        adam.step(groups, grads, names);
      } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batches));
      }

      sums.l_pde += lb.l_pde;
      sums.l_ic += lb.l_ic;
      sums.l_bc += lb.l_bc;
      sums.l_data += lb.l_data;
      sums.l_total += lb.l_total;
      ++batches;
    }
    const double n = double(batches);
    EpochRecord rec;
    rec.epoch = epoch;
    rec.loss = {sums.l_pde / n, sums.l_ic / n, sums.l_bc / n, sums.l_data / n,
                sums.l_total / n};
    result.history.push_back(rec);
  }
  tape.reset();
  result.checkpoint.epochs = tc.epochs;
  result.weights = weights.value_or(LossWeights{});
  result.laser_power_scale = power_scale[0];
  return result;
}

std::vector<Field> predict_samples(const ModelParams& params,
                                   const ModelConfig& config,
                                   const WindowedDataset& data,
                                   std::span<const WindowedSample> samples,
                                   bool zero_flux) {
  constexpr std::size_t kChunk = 32;
  std::vector<Field> out;
  out.reserve(samples.size());
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    const std::size_t end = std::min(samples.size(), start + kChunk);
    std::vector<SampleInput> inputs;
    for (std::size_t k = start; k < end; ++k) inputs.push_back(data.input(samples[k]));
    std::vector<const SampleInput*> ptrs;
    for (const SampleInput& in : inputs) ptrs.push_back(&in);
    for (Field& f : predict_batch(params, config, ptrs, zero_flux)) {
      out.push_back(std::move(f));
    }
  }
  return out;
}

Metrics evaluate(const Checkpoint& ck, const WindowedDataset& data) {
  if (data.samples.empty()) throw ValidationError("evaluate: empty dataset");
  if (data.window != ck.config.window || data.horizon != ck.config.horizon) {
    throw ValidationError("evaluate: dataset window/horizon differ from the checkpoint");
  }
  const std::vector<Field> preds =
      predict_samples(ck.params, ck.config, data, data.samples, !ck.use_pi_input);
  std::vector<Metrics> per;
  per.reserve(preds.size());
  for (std::size_t k = 0; k < preds.size(); ++k) {
    per.push_back(field_metrics(preds[k], data.target(data.samples[k])));
  }
  return mean_metrics(per);
}

ModelConfig default_model_config(const FrameSeries& series, Index window,
                                 Index horizon) {
  ModelConfig c;
  c.window = window;
  c.horizon = horizon;
  c.input_channels = std::max<Index>(1, series.channel_count());
  c.t_min = series.physics.material.t_amb;
  double top = series.process_temperature;
  if (!(top > 0.0)) {
    for (const auto& frame : series.channels) {
      for (const Field& f : frame) top = std::max(top, f.maxCoeff());
    }
  }
  c.t_max = std::max(1.1 * top, c.t_min + 1.0);
  double peak = series.peak_flux;
  if (!(peak > 0.0)) {
    peak = 0.0;
    for (const Field& f : series.flux) peak = std::max(peak, f.maxCoeff());
  }
  c.flux_norm = peak > 0.0 ? peak : 1.0;
  return c;
}

}  // namespace piconv
