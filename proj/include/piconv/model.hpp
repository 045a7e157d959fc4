#pragma once

// Physics-informed ConvLSTM: stacked ConvLSTM cells over the input window,
// laser-flux injection after the recurrent stack, a convolutional decoder and
// a linear single-channel head.

#include "piconv/field.hpp"
#include "piconv/tensor.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace piconv {

struct ModelConfig {
  Index convlstm_layers = 3;
  Index conv_layers = 2;
  Index filters = 10;
  Index kernel_size = 3;
  Index window = 5;
  Index horizon = 1;
  Index input_channels = 1;
  Index flux_channels = 1;
  /// Temperature normalisation range, C.
  double t_min = 23.0;
  double t_max = 1980.0;
  /// Flux values are divided by this before entering the network (the peak
  /// 2 eta P / (pi r^2) of the scenario's laser).
  double flux_norm = 1.0;

  void validate() const;

  double normalize(double t) const { return (t - t_min) / (t_max - t_min); }
  double denormalize(double y) const { return t_min + (t_max - t_min) * y; }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Name of the first field that differs, or nullopt when equal.
std::optional<std::string> config_difference(const ModelConfig& a,
                                             const ModelConfig& b);

struct NamedArray {
  std::string name;
  Shape shape;
  Array value;

  friend bool operator==(const NamedArray& a, const NamedArray& b) {
    return a.name == b.name && a.shape == b.shape &&
           a.value.size() == b.value.size() &&
           (a.value.size() == 0 || (a.value == b.value).all());
  }
};

/// Ordered parameter arrays. ConvLSTM gate kernels are stacked along the
/// output-channel axis in the order input, forget, cell candidate, output.
struct ModelParams {
  std::vector<NamedArray> arrays;

  const NamedArray& at(const std::string& name) const;
  NamedArray& at(const std::string& name);
  bool contains(const std::string& name) const;
  Index count() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

/// Parameter layout (names and shapes) implied by a configuration.
std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c);

/// Kernels ~ U(-sqrt(1/fan_in), +sqrt(1/fan_in)) with fan_in = conv input
/// channels * kernel_size^2; biases zero except the forget gate (one).
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Parameters recorded on a tape, in ModelParams order.
struct BoundParams {
  std::vector<Tensor> tensors;
  const ModelParams* source = nullptr;

  const Tensor& at(const std::string& name) const;
};

BoundParams bind(Tape& tape, const ModelParams& params, bool trainable);

struct CellOutput {
  Tensor h;
  Tensor c;
};

/// z = [x, h_prev]; i, f, o = sigmoid(conv(z)), g = tanh(conv(z));
/// c = f * c_prev + i * g; h = o * tanh(c).
CellOutput cell_forward(const Tensor& x, const Tensor& h_prev,
                        const Tensor& c_prev, const Tensor& kernel,
                        const Tensor& bias);

/// Normalised network inputs for a batch: `window` tensors of shape
/// [B, input_channels, H, W], oldest first, and the flux [B, 1, H, W].
struct ModelInputs {
  std::vector<Tensor> frames;
  Tensor flux;
};

/// Predicted temperature field [B, 1, H, W] in C.
Tensor forward(const BoundParams& params, const ModelConfig& config,
               const ModelInputs& inputs);

/// One input sample in physical units: window[k][c] is channel c of the
/// k-th frame (oldest first).
struct SampleInput {
  std::vector<std::vector<Field>> window;
  Field flux;
};

/// Normalises and batches samples onto a tape.
ModelInputs make_inputs(Tape& tape, const ModelConfig& config,
                        std::span<const SampleInput* const> samples,
                        bool zero_flux = false);

/// Untaped forward over a batch of samples.
std::vector<Field> predict_batch(const ModelParams& params,
                                 const ModelConfig& config,
                                 std::span<const SampleInput* const> samples,
                                 bool zero_flux = false);

/// Untaped single prediction.
Field predict(const ModelParams& params, const ModelConfig& config,
              const SampleInput& sample, bool zero_flux = false);

}  // namespace piconv
