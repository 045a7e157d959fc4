#include "piconv/model.hpp"

#include "piconv/error.hpp"

#include <cmath>
#include <random>

namespace piconv {

void ModelConfig::validate() const {
  if (convlstm_layers < 1) throw ValidationError("model: convlstm_layers must be >= 1");
  if (conv_layers < 0) throw ValidationError("model: conv_layers must be >= 0");
  if (filters < 1) throw ValidationError("model: filters must be >= 1");
  if (kernel_size < 1 || kernel_size % 2 == 0) {
    throw ValidationError("model: kernel_size must be odd and >= 1");
  }
  if (window < 1) throw ValidationError("model: window must be >= 1");
  if (horizon < 1) throw ValidationError("model: horizon must be >= 1");
  if (input_channels < 1) throw ValidationError("model: input_channels must be >= 1");
  if (flux_channels != 1) throw ValidationError("model: flux_channels must be 1");
  if (!(t_min < t_max)) throw ValidationError("model: t_min must be < t_max");
  if (!(flux_norm > 0)) throw ValidationError("model: flux_norm must be > 0");
}

std::optional<std::string> config_difference(const ModelConfig& a,
                                             const ModelConfig& b) {
#define PICONV_DIFF(field) \
  if (a.field != b.field) return #field
  PICONV_DIFF(convlstm_layers);
  PICONV_DIFF(conv_layers);
  PICONV_DIFF(filters);
  PICONV_DIFF(kernel_size);
  PICONV_DIFF(window);
  PICONV_DIFF(horizon);
  PICONV_DIFF(input_channels);
  PICONV_DIFF(flux_channels);
  PICONV_DIFF(t_min);
  PICONV_DIFF(t_max);
  PICONV_DIFF(flux_norm);
#undef PICONV_DIFF
  return std::nullopt;
}

const NamedArray& ModelParams::at(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return a;
  }
  throw ValidationError("no parameter named '" + name + "'");
}

NamedArray& ModelParams::at(const std::string& name) {
  return const_cast<NamedArray&>(std::as_const(*this).at(name));
}

bool ModelParams::contains(const std::string& name) const {
  for (const NamedArray& a : arrays) {
    if (a.name == name) return true;
  }
  return false;
}

Index ModelParams::count() const {
  Index n = 0;
  for (const NamedArray& a : arrays) n += a.value.size();
  return n;
}

namespace {

std::string lstm_name(Index l, const char* what) {
  return "convlstm" + std::to_string(l) + "." + what;
}
std::string conv_name(Index l, const char* what) {
  return "conv" + std::to_string(l) + "." + what;
}

}  // namespace

std::vector<std::pair<std::string, Shape>> parameter_layout(const ModelConfig& c) {
  std::vector<std::pair<std::string, Shape>> out;
  const Index k = c.kernel_size, f = c.filters;
  Index in = c.input_channels;
  for (Index l = 0; l < c.convlstm_layers; ++l) {
    out.emplace_back(lstm_name(l, "kernel"), Shape{4 * f, in + f, k, k});
    out.emplace_back(lstm_name(l, "bias"), Shape{4 * f});
    in = f;
  }
  in = f + c.flux_channels;
  for (Index l = 0; l < c.conv_layers; ++l) {
    out.emplace_back(conv_name(l, "kernel"), Shape{f, in, k, k});
    out.emplace_back(conv_name(l, "bias"), Shape{f});
    in = f;
  }
  out.emplace_back("head.kernel", Shape{1, in, k, k});
  out.emplace_back("head.bias", Shape{1});
  return out;
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::mt19937_64 rng(seed);
  ModelParams params;
  for (auto& [name, shape] : parameter_layout(config)) {
    NamedArray a{name, shape, Array::Zero(shape_size(shape))};
    if (shape.size() == 4) {
      const double bound =
          std::sqrt(1.0 / double(shape[1] * shape[2] * shape[3]));
      std::uniform_real_distribution<double> dist(-bound, bound);
      for (Index i = 0; i < a.value.size(); ++i) a.value[i] = dist(rng);
    } else if (name.starts_with("convlstm")) {
      a.value.segment(config.filters, config.filters).setOnes();
    }
    params.arrays.push_back(std::move(a));
  }
  return params;
}

const Tensor& BoundParams::at(const std::string& name) const {
  if (source == nullptr) throw ValidationError("unbound parameters");
  for (std::size_t i = 0; i < source->arrays.size(); ++i) {
    if (source->arrays[i].name == name) return tensors[i];
  }
  throw ValidationError("no parameter named '" + name + "'");
}

BoundParams bind(Tape& tape, const ModelParams& params, bool trainable) {
  BoundParams b;
  b.source = &params;
  b.tensors.reserve(params.arrays.size());
  for (const NamedArray& a : params.arrays) {
    b.tensors.push_back(trainable ? tape.variable(a.shape, a.value)
                                  : tape.constant(a.shape, a.value));
  }
  return b;
}

CellOutput cell_forward(const Tensor& x, const Tensor& h_prev,
                        const Tensor& c_prev, const Tensor& kernel,
                        const Tensor& bias) {
  const Index f = h_prev.dim(1);
  if (kernel.dim(0) != 4 * f) {
    throw ShapeError("cell_forward: kernel " + shape_string(kernel.shape()) +
                     " does not produce 4 x " + std::to_string(f) + " gates");
  }
  if (c_prev.shape() != h_prev.shape()) {
    throw ShapeError("cell_forward: cell state " + shape_string(c_prev.shape()) +
                     " vs hidden state " + shape_string(h_prev.shape()));
  }
  Tensor gates = conv2d(concat_channels(x, h_prev), kernel, bias);
  Tensor i = sigmoid(slice_channels(gates, 0, f));
  Tensor fg = sigmoid(slice_channels(gates, f, f));
  Tensor g = tanh(slice_channels(gates, 2 * f, f));
  Tensor o = sigmoid(slice_channels(gates, 3 * f, f));
  Tensor c = add(mul(fg, c_prev), mul(i, g));
  Tensor h = mul(o, tanh(c));
  return {h, c};
}

Tensor forward(const BoundParams& params, const ModelConfig& config,
               const ModelInputs& inputs) {
  if (Index(inputs.frames.size()) != config.window) {
    throw ShapeError("forward: window holds " +
                     std::to_string(inputs.frames.size()) + " frames, model expects " +
                     std::to_string(config.window));
  }
  const Shape& s0 = inputs.frames.front().shape();
  if (s0.size() != 4 || s0[1] != config.input_channels) {
    throw ShapeError("forward: frame tensor " + shape_string(s0) +
                     " does not carry " + std::to_string(config.input_channels) +
                     " channels");
  }
  const Shape& fs = inputs.flux.shape();
  if (fs.size() != 4 || fs[0] != s0[0] || fs[1] != config.flux_channels ||
      fs[2] != s0[2] || fs[3] != s0[3]) {
    throw ShapeError("forward: flux " + shape_string(fs) +
                     " does not match frames " + shape_string(s0));
  }
  Tape& tape = inputs.flux.tape();
  const Shape state_shape{s0[0], config.filters, s0[2], s0[3]};

  std::vector<Tensor> sequence = inputs.frames;
  for (Index l = 0; l < config.convlstm_layers; ++l) {
    const Tensor& kernel = params.at(lstm_name(l, "kernel"));
    const Tensor& bias = params.at(lstm_name(l, "bias"));
    Tensor h = tape.zeros(state_shape);
    Tensor c = tape.zeros(state_shape);
    for (Tensor& x : sequence) {
      CellOutput out = cell_forward(x, h, c, kernel, bias);
      h = out.h;
      c = out.c;
      x = h;
    }
  }
  Tensor y = concat_channels(sequence.back(), inputs.flux);
  for (Index l = 0; l < config.conv_layers; ++l) {
    y = tanh(conv2d(y, params.at(conv_name(l, "kernel")),
                    params.at(conv_name(l, "bias"))));
  }
  y = conv2d(y, params.at("head.kernel"), params.at("head.bias"));
  return offset(scale(y, config.t_max - config.t_min), config.t_min);
}

ModelInputs make_inputs(Tape& tape, const ModelConfig& config,
                        std::span<const SampleInput* const> samples,
                        bool zero_flux) {
  if (samples.empty()) throw ValidationError("make_inputs: empty batch");
  const Field& ref = samples.front()->flux;
  const Index rows = ref.rows(), cols = ref.cols(), plane = rows * cols;
  const Index batch = Index(samples.size());
  const Index ch = config.input_channels;
  for (const SampleInput* s : samples) {
    if (Index(s->window.size()) != config.window) {
      throw ShapeError("make_inputs: sample window has " +
                       std::to_string(s->window.size()) + " frames, expected " +
                       std::to_string(config.window));
    }
    if (s->flux.rows() != rows || s->flux.cols() != cols) {
      throw ShapeError("make_inputs: flux field shape mismatch");
    }
    for (const auto& frame : s->window) {
      if (Index(frame.size()) != ch) {
        throw ShapeError("make_inputs: frame has " + std::to_string(frame.size()) +
                         " channels, expected " + std::to_string(ch));
      }
      for (const Field& f : frame) {
        if (f.rows() != rows || f.cols() != cols) {
          throw ShapeError("make_inputs: spatial mismatch between frames and flux");
        }
      }
    }
  }
  const double span = config.t_max - config.t_min;
  ModelInputs in;
  for (Index k = 0; k < config.window; ++k) {
    Array v(batch * ch * plane);
    for (Index b = 0; b < batch; ++b) {
      for (Index c = 0; c < ch; ++c) {
        const Field& f = samples[std::size_t(b)]->window[std::size_t(k)][std::size_t(c)];
        v.segment((b * ch + c) * plane, plane) =
            (Eigen::Map<const Array>(f.data(), plane) - config.t_min) / span;
      }
    }
    in.frames.push_back(tape.constant({batch, ch, rows, cols}, std::move(v)));
  }
  Array q = Array::Zero(batch * plane);
  if (!zero_flux) {
    for (Index b = 0; b < batch; ++b) {
      q.segment(b * plane, plane) =
          Eigen::Map<const Array>(samples[std::size_t(b)]->flux.data(), plane) /
          config.flux_norm;
    }
  }
  in.flux = tape.constant({batch, 1, rows, cols}, std::move(q));
  return in;
}

std::vector<Field> predict_batch(const ModelParams& params,
                                 const ModelConfig& config,
                                 std::span<const SampleInput* const> samples,
                                 bool zero_flux) {
  Tape tape;
  ModelInputs in = make_inputs(tape, config, samples, zero_flux);
  Tensor y = forward(bind(tape, params, false), config, in);
  const Index rows = samples.front()->flux.rows(), cols = samples.front()->flux.cols();
  const Index plane = rows * cols;
  std::vector<Field> out;
  out.reserve(samples.size());
  for (std::size_t b = 0; b < samples.size(); ++b) {
    Field f(rows, cols);
    Eigen::Map<Array>(f.data(), plane) = y.value().segment(Index(b) * plane, plane);
    out.push_back(std::move(f));
  }
  return out;
}

Field predict(const ModelParams& params, const ModelConfig& config,
              const SampleInput& sample, bool zero_flux) {
  const SampleInput* one[] = {&sample};
  return std::move(predict_batch(params, config, one, zero_flux).front());
}

}  // namespace piconv
