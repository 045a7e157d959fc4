#pragma once

// 8x8 micro-model used for end-to-end gradient checks: window 2, two
// ConvLSTM layers of 4 filters, composite loss with every term switched on.

#include "oracles.hpp"
#include "piconv/grad_check.hpp"
#include "piconv/model.hpp"
#include "piconv/physics.hpp"
#include "piconv/trainer.hpp"

#include <algorithm>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace piconv::test {

struct MicroCase {
  ModelConfig config;
  ModelParams params;
  std::vector<SampleInput> samples;
  std::vector<Field> targets;
  PhysicsBatch batch;
  PhysicsSettings settings;
  LossWeights weights;
};

inline Mask micro_mask(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<Index> top(2, 4);
  Mask m = Mask::Constant(8, 8, false);
  for (Index j = 1; j < 7; ++j)
    for (Index i = top(rng); i < 8; ++i) m(i, j) = true;
  return m;
}

inline MicroCase micro_case(std::uint64_t seed, Index batch = 2) {
  MicroCase mc;
  mc.config.convlstm_layers = 2;
  mc.config.conv_layers = 1;
  mc.config.filters = 4;
  mc.config.window = 2;
  mc.config.t_min = 23.0;
  mc.config.t_max = 1980.0;
  mc.config.flux_norm = LaserSpec{}.peak_flux();
  mc.params = init_params(mc.config, seed);
  // Non-zero biases so that every bias gradient is exercised.
  std::mt19937_64 rng(seed + 7);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  for (NamedArray& a : mc.params.arrays)
    if (a.shape.size() == 1)
      for (Index k = 0; k < a.value.size(); ++k) a.value[k] += u(rng);

  mc.settings.grid.rows = mc.settings.grid.cols = 8;
  mc.settings.frame_dt = mc.settings.grid.dt;
  mc.settings.options.mode = HeatMode::thin_wall;
  const LaserSpec laser;
  for (Index b = 0; b < batch; ++b) {
    const std::uint64_t s = seed * 101 + std::uint64_t(b);
    SampleInput in;
    for (Index k = 0; k < 2; ++k) in.window.push_back({random_field(8, 8, s + 10 * k, 23, 1500)});
    in.flux = gaussian_flux(laser, LaserState{(2.5 + double(b)) * 1e-3, 3.5e-3, true},
                            mc.settings.grid);
    mc.samples.push_back(in);
    mc.targets.push_back(random_field(8, 8, s + 99, 23, 1500));
    mc.batch.prev.push_back(in.window.back().front());
    mc.batch.prev_active.push_back(micro_mask(s));
    mc.batch.target_active.push_back(micro_mask(s + 1));
    mc.batch.flux.push_back(in.flux);
  }
  // Scale every term to order one at the starting parameters.
  mc.weights = LossWeights{1, 1, 1, 1};
  Tape tape;
  std::vector<const SampleInput*> ptrs;
  for (const SampleInput& s : mc.samples) ptrs.push_back(&s);
  const ModelInputs inputs = make_inputs(tape, mc.config, ptrs);
  const Tensor pred = forward(bind(tape, mc.params, false), mc.config, inputs);
  Array t(pred.size());
  for (Index b = 0; b < batch; ++b)
    t.segment(b * 64, 64) = Eigen::Map<const Array>(mc.targets[b].data(), 64);
  const LossBreakdown l =
      composite_loss(pred, tape.constant(pred.shape(), t), mc.batch, mc.settings,
                     mc.weights)
          .breakdown;
  mc.weights = LossWeights{1 / l.l_pde, 1 / l.l_ic, 1 / l.l_bc, 1 / l.l_data};
  return mc;
}

/// Worst finite-difference error of d l_total / d(group) for one parameter
/// group of the micro-model, at the best of three central-difference steps.
inline double micro_group_error(const MicroCase& mc, const std::string& group) {
  const NamedArray& target_group = mc.params.at(group);
  Array targets(Index(mc.targets.size()) * 64);
  for (std::size_t b = 0; b < mc.targets.size(); ++b)
    targets.segment(Index(b) * 64, 64) = Eigen::Map<const Array>(mc.targets[b].data(), 64);
  auto f = [&](Tape& tape, const Tensor& x) {
    BoundParams bound = bind(tape, mc.params, false);
    for (std::size_t k = 0; k < mc.params.arrays.size(); ++k)
      if (mc.params.arrays[k].name == group) bound.tensors[k] = x;
    std::vector<const SampleInput*> ptrs;
    for (const SampleInput& s : mc.samples) ptrs.push_back(&s);
    const ModelInputs inputs = make_inputs(tape, mc.config, ptrs);
    const Tensor pred = forward(bound, mc.config, inputs);
    return composite_loss(pred, tape.constant(pred.shape(), targets), mc.batch,
                          mc.settings, mc.weights)
        .total;
  };
  // No single step suits every group: early ConvLSTM kernels see rounding in
  // the difference quotient below eps ~ 1e-4, while the decoder kernels carry
  // O(eps^2) truncation above it. A wrong analytic gradient fails at all
  // three steps.
  double best = std::numeric_limits<double>::infinity();
  for (double eps : {1e-3, 1e-4, 1e-5}) {
    best = std::min(best, grad_check(f, target_group.shape, target_group.value, eps));
    if (best < 1e-6) break;
  }
  return best;
}

/// 8x8 thin-wall deposition recorded for `frames` frames (one per step).
inline std::shared_ptr<const FrameSeries> micro_series(Index frames = 60) {
  SimScenario sc;
  sc.grid.rows = sc.grid.cols = 8;
  sc.options.mode = HeatMode::thin_wall;
  PathParams p;
  p.substrate_rows = 2;
  p.layers = 3;
  sc.path = generate_path(p, sc.grid);
  sc.n_steps = frames - 1;
  return std::make_shared<FrameSeries>(series_from_simulation(simulate(sc), sc));
}

inline ModelConfig micro_config(const FrameSeries& series, Index window = 2,
                                Index horizon = 1) {
  ModelConfig c = default_model_config(series, window, horizon);
  c.convlstm_layers = 1;
  c.conv_layers = 1;
  c.filters = 3;
  return c;
}

}  // namespace piconv::test
