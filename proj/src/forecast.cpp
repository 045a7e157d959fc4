#include "piconv/forecast.hpp"

#include "piconv/error.hpp"
#include "piconv/study.hpp"
#include "piconv/trainer.hpp"

#include <algorithm>
#include <chrono>

namespace piconv {

namespace {

void require_window(const Checkpoint& ck, const std::vector<std::vector<Field>>& window) {
  if (Index(window.size()) != ck.config.window) {
    throw ValidationError("forecast: window holds " + std::to_string(window.size()) +
                          " frames, checkpoint expects " +
                          std::to_string(ck.config.window));
  }
}

}  // namespace

std::vector<Field> rolling_predict(const Checkpoint& ck,
                                   const std::vector<std::vector<Field>>& window,
                                   const std::vector<Field>& flux, Index steps,
                                   const std::vector<std::vector<Field>>& lower_channels) {
  if (ck.config.horizon != 1) {
    throw ValidationError("rolling prediction needs a horizon-1 checkpoint, got horizon " +
                          std::to_string(ck.config.horizon));
  }
  if (steps < 0) throw ValidationError("rolling prediction: steps must be >= 0");
  require_window(ck, window);
  if (Index(flux.size()) < steps) {
    throw ValidationError("rolling prediction: " + std::to_string(flux.size()) +
                          " flux fields for " + std::to_string(steps) + " steps");
  }
  const Index channels = ck.config.input_channels;
  if (channels > 1 && Index(lower_channels.size()) < steps) {
    throw ValidationError("rolling prediction: lower-channel frames missing for " +
                          std::to_string(steps) + " steps");
  }
  SampleInput in;
  in.window = window;
  std::vector<Field> out;
  out.reserve(std::size_t(steps));
  for (Index s = 0; s < steps; ++s) {
    in.flux = flux[std::size_t(s)];
    Field next = predict(ck.params, ck.config, in, !ck.use_pi_input);
    std::vector<Field> frame{next};
    for (Index c = 1; c < channels; ++c) {
      frame.push_back(lower_channels[std::size_t(s)].at(std::size_t(c - 1)));
    }
    in.window.erase(in.window.begin());
    in.window.push_back(std::move(frame));
    out.push_back(std::move(next));
  }
  return out;
}

Field direct_predict(const Checkpoint& ck, const std::vector<std::vector<Field>>& window,
                     const Field& flux_at_target, Index horizon) {
  if (ck.config.horizon != horizon) {
    throw ValidationError("direct prediction at horizon " + std::to_string(horizon) +
                          " needs a checkpoint trained for it, got horizon " +
                          std::to_string(ck.config.horizon));
  }
  require_window(ck, window);
  SampleInput in{window, flux_at_target};
  return predict(ck.params, ck.config, in, !ck.use_pi_input);
}

Metrics rolling_metrics(const Checkpoint& ck, const WindowedDataset& data) {
  if (data.samples.empty()) throw ValidationError("rolling evaluation: empty dataset");
  if (ck.config.horizon != 1) {
    throw ValidationError("rolling evaluation needs a horizon-1 checkpoint");
  }
  const FrameSeries& s = *data.series;
  const Index h = data.horizon;
  constexpr std::size_t kChunk = 32;
  std::vector<Metrics> per;
  for (std::size_t start = 0; start < data.samples.size(); start += kChunk) {
    const std::size_t end = std::min(data.samples.size(), start + kChunk);
    std::vector<SampleInput> inputs;
    for (std::size_t k = start; k < end; ++k) {
      SampleInput in = data.input(data.samples[k]);
      inputs.push_back(std::move(in));
    }
    for (Index step = 1; step <= h; ++step) {
      std::vector<const SampleInput*> ptrs;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        inputs[k].flux = s.flux[std::size_t(data.samples[start + k].last + step)];
        ptrs.push_back(&inputs[k]);
      }
      std::vector<Field> next = predict_batch(ck.params, ck.config, ptrs, !ck.use_pi_input);
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        const Index t = data.samples[start + k].last + step;
        std::vector<Field> frame = s.channels[std::size_t(t)];
        frame.front() = std::move(next[k]);
        inputs[k].window.erase(inputs[k].window.begin());
        inputs[k].window.push_back(std::move(frame));
      }
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      per.push_back(field_metrics(inputs[k].window.back().front(),
                                  data.target(data.samples[start + k])));
    }
  }
  return mean_metrics(per);
}

HorizonStudy horizon_study(std::shared_ptr<const FrameSeries> series,
                           std::vector<Index> horizons, const ModelConfig& base,
                           const TrainConfig& tc, Index seeds) {
  if (horizons.empty()) throw ValidationError("horizon study: no horizons");
  if (seeds < 1) throw ValidationError("horizon study: seeds must be >= 1");
  std::sort(horizons.begin(), horizons.end());
  if (std::adjacent_find(horizons.begin(), horizons.end()) != horizons.end()) {
    throw ValidationError("horizon study: duplicate horizons");
  }
  if (horizons.front() < 1) throw ValidationError("horizon study: horizons must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();

  HorizonStudy out;
  out.rolling.mode = HorizonMode::rolling;
  out.direct.mode = HorizonMode::direct;
  std::vector<DatasetSplit> splits;
  for (Index h : horizons) {
    out.rolling.points.push_back({h, {}, {}});
    out.direct.points.push_back({h, {}, {}});
    splits.push_back(split_dataset(window_dataset(series, base.window, h), tc.split));
  }

  for (Index r = 0; r < seeds; ++r) {
    TrainConfig run = tc;
    run.seed = replicate_seed(tc.seed, r);
    ModelConfig one = base;
    one.horizon = 1;
    Checkpoint rolling_model;
    try {
      const DatasetSplit split1 =
          split_dataset(window_dataset(series, base.window, 1), tc.split);
      rolling_model = train(split1.train, one, run).checkpoint;
    } catch (const Error& e) {
      throw Error(e.kind(), "horizon study: horizon 1 model: " + std::string(e.what()));
    }
    for (std::size_t k = 0; k < horizons.size(); ++k) {
      const Index h = horizons[k];
      try {
        out.rolling.points[k].per_seed.push_back(
            rolling_metrics(rolling_model, splits[k].validation));
        // The horizon-1 direct model is the rolling model: training is
        // deterministic in (data, configuration, seed).
        Checkpoint direct_model = rolling_model;
        if (h != 1) {
          ModelConfig c = base;
          c.horizon = h;
          direct_model = train(splits[k].train, c, run).checkpoint;
        }
        out.direct.points[k].per_seed.push_back(evaluate(direct_model, splits[k].validation));
      } catch (const Error& e) {
        throw Error(e.kind(), "horizon study: horizon " + std::to_string(h) + ": " + e.what());
      }
    }
  }
  for (HorizonCurve* curve : {&out.rolling, &out.direct}) {
    for (HorizonPoint& p : curve->points) p.metrics = median_metrics(p.per_seed);
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

StudyReport horizon_report(const HorizonStudy& study) {
  StudyReport report;
  report.kind = StudyKind::horizon;
  for (const HorizonCurve* curve : {&study.rolling, &study.direct}) {
    const std::string mode = curve->mode == HorizonMode::rolling ? "rolling" : "direct";
    for (const HorizonPoint& p : curve->points) {
      StudyRow row;
      row.label = mode + " i=" + std::to_string(p.horizon);
      row.metrics = p.metrics;
      row.per_seed = p.per_seed;
      row.seconds = study.seconds;
      report.rows.push_back(std::move(row));
    }
  }
  return report;
}

}  // namespace piconv
