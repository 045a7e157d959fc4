#include "piconv/study.hpp"

#include "piconv/error.hpp"
#include "piconv/forecast.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <sstream>

namespace piconv {

std::string to_string(StudyKind kind) {
  switch (kind) {
    case StudyKind::window: return "window";
    case StudyKind::ablation: return "ablation";
    case StudyKind::datasize: return "datasize";
    case StudyKind::horizon: return "horizon";
  }
  return "?";
}

StudyKind study_kind_from_string(const std::string& name) {
  for (StudyKind k : {StudyKind::window, StudyKind::ablation, StudyKind::datasize,
                      StudyKind::horizon}) {
    if (to_string(k) == name) return k;
  }
  throw ValidationError("unknown study kind '" + name +
                        "' (expected window, ablation, datasize or horizon)");
}

std::uint64_t replicate_seed(std::uint64_t base, Index r) {
  return base ^ std::uint64_t(r);
}

Metrics median_metrics(std::vector<Metrics> values) {
  if (values.empty()) throw ValidationError("median of no metrics");
  auto median = [&](auto member) {
    std::vector<double> v;
    for (const Metrics& m : values) v.push_back(m.*member);
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  };
  return {median(&Metrics::mse), median(&Metrics::mae), median(&Metrics::mape)};
}

const std::vector<std::string>& ablation_labels() {
  static const std::vector<std::string> labels{"ML Only", "PI input", "PI loss",
                                               "PI input + PI loss"};
  return labels;
}

namespace {

using Clock = std::chrono::steady_clock;

StudyRow run_point(const std::string& label, std::shared_ptr<const FrameSeries> series,
                   const ModelConfig& config, const TrainConfig& tc, Index seeds) {
  if (seeds < 1) throw ValidationError("study: seeds must be >= 1");
  StudyRow row;
  row.label = label;
  const auto t0 = Clock::now();
  try {
    const DatasetSplit split =
        split_dataset(window_dataset(series, config.window, config.horizon), tc.split);
    for (Index r = 0; r < seeds; ++r) {
      TrainConfig run = tc;
      run.seed = replicate_seed(tc.seed, r);
      const TrainResult result = train(split.train, config, run);
      row.per_seed.push_back(evaluate(result.checkpoint, split.validation));
    }
  } catch (const Error& e) {
    throw Error(e.kind(), "study point '" + label + "': " + e.what());
  }
  row.seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  row.metrics = median_metrics(row.per_seed);
  return row;
}

}  // namespace

StudyReport run_study(StudyKind kind, std::shared_ptr<const FrameSeries> series,
                      const ModelConfig& base, const TrainConfig& tc,
                      const StudyParams& params) {
  StudyReport report;
  report.kind = kind;
  switch (kind) {
    case StudyKind::window: {
      if (params.windows.empty()) throw ValidationError("study: empty window grid");
      for (Index w : params.windows) {
        ModelConfig c = base;
        c.window = w;
        report.rows.push_back(run_point("w=" + std::to_string(w), series, c, tc, params.seeds));
      }
      break;
    }
    case StudyKind::ablation: {
      const auto& labels = ablation_labels();
      const bool flags[4][2] = {{false, false}, {false, true}, {true, false}, {true, true}};
      const auto& wanted = params.ablation_rows;
      for (const std::string& w : wanted) {
        if (std::find(labels.begin(), labels.end(), w) == labels.end()) {
          throw ValidationError("study: unknown ablation row '" + w + "'");
        }
      }
      for (std::size_t k = 0; k < 4; ++k) {
        if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), labels[k]) == wanted.end()) {
          continue;
        }
        TrainConfig run = tc;
        run.use_pi_loss = flags[k][0];
        run.use_pi_input = flags[k][1];
        report.rows.push_back(run_point(labels[k], series, base, run, params.seeds));
      }
      break;
    }
    case StudyKind::datasize: {
      if (params.sizes.empty()) throw ValidationError("study: empty data-size grid");
      std::vector<Index> sizes = params.sizes;
      std::sort(sizes.begin(), sizes.end());
      for (Index n : sizes) {
        if (n < 1) throw ValidationError("study: data sizes must be >= 1");
        TrainConfig run = tc;
        run.max_train_samples = n;
        report.rows.push_back(run_point("n=" + std::to_string(n), series, base, run, params.seeds));
      }
      break;
    }
    case StudyKind::horizon: {
      const HorizonStudy hs = horizon_study(series, params.horizons, base, tc, params.seeds);
      report = horizon_report(hs);
      break;
    }
  }
  return report;
}

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::string report_json(const StudyReport& report) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(report.kind);
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const StudyRow& r : report.rows) {
    nlohmann::ordered_json row;
    row["label"] = r.label;
    row["mse"] = r.metrics.mse;
    row["mae"] = r.metrics.mae;
    row["mape"] = r.metrics.mape;
    row["seconds"] = r.seconds;
    nlohmann::ordered_json seeds = nlohmann::ordered_json::array();
    for (const Metrics& m : r.per_seed) {
      seeds.push_back({{"mse", m.mse}, {"mae", m.mae}, {"mape", m.mape}});
    }
    row["per_seed"] = seeds;
    rows.push_back(row);
  }
  j["rows"] = rows;
  return j.dump(2) + "\n";
}

std::string report_csv(const StudyReport& report) {
  std::ostringstream os;
  os << "label,mse,mae,mape,seconds\n";
  for (const StudyRow& r : report.rows) {
    os << '"' << r.label << "\"," << fmt(r.metrics.mse) << ',' << fmt(r.metrics.mae)
       << ',' << fmt(r.metrics.mape) << ',' << fmt(r.seconds) << '\n';
  }
  return os.str();
}

std::string history_csv(const std::vector<EpochRecord>& history) {
  std::ostringstream os;
  os << "epoch,l_data,l_pde,l_bc,l_ic,l_total\n";
  for (const EpochRecord& e : history) {
    os << e.epoch << ',' << fmt(e.loss.l_data) << ',' << fmt(e.loss.l_pde) << ','
       << fmt(e.loss.l_bc) << ',' << fmt(e.loss.l_ic) << ',' << fmt(e.loss.l_total)
       << '\n';
  }
  return os.str();
}

}  // namespace piconv
