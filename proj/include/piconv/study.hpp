#pragma once

// Experiment harnesses: window-size sweep, four-way ablation and training
// data-size sweep. Each grid point is trained from scratch for every seed
// replicate and evaluated on the chronological validation split.

#include "piconv/trainer.hpp"

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

namespace piconv {

enum class StudyKind { window, ablation, datasize, horizon };

std::string to_string(StudyKind kind);
StudyKind study_kind_from_string(const std::string& name);

struct StudyRow {
  std::string label;
  /// Component-wise median over seed replicates.
  Metrics metrics;
  /// Training plus evaluation wall-clock over all replicates.
  double seconds = 0.0;
  std::vector<Metrics> per_seed;
};

struct StudyReport {
  StudyKind kind = StudyKind::window;
  std::vector<StudyRow> rows;
};

struct StudyParams {
  std::vector<Index> windows{1, 2, 3, 4, 5, 6};
  std::vector<Index> sizes{200, 800, 1600};
  std::vector<Index> horizons{1, 10};
  /// Ablation rows to run, by label; empty runs all four.
  std::vector<std::string> ablation_rows;
  /// Seed replicates; replicate r trains with seed (base seed xor r).
  Index seeds = 3;
};

/// Seed of replicate r.
std::uint64_t replicate_seed(std::uint64_t base, Index r);

/// Median of each metric component.
Metrics median_metrics(std::vector<Metrics> values);

/// Ablation row labels in report order.
const std::vector<std::string>& ablation_labels();

/// Runs a window, ablation or data-size study. `base` supplies everything
/// except the swept quantity; window sweeps override base.window.
StudyReport run_study(StudyKind kind, std::shared_ptr<const FrameSeries> series,
                      const ModelConfig& base, const TrainConfig& tc,
                      const StudyParams& params);

/// Report as JSON records (label, mse, mae, mape, seconds).
std::string report_json(const StudyReport& report);
std::string report_csv(const StudyReport& report);

/// Loss history as CSV: epoch, l_data, l_pde, l_bc, l_ic, l_total.
std::string history_csv(const std::vector<EpochRecord>& history);

}  // namespace piconv
