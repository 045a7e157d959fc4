#pragma once

// JSON scenario and run-configuration files. Unknown keys are rejected;
// every key left out takes its documented default and is listed in
// `defaulted` so that manifests can record where each value came from.

#include "piconv/model.hpp"
#include "piconv/study.hpp"
#include "piconv/thermal_sim.hpp"
#include "piconv/trainer.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace piconv {

struct Scenario {
  SimScenario sim;
  PathParams path;
  /// Normalisation range written to the frame manifest.
  double t_min = 23.0;
  double t_max = 1980.0;
  std::uint64_t seed = 0;
  /// Fully resolved document (defaults filled in).
  nlohmann::ordered_json resolved;
  std::vector<std::string> defaulted;
};

/// Parses and validates (CFL bound, path fits grid, property ranges).
/// Syntax errors report the line number.
Scenario parse_scenario_text(const std::string& text, const std::string& origin = "scenario");
Scenario parse_scenario(const std::filesystem::path& path);

/// Training/study configuration:
///   {"model": {...}, "train": {...}, "study": {...}}
/// Model keys left out are derived from the data (temperature range, flux
/// normaliser) or take the defaults listed in the README.
struct RunConfig {
  nlohmann::ordered_json model_overrides = nlohmann::ordered_json::object();
  TrainConfig train;
  StudyParams study;
  nlohmann::ordered_json resolved;
  std::vector<std::string> defaulted;

  /// Model configuration for a data series with the overrides applied.
  ModelConfig model_for(const FrameSeries& series) const;
};

RunConfig parse_run_config_text(const std::string& text, const std::string& origin = "config");
RunConfig parse_run_config(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const ModelConfig& c);
nlohmann::ordered_json to_json(const MaterialModel& m);
nlohmann::ordered_json to_json(const GridSpec& g);
nlohmann::ordered_json to_json(const LaserSpec& l);

/// Parses JSON text, converting syntax errors into a ValidationError of the
/// form "<origin>: line L: ...".
nlohmann::ordered_json parse_json_text(const std::string& text, const std::string& origin);

std::string read_text_file(const std::filesystem::path& path);

}  // namespace piconv
