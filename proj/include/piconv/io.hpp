#pragma once

// Frame CSV files, frame-set manifests and run manifests.
//
// A frame set is a directory (or manifest file) listing per-frame CSV files:
// comma-separated, row-major, no header, values in C. Simulator output also
// carries per-frame laser flux (W/m^2) and activity masks (0/1).

#include "piconv/config.hpp"
#include "piconv/dataset.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>
#include <vector>

namespace piconv {

/// 9 significant digits.
std::string format_field_csv(const Field& f);
std::string format_mask_csv(const Mask& m);
Field parse_field_csv(const std::string& text, const std::string& origin);
Field read_field_csv(const std::filesystem::path& path);
Mask read_mask_csv(const std::filesystem::path& path);

void write_text_file(const std::filesystem::path& path, const std::string& text);

/// Writes frames/, flux/, mask/ and manifest.json under `dir`; returns the
/// artifact paths relative to `dir`.
std::vector<std::string> write_frame_set(const std::filesystem::path& dir,
                                         const SimulationResult& sim,
                                         const Scenario& scenario);

/// Block-mean downsampling by an integer factor (trailing partial blocks
/// are dropped).
Field downsample(const Field& f, Index factor);

/// Loads a frame set: a directory holding manifest.json, a manifest file, or
/// a bare directory of CSV frames (lexicographic order). Frame sets without
/// flux or masks get zero flux and all-active masks; missing physics keys
/// take the default material and grid.
FrameSeries load_frame_set(const std::filesystem::path& path);

/// Lower-case hex SHA-256 of a byte string or file.
std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::filesystem::path& path);

/// Record written next to every command's outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<std::string> defaulted;
  /// Input files and their hashes.
  std::vector<std::pair<std::string, std::string>> inputs;
  /// Artifacts relative to the output directory, with hashes.
  std::vector<std::pair<std::string, std::string>> artifacts;
  /// JSON fields holding wall-clock measurements, excluded from
  /// reproducibility comparisons.
  std::vector<std::string> volatile_fields;

  void add_input(const std::filesystem::path& p);
  /// Hashes every artifact under `out_dir`.
  void add_artifacts(const std::filesystem::path& out_dir,
                     const std::vector<std::string>& relative_paths);
  std::string to_json() const;
};

/// Writes run_manifest.json into out_dir.
void write_run_manifest(const std::filesystem::path& out_dir, const RunManifest& m);

}  // namespace piconv
