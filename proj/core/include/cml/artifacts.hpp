// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cml/metrics.hpp"
#include "cml/runner.hpp"

namespace cml {

enum class HeatmapFormat { Csv, Svg, All };

HeatmapFormat parse_heatmap_format(const std::string& text);

struct Rgb {
  int r = 255, g = 255, b = 255;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Diverging scale: white at 0, red for losses, green for gains, saturated at |change| >= clip.
Rgb cell_color(double change, double clip = 2.0);
std::string heatmap_svg(const ChangeMatrix& matrix, const std::string& title = "", double clip = 2.0);

/// JSON reports. Infinite ratios are written as the string "inf".
std::string experiment_report_json(const ExperimentResult& result);
std::string trajectory_report_json(const std::vector<TrajectoryResult>& results);

struct ArmRecord {
  std::string strategy;
  std::uint64_t seed = 0;
  std::string language;
  bool ok = false;
  std::string error;
  double seconds = 0.0;
};

/// Everything written by one run. Timings live here and nowhere else.
struct RunManifest {
  std::string config_hash;
  std::vector<ArmRecord> arms;
  std::vector<std::string> artifacts;  ///< paths relative to the output directory
  bool ok = true;
};

/// Creates `dir` and checks it is writable. Throws IoError otherwise.
void prepare_output_dir(const std::filesystem::path& dir);

/// Heatmaps per (strategy, seed) and seed-averaged, report.json, config.txt and
/// manifest.json under `dir`. Every file is written atomically.
RunManifest emit_artifacts(const ExperimentResult& result, const std::filesystem::path& dir,
                           HeatmapFormat format = HeatmapFormat::All);
RunManifest emit_trajectory_artifacts(const ExperimentConfig& cfg, const std::vector<TrajectoryResult>& results,
                                      const std::filesystem::path& dir);
/// Corpora, syntactic vectors, distances and benchmark.json for one seed.
std::vector<std::string> emit_benchmark(const ExperimentConfig& cfg, const Benchmark& bench, std::uint64_t seed,
                                        const std::filesystem::path& dir);

std::string manifest_json(const RunManifest& manifest);

}  // namespace cml
