// SPDX-License-Identifier: Apache-2.0
#include "cml/artifacts.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <json.hpp>

#include "cml/errors.hpp"
#include "cml/param_store.hpp"
#include "cml/serialize.hpp"

namespace cml {

using nlohmann::json;

namespace {

json number(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  return x;
}

json metrics_json(const RowMetrics& m) {
  return {{"avg_percent_loss", number(m.avg_percent_loss)},
          {"num_improved_langs", number(m.num_improved_langs)},
          {"sum_ratio", number(m.sum_ratio)},
          {"max_ratio", number(m.max_ratio)}};
}

json matrix_json(const ChangeMatrix& m) {
  json rows = json::array();
  for (const auto& r : m.values) rows.push_back(r);
  return {{"languages", m.languages}, {"values", rows}};
}

void write(const std::filesystem::path& dir, const std::string& rel, const std::string& contents,
           RunManifest& manifest) {
  write_file_atomic(dir / rel, contents);
  manifest.artifacts.push_back(rel);
}

void write_heatmap(const std::filesystem::path& dir, const std::string& stem, const ChangeMatrix& m,
                   const std::string& title, HeatmapFormat format, RunManifest& manifest) {
  if (format != HeatmapFormat::Svg) write(dir, stem + ".csv", heatmap_to_csv(m), manifest);
  if (format != HeatmapFormat::Csv) write(dir, stem + ".svg", heatmap_svg(m, title), manifest);
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

HeatmapFormat parse_heatmap_format(const std::string& text) {
  if (text == "csv") return HeatmapFormat::Csv;
  if (text == "svg") return HeatmapFormat::Svg;
  if (text == "all") return HeatmapFormat::All;
  throw ConfigError("unknown format '" + text + "' (expected csv, svg or all)");
}

Rgb cell_color(double change, double clip) {
  if (!std::isfinite(change)) throw NumericFault("cannot color a non-finite change");
  const double a = std::min(std::abs(change), clip) / clip;
  const int fade = static_cast<int>(std::lround(255.0 * (1.0 - a)));
  if (change < 0.0) return {255, fade, fade};
  if (change > 0.0) return {fade, static_cast<int>(std::lround(255.0 - 95.0 * a)), fade};
  return {};
}

std::string heatmap_svg(const ChangeMatrix& matrix, const std::string& title, double clip) {
  matrix.validate();
  const int cell = 56, margin = 64, top = title.empty() ? 40 : 64;
  const int n = static_cast<int>(matrix.size());
  const int width = margin + n * cell + 16, height = top + n * cell + 16;
  std::string out;
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%d\" height=\"%d\" font-family=\"sans-serif\" "
                "font-size=\"12\">\n",
                width, height);
  out += buf;
  if (!title.empty()) {
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"20\" font-size=\"14\">", margin);
    out += buf + xml_escape(title) + "</text>\n";
  }
  for (int j = 0; j < n; ++j) {
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">", margin + j * cell + cell / 2,
                  top - 8);
    out += buf + xml_escape(matrix.languages[static_cast<std::size_t>(j)]) + "</text>\n";
  }
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"end\">", margin - 8,
                  top + i * cell + cell / 2 + 4);
    out += buf + xml_escape(matrix.languages[static_cast<std::size_t>(i)]) + "</text>\n";
    for (int j = 0; j < n; ++j) {
      const double v = matrix.values[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      const Rgb c = cell_color(v, clip);
      std::snprintf(buf, sizeof buf,
                    "<rect x=\"%d\" y=\"%d\" width=\"%d\" height=\"%d\" fill=\"rgb(%d,%d,%d)\" stroke=\"#999\"/>\n",
                    margin + j * cell, top + i * cell, cell, cell, c.r, c.g, c.b);
      out += buf;
      std::snprintf(buf, sizeof buf, "<text x=\"%d\" y=\"%d\" text-anchor=\"middle\">%.2f</text>\n",
                    margin + j * cell + cell / 2, top + i * cell + cell / 2 + 4, v == 0.0 ? 0.0 : v);
      out += buf;
    }
  }
  out += "</svg>\n";
  return out;
}

std::string experiment_report_json(const ExperimentResult& result) {
  json j;
  j["config_hash"] = fingerprint_hex(config_hash(result.config));
  j["languages"] = result.distances.languages();
  json strategies = json::array();
  for (const auto& sr : result.strategies) {
    json s;
    s["strategy"] = to_string(sr.kind);
    s["ok"] = sr.ok();
    json seeds = json::array();
    for (const auto& seed : sr.seeds) {
      json sj;
      sj["seed"] = seed.seed;
      sj["before"] = seed.before;
      if (seed.matrix) sj["change_matrix"] = matrix_json(*seed.matrix);
      if (seed.report) {
        json rows = json::object();
        for (std::size_t i = 0; i < seed.report->rows.size(); ++i) {
          rows[seed.report->row_labels[i]] = metrics_json(seed.report->rows[i]);
        }
        sj["rows"] = rows;
        sj["mean"] = metrics_json(seed.report->mean);
      }
      if (seed.closest_language) sj["closest_language"] = *seed.closest_language;
      seeds.push_back(sj);
    }
    s["seeds"] = seeds;
    s["seeds_aggregated"] = sr.mean ? seeds.size() : 0;
    if (sr.mean) s["mean"] = metrics_json(*sr.mean);
    if (sr.mean_matrix) s["mean_change_matrix"] = matrix_json(*sr.mean_matrix);
    if (sr.closest_language) s["closest_language"] = *sr.closest_language;
    strategies.push_back(s);
  }
  j["strategies"] = strategies;
  return j.dump(2) + "\n";
}

std::string trajectory_report_json(const std::vector<TrajectoryResult>& results) {
  json out = json::array();
  for (const auto& r : results) {
    json s;
    s["strategy"] = to_string(r.kind);
    s["order"] = r.order;
    s["languages"] = r.languages;
    json seeds = json::array();
    for (const auto& seed : r.seeds) {
      json stages = json::array();
      for (const auto& st : seed.stages) {
        stages.push_back({{"language", st.language}, {"changes", st.changes}, {"metrics", metrics_json(st.metrics)}});
      }
      seeds.push_back({{"seed", seed.seed},
                       {"stages", stages},
                       {"worst_stage", seed.worst_stage},
                       {"worst_avg_percent_loss", seed.worst_loss}});
    }
    s["seeds"] = seeds;
    s["mean_worst_avg_percent_loss"] = r.mean_worst_loss;
    out.push_back(s);
  }
  return out.dump(2) + "\n";
}

std::string manifest_json(const RunManifest& manifest) {
  json arms = json::array();
  for (const auto& a : manifest.arms) {
    json aj{{"strategy", a.strategy}, {"seed", a.seed}, {"language", a.language}, {"status", a.ok ? "ok" : "failed"},
            {"seconds", a.seconds}};
    if (!a.ok) aj["error"] = a.error;
    arms.push_back(aj);
  }
  json j{{"config_hash", manifest.config_hash},
         {"status", manifest.ok ? "ok" : "failed"},
         {"arms", arms},
         {"artifacts", manifest.artifacts}};
  return j.dump(2) + "\n";
}

void prepare_output_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  const auto probe = dir / ".write-probe";
  {
    std::ofstream f(probe);
    if (!f) throw IoError("output directory " + dir.string() + " is not writable");
  }
  std::filesystem::remove(probe, ec);
}

RunManifest emit_artifacts(const ExperimentResult& result, const std::filesystem::path& dir, HeatmapFormat format) {
  prepare_output_dir(dir);
  RunManifest manifest;
  manifest.config_hash = fingerprint_hex(config_hash(result.config));
  manifest.ok = result.ok();
  write(dir, "config.txt", experiment_config_to_text(result.config), manifest);
  for (const auto& sr : result.strategies) {
    const std::string name = to_string(sr.kind);
    std::filesystem::create_directories(dir / name);
    for (const auto& seed : sr.seeds) {
      for (const auto& a : seed.arms) manifest.arms.push_back({name, seed.seed, a.language, a.ok, a.error, a.seconds});
      if (seed.matrix) {
        write_heatmap(dir, name + "/heatmap_seed" + std::to_string(seed.seed), *seed.matrix,
                      name + " seed " + std::to_string(seed.seed), format, manifest);
      }
    }
    if (sr.mean_matrix) write_heatmap(dir, name + "/heatmap_mean", *sr.mean_matrix, name + " mean", format, manifest);
  }
  write(dir, "report.json", experiment_report_json(result), manifest);
  write_file_atomic(dir / "manifest.json", manifest_json(manifest));
  return manifest;
}

RunManifest emit_trajectory_artifacts(const ExperimentConfig& cfg, const std::vector<TrajectoryResult>& results,
                                      const std::filesystem::path& dir) {
  prepare_output_dir(dir);
  RunManifest manifest;
  manifest.config_hash = fingerprint_hex(config_hash(cfg));
  write(dir, "config.txt", experiment_config_to_text(cfg), manifest);
  write(dir, "trajectory.json", trajectory_report_json(results), manifest);
  write_file_atomic(dir / "manifest.json", manifest_json(manifest));
  return manifest;
}

std::vector<std::string> emit_benchmark(const ExperimentConfig& cfg, const Benchmark& bench, std::uint64_t seed,
                                        const std::filesystem::path& dir) {
  prepare_output_dir(dir);
  RunManifest m;
  std::vector<SyntacticVector> vecs;
  json profiles = json::array();
  for (const auto& p : bench.languages.profiles) {
    vecs.push_back(p.syntactic_vector());
    json shards = json::array();
    for (const auto& s : bench.partitions.at(p.id).shards) shards.push_back(s);
    profiles.push_back({{"id", p.id},
                        {"family", p.family},
                        {"syntax", p.syntax},
                        {"reverse", p.reverse},
                        {"adjacent_swap", p.adjacent_swap},
                        {"rotate", p.rotate},
                        {"resource_count", p.resource_count},
                        {"shards", shards}});
    write(dir, "train_" + p.id + ".tsv", corpus_to_text(bench.train.at(p.id)), m);
    write(dir, "test_" + p.id + ".tsv", corpus_to_text(bench.test.at(p.id)), m);
  }
  write(dir, "syntax.csv", vectors_to_csv(vecs), m);
  write(dir, "distances.csv", distance_to_csv(bench.languages.distances), m);
  json j{{"config_hash", fingerprint_hex(config_hash(cfg))},
         {"seed", seed},
         {"task", to_string(bench.task)},
         {"vocab_size", bench.languages.vocab_size},
         {"profiles", profiles}};
  write(dir, "benchmark.json", j.dump(2) + "\n", m);
  return m.artifacts;
}

}  // namespace cml
