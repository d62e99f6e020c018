// SPDX-License-Identifier: Apache-2.0
#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <json.hpp>

#include "cml/artifacts.hpp"
#include "cml/config.hpp"
#include "cml/errors.hpp"
#include "cml/runner.hpp"
#include "cml/serialize.hpp"

namespace {

struct Common {
  std::string config;
  std::string seeds;
  std::string out;
  std::string strategy;
};

cml::ExperimentConfig resolve(const Common& c) {
  cml::ExperimentConfig cfg = c.config.empty() ? cml::ExperimentConfig{} : cml::load_experiment_config(c.config);
  if (!c.seeds.empty()) cfg.seeds = cml::parse_seed_list(c.seeds);
  if (!c.out.empty()) cfg.out = c.out;
  if (!c.strategy.empty()) cfg.strategies = {cml::parse_strategy(c.strategy)};
  cfg.validate();
  return cfg;
}

void add_common(CLI::App* app, Common& c, bool with_strategy) {
  app->add_option("--config", c.config, "experiment config file")->check(CLI::ExistingFile);
  app->add_option("--seed", c.seeds, "comma-separated seeds, overrides the config");
  app->add_option("--out", c.out, "output directory, overrides the config");
  if (with_strategy) app->add_option("--strategy", c.strategy, "fft, sft, laft or laft-uriel");
}

std::string show(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v.get<double>());
  return buf;
}

int report(const std::string& dir) {
  const std::filesystem::path root(dir);
  if (std::filesystem::exists(root / "report.json")) {
    const auto j = nlohmann::json::parse(cml::read_file(root / "report.json"));
    std::printf("%-12s %10s %10s %10s %10s %10s\n", "strategy", "avgloss", "improved", "sumratio", "maxratio",
                "closest");
    for (const auto& s : j["strategies"]) {
      if (!s.contains("mean")) {
        std::printf("%-12s (incomplete)\n", s["strategy"].get<std::string>().c_str());
        continue;
      }
      const auto& m = s["mean"];
      std::printf("%-12s %10s %10s %10s %10s %10s\n", s["strategy"].get<std::string>().c_str(),
                  show(m["avg_percent_loss"]).c_str(), show(m["num_improved_langs"]).c_str(),
                  show(m["sum_ratio"]).c_str(), show(m["max_ratio"]).c_str(),
                  s.contains("closest_language") ? show(s["closest_language"]).c_str() : "-");
    }
    return 0;
  }
  if (std::filesystem::exists(root / "trajectory.json")) {
    const auto j = nlohmann::json::parse(cml::read_file(root / "trajectory.json"));
    for (const auto& s : j) {
      std::printf("%s  order:", s["strategy"].get<std::string>().c_str());
      for (const auto& l : s["order"]) std::printf(" %s", l.get<std::string>().c_str());
      std::printf("\n");
      for (const auto& seed : s["seeds"]) {
        std::printf("  seed %llu  worst stage %llu  avgloss %.4f\n",
                    static_cast<unsigned long long>(seed["seed"].get<std::uint64_t>()),
                    static_cast<unsigned long long>(seed["worst_stage"].get<std::uint64_t>()),
                    seed["worst_avg_percent_loss"].get<double>());
      }
      std::printf("  mean worst-stage avgloss %.4f\n", s["mean_worst_avg_percent_loss"].get<double>());
    }
    return 0;
  }
  throw cml::IoError("no report.json or trajectory.json in " + dir);
}

int heatmap(const std::string& dir, cml::HeatmapFormat format) {
  int n = 0;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
    if (e.path().extension() != ".csv" || e.path().filename().string().rfind("heatmap", 0) != 0) continue;
    const auto m = cml::heatmap_from_csv(cml::read_file(e.path()));
    auto stem = e.path();
    stem.replace_extension();
    if (format != cml::HeatmapFormat::Csv) {
      cml::write_file_atomic(stem.string() + ".svg", cml::heatmap_svg(m, e.path().stem().string()));
    }
    if (format != cml::HeatmapFormat::Svg) cml::write_file_atomic(e.path(), cml::heatmap_to_csv(m));
    std::cout << stem.string() << "\n";
    ++n;
  }
  if (n == 0) throw cml::IoError("no heatmap CSV files under " + dir);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual multilingual learning experiments on synthetic languages"};
  app.require_subcommand(1);

  Common gen, run, traj;
  std::string format = "all", order, report_dir, heatmap_dir;

  auto* gen_cmd = app.add_subcommand("gen-data", "write the synthetic benchmark (corpora, vectors, distances)");
  add_common(gen_cmd, gen, false);
  auto* run_cmd = app.add_subcommand("run", "inception plus one continuation arm per language");
  add_common(run_cmd, run, true);
  run_cmd->add_option("--format", format, "heatmap format: csv, svg or all");
  auto* traj_cmd = app.add_subcommand("trajectory", "sequential continuation over every language");
  add_common(traj_cmd, traj, true);
  traj_cmd->add_option("--order", order, "h2l or l2h, overrides the config");
  auto* report_cmd = app.add_subcommand("report", "print the summary of a finished run");
  report_cmd->add_option("--out", report_dir, "run directory")->required();
  auto* heatmap_cmd = app.add_subcommand("heatmap", "render heatmap CSV files of a run directory");
  heatmap_cmd->add_option("--out", heatmap_dir, "run directory")->required();
  heatmap_cmd->add_option("--format", format, "csv, svg or all");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*gen_cmd) {
      const auto cfg = resolve(gen);
      for (auto seed : cfg.seeds) {
        const auto dir = cfg.out / ("seed" + std::to_string(seed));
        const auto files = cml::emit_benchmark(cfg, cml::build_benchmark(cfg, seed), seed, dir);
        std::cout << dir.string() << ": " << files.size() << " files\n";
      }
      return 0;
    }
    if (*run_cmd) {
      const auto cfg = resolve(run);
      const auto fmt = cml::parse_heatmap_format(format);
      cml::prepare_output_dir(cfg.out);
      const auto result = cml::run_experiment(cfg);
      const auto manifest = cml::emit_artifacts(result, cfg.out, fmt);
      report(cfg.out.string());
      return manifest.ok ? 0 : 1;
    }
    if (*traj_cmd) {
      auto cfg = resolve(traj);
      if (!order.empty()) cfg.order = cml::parse_trajectory_order(order);
      cml::prepare_output_dir(cfg.out);
      const auto results = cml::run_trajectory(cfg);
      cml::emit_trajectory_artifacts(cfg, results, cfg.out);
      return report(cfg.out.string());
    }
    if (*report_cmd) return report(report_dir);
    if (*heatmap_cmd) return heatmap(heatmap_dir, cml::parse_heatmap_format(format));
  } catch (const cml::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
