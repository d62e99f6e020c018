// SPDX-License-Identifier: Apache-2.0
// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <sstream>

#include "cml/artifacts.hpp"
#include "cml/errors.hpp"
#include "cml/gradcheck.hpp"
#include "cml/log.hpp"
#include "cml/metrics.hpp"
#include "cml/runner.hpp"
#include "cml/serialize.hpp"
#include "cml/sparse_update.hpp"
#include "cml/strategies.hpp"
#include "cml/uriel.hpp"
#include "metric_oracles.hpp"

using namespace cml;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

const fs::path kFixtures = CML_FIXTURE_DIR;
const fs::path kConfigs = CML_CONFIG_DIR;

ExperimentConfig reference_config() { return load_experiment_config(kConfigs / "reference.cfg"); }

/// Default model dimensions with the vocabulary and label counts of the reference benchmark.
ModelConfig default_model(const Benchmark& bench) {
  ExperimentConfig cfg;
  cfg.model = ModelConfig{};
  cfg.model.max_seq_len = 32;
  return resolve_model_config(cfg, bench.languages);
}

std::vector<const Example*> pick(const std::vector<Example>& xs, std::size_t n, Rng& rng) {
  std::vector<const Example*> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(&xs[rng.below(xs.size())]);
  return out;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness(const Benchmark& bench) {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  Rng rng(11);
  auto random_store = [&](const std::vector<std::pair<std::string, Shape>>& specs) {
    NamedParamStore s;
    for (const auto& [name, shape] : specs) {
      Tensor t(shape);
      for (double& x : t.values()) x = rng.uniform(-1.0, 1.0);
      s.add(name, t, ParamGroup::base());
    }
    return s;
  };
  auto weighted = [](Tape& t, Var x) {
    Tensor w(x.shape());
    for (std::size_t i = 0; i < w.numel(); ++i) w[i] = std::cos(0.3 + 1.1 * static_cast<double>(i));
    return ops::sum(ops::mul(x, t.constant(w)));
  };
  auto all_coords = [](const NamedParamStore& s) {
    std::vector<Coordinate> c;
    for (const auto& [n, e] : s.entries()) {
      for (std::size_t i = 0; i < e.value.numel(); ++i) c.push_back({n, i});
    }
    return c;
  };
  std::vector<std::pair<NamedParamStore, LossFn>> prims;
  prims.emplace_back(random_store({{"a", {2, 3, 4}}, {"b", {4, 3}}}),
                     [&](Tape& t, const NamedParamStore& p) { return weighted(t, ops::matmul(t.param(p, "a"), t.param(p, "b"))); });
  prims.emplace_back(random_store({{"x", {3, 4}}, {"y", {3, 4}}, {"b", {4}}}), [&](Tape& t, const NamedParamStore& p) {
    return weighted(t, ops::scale(ops::mul(ops::add(t.param(p, "x"), t.param(p, "b")), t.param(p, "y")), 0.7));
  });
  prims.emplace_back(random_store({{"x", {3, 5}}}),
                     [&](Tape& t, const NamedParamStore& p) { return weighted(t, ops::gelu(t.param(p, "x"))); });
  prims.emplace_back(random_store({{"x", {3, 5}}}),
                     [&](Tape& t, const NamedParamStore& p) { return weighted(t, ops::softmax(t.param(p, "x"))); });
  prims.emplace_back(random_store({{"x", {4, 6}}, {"g", {6}}, {"b", {6}}}), [&](Tape& t, const NamedParamStore& p) {
    return weighted(t, ops::layer_norm(t.param(p, "x"), t.param(p, "g"), t.param(p, "b")));
  });
  prims.emplace_back(random_store({{"e", {6, 3}}}), [&](Tape& t, const NamedParamStore& p) {
    return weighted(t, ops::embedding(t.param(p, "e"), {1, 4, 4, 0}));
  });
  prims.emplace_back(random_store({{"q", {7, 4}}, {"k", {7, 4}}, {"v", {7, 4}}}), [&](Tape& t, const NamedParamStore& p) {
    return weighted(t, ops::attention(t.param(p, "q"), t.param(p, "k"), t.param(p, "v"), {0, 3, 7}, 2));
  });
  prims.emplace_back(random_store({{"x", {5, 3}}}), [&](Tape& t, const NamedParamStore& p) {
    return ops::mean(weighted(t, ops::reshape(ops::segment_mean(t.param(p, "x"), {0, 2, 5}), {3, 2})));
  });
  prims.emplace_back(random_store({{"x", {2, 3, 4}}}), [&](Tape& t, const NamedParamStore& p) {
    return ops::cross_entropy(t.param(p, "x"), {0, -1, 3, 2, 1, -1});
  });
  for (const auto& [store, fn] : prims) {
    const auto rep = finite_difference_check(store, fn, all_coords(store));
    worst = std::max(worst, rep.max_rel_err());
    checked += rep.entries.size();
  }

  // Full default model with an active adapter; up-projections are perturbed
  // so that the adapter gradients are not identically zero.
  Model m = build_model(default_model(bench), 3);
  insert_adapters(m, {"a0"}, 4);
  for (const auto& name : m.params().names(filters::adapters_of("a0"))) {
    if (name.find(".up.") == std::string::npos) continue;
    for (double& x : m.params().mutable_value(name).values()) x = rng.uniform(-0.1, 0.1);
  }
  const auto batch = pick(bench.train.at("a0"), 3, rng);
  const LossFn model_loss = [&](Tape& t, const NamedParamStore& p) {
    const Model view(m.config(), p);
    Var tag = task_loss(t, view, TaskKind::TokenTag, batch, std::string("a0"));
    Batch b = make_batch(batch);
    std::vector<int> cls;
    for (const auto* ex : batch) cls.push_back(ex->labels.front() % static_cast<int>(m.config().n_classes));
    Var c = ops::cross_entropy(view.forward(t, HeadKind::SentenceClass, b, std::string("a0")), cls);
    std::vector<int> mlm;
    for (int tok : b.tokens) mlm.push_back(tok);
    Var l = ops::cross_entropy(view.forward(t, HeadKind::MaskedToken, b, std::string("a0")), mlm);
    return ops::add(ops::add(tag, c), l);
  };
  const auto coords = sample_coordinates(m.params(), 32, rng);
  const auto rep = finite_difference_check(m.params(), model_loss, coords);
  const double model_worst = rep.max_rel_err();
  checked += rep.entries.size();
  worst = std::max(worst, model_worst);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 1e-4 && secs <= 60.0,
          "max rel err " + fmt("%.2e", worst) + " over " + std::to_string(checked) + " coordinates (model " +
              fmt("%.2e", model_worst) + "), " + fmt("%.1f", secs) + " s"};
}

Outcome adapter_identity(const Benchmark& bench) {
  Model plain = build_model(default_model(bench), 5);
  Model with = plain;
  insert_adapters(with, bench.languages.language_ids(), 6);
  Rng rng(7);
  double worst = 0.0;
  const auto langs = bench.languages.language_ids();
  for (int i = 0; i < 100; ++i) {
    const std::string lang = langs[rng.below(langs.size())];
    const Batch b = make_batch(pick(bench.train.at(lang), 1 + rng.below(8), rng));
    for (const auto head : {HeadKind::TokenTag, HeadKind::SentenceClass, HeadKind::MaskedToken}) {
      const Tensor a = plain.logits(head, b);
      const Tensor c = with.logits(head, b, lang);
      for (std::size_t k = 0; k < a.numel(); ++k) worst = std::max(worst, std::abs(a[k] - c[k]));
    }
  }
  return {worst <= 1e-12, "max |logit change| " + fmt("%.2e", worst) + " over 100 batches x 3 heads"};
}

Outcome division_factors() {
  std::istringstream is(read_file(kFixtures / "division_factors.csv"));
  std::string line;
  std::getline(is, line);
  std::size_t ok = 0, n = 0;
  std::string detail;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::stringstream ss(line);
    std::string lang, d, f;
    std::getline(ss, lang, ',');
    std::getline(ss, d, ',');
    std::getline(ss, f, ',');
    const double got = division_factor(std::stod(d));
    ++n;
    ok += got == std::stod(f);
    detail += lang + ":" + fmt("%g", got) + " ";
  }
  return {n == 6 && ok == 6, detail + "(" + std::to_string(ok) + "/6 exact)"};
}

Outcome metric_oracles() {
  Rng rng(2024);
  std::size_t mismatches = 0, infinite = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng.below(8);
    const auto row = oracle::random_row(rng, n);
    const auto other = oracle::random_row(rng, n);
    mismatches += !same_bits(avg_percent_loss(row), oracle::avg_loss(row));
    mismatches += num_improved_langs(row) != oracle::improved(row);
    const auto r = gain_loss_ratios(row);
    const auto [s, m] = oracle::ratios(row);
    mismatches += !same_bits(r.sum_ratio, s) || !same_bits(r.max_ratio, m);
    infinite += std::isinf(s);
    mismatches += worst_case_stage(row) != oracle::worst_stage(row);
    std::map<std::string, double> ra, rb;
    for (std::size_t i = 0; i < n; ++i) {
      const std::string id(1, static_cast<char>('a' + i));
      ra[id] = row[i];
      rb[id] = other[i];
    }
    mismatches += ordering_edit_distance(ra, rb) != oracle::edit_distance(oracle::ordering(ra), oracle::ordering(rb));
  }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 rows (" + std::to_string(infinite) +
                               " with infinite ratios)"};
}

Outcome sparse_algebra(const ExperimentConfig& ref, const Benchmark& bench) {
  std::string detail;
  bool ok = true;
  Rng rng(99);

  // apply/revert on real model parameters
  Model m = build_model(resolve_model_config(ref, bench.languages), 1);
  const Snapshot s0(m.params());
  const auto names = m.params().names();
  std::size_t involution_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SparseEntry> es;
    std::set<std::pair<std::string, std::size_t>> used;
    for (int k = 0; k < 50; ++k) {
      const auto& name = names[rng.below(names.size())];
      const std::size_t idx = rng.below(m.params().value(name).numel());
      if (used.insert({name, idx}).second) es.push_back({name, idx, rng.uniform(-1e-2, 1e-2)});
    }
    const SparseUpdate u(fingerprint(m.params()), UpdateScope::Full, es);
    const auto applied = apply_sparse_update(m.params(), u);
    revert_sparse_update(m.params(), applied);
    involution_failures += changed_coordinates(m.params(), s0) != 0;
  }
  ok &= involution_failures == 0;
  detail += "involution failures " + std::to_string(involution_failures) + "/100; ";

  // composition vs sequential application on a dyadic grid, where every sum is exact
  NamedParamStore grid;
  grid.add("w", Tensor({64}, 0.0), ParamGroup::base());
  grid.add("v", Tensor({16}, 0.0), ParamGroup::head());
  for (double& x : grid.mutable_value("w").values()) x = static_cast<double>(rng.below(129)) / 64.0 - 1.0;
  std::size_t compose_failures = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<SparseUpdate> us;
    for (int k = 0; k < 10; ++k) {
      std::vector<SparseEntry> es;
      for (std::size_t i = 0; i < 64; ++i) {
        if (rng.bernoulli(0.3)) es.push_back({"w", i, static_cast<double>(rng.below(33)) / 64.0 - 0.25});
      }
      for (std::size_t i = 0; i < 16; ++i) {
        if (rng.bernoulli(0.3)) es.push_back({"v", i, static_cast<double>(rng.below(33)) / 64.0 - 0.25});
      }
      us.emplace_back(fingerprint(grid), UpdateScope::Full, es);
    }
    NamedParamStore a = grid, b = grid;
    apply_sparse_update(a, compose_sparse_updates(us));
    for (const auto& u : us) apply_sparse_update(b, u, StalePolicy::Force);
    compose_failures += !a.same_contents(b);
  }
  ok &= compose_failures == 0;
  detail += "composition mismatches " + std::to_string(compose_failures) + "/100; ";

  // budgets and layer-norm freeze through the SFT pipeline on the reference benchmark
  SftConfig sc = ref.strategy.sft;
  sc.ft_epochs = 1;
  sc.st_epochs = 1;
  const Model base = build_model(resolve_model_config(ref, bench.languages), 2);
  const LanguageData inception = bench.shard(0);
  const auto mats = pretrain_language_matrices(base, inception, sc, 3);
  const std::size_t enc_budget = sparsity_budget(sc.rho, base.params().parameter_count(filters::encoder()));
  std::size_t over = 0, max_seen = 0;
  for (const auto& [l, u] : mats) {
    over += u.size() > enc_budget;
    max_seen = std::max(max_seen, u.size());
  }
  const auto d0 = inception_sft(base, ref.task, inception, sc, mats, 4);
  const std::size_t cont_budget = sparsity_budget(
      sc.continuation_rho, d0.model.params().parameter_count(filters::kinds({GroupKind::Base, GroupKind::Head})));
  std::size_t ln_changed = 0, max_cont = 0;
  const auto ln = filters::kinds({GroupKind::LayerNorm});
  for (const auto& lang : bench.languages.language_ids()) {
    const Snapshot pre(d0.model.params());
    const auto d1 = continuation_sft(d0, {lang, bench.shard(lang, 1)}, sc, 5);
    const std::size_t changed = changed_coordinates(d1.model.params(), pre);
    max_cont = std::max(max_cont, changed);
    over += changed > cont_budget;
    ln_changed += fingerprint(d1.model.params(), ln) != pre.fingerprint(ln);
  }
  ok &= over == 0 && ln_changed == 0;
  detail += "matrix entries max " + std::to_string(max_seen) + "/" + std::to_string(enc_budget) +
            ", continuation changes max " + std::to_string(max_cont) + "/" + std::to_string(cont_budget) +
            ", layer-norm changed in " + std::to_string(ln_changed) + "/6 arms";
  return {ok, detail};
}

Outcome lr_division(const ExperimentConfig& ref, const Benchmark& bench) {
  const double adapter_lr = 0.05, factor = 40.0;
  Model m = build_model(resolve_model_config(ref, bench.languages), 8);
  insert_adapters(m, {"a0"}, 9);
  const OptimConfig cfg = configure_groups(OptimConfig::uniform(adapter_lr, OptimMode::SGD), adapter_lr, factor);
  Optimizer opt(cfg);
  const double base_lr = adapter_lr / factor;
  Rng rng(10);
  const auto base_like = filters::kinds({GroupKind::Base, GroupKind::LayerNorm});
  std::size_t step_mismatch = 0, bound_violations = 0, exceed_exact = 0;
  double worst_ratio = 0.0;
  for (int step = 0; step < 100; ++step) {
    const auto batch = pick(bench.train.at("a0"), 8, rng);
    Tape tape;
    const GradMap g = backward_pass(task_loss(tape, m, ref.task, batch, std::string("a0")));
    const Snapshot before(m.params());
    opt.step(m.params(), g);
    double max_disp = 0.0, max_grad = 0.0, slack = 0.0;
    for (const auto& name : m.params().names(base_like)) {
      const auto& now = m.params().value(name);
      const auto& was = before.entries().at(name).value;
      const auto git = g.find(name);
      for (std::size_t i = 0; i < now.numel(); ++i) {
        const double gi = git == g.end() ? 0.0 : git->second[i];
        step_mismatch += !same_bits(now[i], was[i] - base_lr * gi);
        max_disp = std::max(max_disp, std::abs(now[i] - was[i]));
        max_grad = std::max(max_grad, std::abs(gi));
        slack = std::max(slack, 0.5 * (std::nextafter(std::abs(now[i]), INFINITY) - std::abs(now[i])));
      }
    }
    const double bound = base_lr * max_grad;
    bound_violations += max_disp > bound + slack;
    exceed_exact += max_disp > bound;
    if (bound > 0) worst_ratio = std::max(worst_ratio, max_disp / bound);
  }
  return {step_mismatch == 0 && bound_violations == 0,
          "100 SGD steps, factor 40: applied step equals (lr/F)*grad bitwise (" + std::to_string(step_mismatch) +
              " mismatches); displacement/bound max " + fmt("%.12f", worst_ratio) + ", above the bound only by write rounding in " +
              std::to_string(exceed_exact) + " steps, violations beyond it " + std::to_string(bound_violations)};
}

json strategy_summary(const StrategyResult& s) {
  return {{"avg_percent_loss", s.mean->avg_percent_loss},
          {"num_improved_langs", s.mean->num_improved_langs},
          {"sum_ratio", std::isinf(s.mean->sum_ratio) ? json("inf") : json(s.mean->sum_ratio)},
          {"max_ratio", std::isinf(s.mean->max_ratio) ? json("inf") : json(s.mean->max_ratio)},
          {"closest_language", *s.closest_language},
          {"mean_heatmap_csv", heatmap_to_csv(*s.mean_matrix)}};
}

bool matches_golden(const json& got, const json& golden, std::string& why) {
  for (const auto& [key, value] : golden.items()) {
    if (!got.contains(key)) {
      why = "missing " + key;
      return false;
    }
    const auto& g = got[key];
    if (value.is_number() && g.is_number()) {
      const double a = g.get<double>(), b = value.get<double>();
      if (std::abs(a - b) > 1e-9 * std::max(1.0, std::abs(b))) {
        why = key + " " + fmt("%.10g", a) + " vs golden " + fmt("%.10g", b);
        return false;
      }
    } else if (value.is_object()) {
      if (!matches_golden(g, value, why)) return false;
    } else if (g != value) {
      why = key + " differs from golden";
      return false;
    }
  }
  return true;
}

Outcome directional(const ExperimentResult& res, double secs, const json& golden) {
  const auto& fft = res.strategy(StrategyKind::FFT);
  const auto& uri = res.strategy(StrategyKind::LAFTUriel);
  if (!res.ok() || !fft.mean || !uri.mean) return {false, "run incomplete"};
  const RowMetrics f = *fft.mean, u = *uri.mean;
  const bool improved = u.num_improved_langs >= f.num_improved_langs + 0.5;
  const bool loss = u.avg_percent_loss <= 0.7 * f.avg_percent_loss;
  const bool ratios = u.sum_ratio >= 1.0 && u.max_ratio >= 1.0;
  std::string why = "golden fixture absent";
  bool golden_ok = false;
  if (!golden.is_null()) {
    golden_ok = matches_golden(json{{"fft", strategy_summary(fft)}, {"laft-uriel", strategy_summary(uri)}},
                               golden["experiment"], why);
    if (golden_ok) why = "matches golden";
  }
  return {improved && loss && ratios && secs <= 900.0 && golden_ok,
          "NumImprovedLangs " + fmt("%.3f", u.num_improved_langs) + " vs FFT " + fmt("%.3f", f.num_improved_langs) +
              "; AvgPercentLoss " + fmt("%.3f", u.avg_percent_loss) + " vs FFT " + fmt("%.3f", f.avg_percent_loss) +
              "; SumRatio " + fmt("%.3f", u.sum_ratio) + ", MaxRatio " + fmt("%.3f", u.max_ratio) + "; " +
              fmt("%.0f", secs) + " s; " + why};
}

Outcome trajectories(const std::map<std::string, std::vector<TrajectoryResult>>& runs, const json& golden) {
  bool ok = true;
  std::string detail;
  json got;
  for (const auto& [order, results] : runs) {
    double fft = 0, uri = 0;
    for (const auto& r : results) {
      if (r.kind == StrategyKind::FFT) fft = r.mean_worst_loss;
      if (r.kind == StrategyKind::LAFTUriel) uri = r.mean_worst_loss;
      got[order][to_string(r.kind)] = r.mean_worst_loss;
    }
    ok &= uri <= fft;
    detail += order + ": worst-stage AvgPercentLoss " + fmt("%.3f", uri) + " vs FFT " + fmt("%.3f", fft) + "; ";
  }
  std::string why = "golden fixture absent";
  bool golden_ok = false;
  if (!golden.is_null()) {
    golden_ok = matches_golden(got, golden["trajectory"], why);
    if (golden_ok) why = "matches golden";
  }
  return {ok && golden_ok, detail + why};
}

Outcome closest_language(const ExperimentResult& res) {
  const auto& uri = res.strategy(StrategyKind::LAFTUriel);
  if (!uri.closest_language) return {false, "no closest-language value"};
  std::string per;
  for (const auto& s : uri.seeds) per += (per.empty() ? "" : " ") + fmt("%.3f", s.closest_language.value_or(NAN));
  return {*uri.closest_language >= 0.6,
          "mean " + fmt("%.3f", *uri.closest_language) + " over seeds (" + per + ")"};
}

Outcome determinism(const ExperimentResult& a, const ExperimentResult& b, const fs::path& out) {
  const auto ma = emit_artifacts(a, out / "run_a", HeatmapFormat::All);
  const auto mb = emit_artifacts(b, out / "run_b", HeatmapFormat::All);
  std::size_t differing = 0, csv_roundtrip_failures = 0, csvs = 0;
  for (const auto& rel : ma.artifacts) differing += read_file(out / "run_a" / rel) != read_file(out / "run_b" / rel);
  differing += ma.artifacts != mb.artifacts;
  for (const auto& sr : a.strategies) {
    std::vector<ChangeMatrix> ms;
    for (const auto& s : sr.seeds) {
      if (s.matrix) ms.push_back(*s.matrix);
    }
    if (sr.mean_matrix) ms.push_back(*sr.mean_matrix);
    for (const auto& m : ms) {
      ++csvs;
      const auto text = heatmap_to_csv(m);
      const auto back = heatmap_from_csv(text);
      csv_roundtrip_failures += !(back == round_to_csv_precision(m)) || heatmap_to_csv(back) != text;
    }
  }
  return {differing == 0 && csv_roundtrip_failures == 0,
          std::to_string(ma.artifacts.size()) + " artifacts compared, " + std::to_string(differing) + " differ; " +
              std::to_string(csvs) + " heatmap CSVs round-tripped, " + std::to_string(csv_roundtrip_failures) + " failures"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance suite"};
  std::string out = "acceptance_runs";
  std::string write_golden;
  app.add_option("--out", out, "scratch directory for run artifacts");
  app.add_option("--write-golden", write_golden, "capture the reference golden values to this file");
  CLI11_PARSE(app, argc, argv);
  set_log_level(LogLevel::Error);

  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& fn) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s  criterion %2d  %-28s %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  };

  try {
    const ExperimentConfig ref = reference_config();
    const Benchmark bench = build_benchmark(ref, ref.seeds.front());
    json golden;
    if (write_golden.empty() && fs::exists(kFixtures / "reference_golden.json")) {
      golden = json::parse(read_file(kFixtures / "reference_golden.json"));
    }

    report(1, "gradient correctness", [&] { return gradient_correctness(bench); });
    report(2, "adapter identity", [&] { return adapter_identity(bench); });
    report(3, "division factor mapping", [&] { return division_factors(); });
    report(4, "metric oracle equivalence", [&] { return metric_oracles(); });
    report(5, "sparse update algebra", [&] { return sparse_algebra(ref, bench); });
    report(6, "lr division contract", [&] { return lr_division(ref, bench); });

    const auto t0 = std::chrono::steady_clock::now();
    const ExperimentResult first = run_experiment(ref);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::map<std::string, std::vector<TrajectoryResult>> traj;
    for (const auto order : {TrajectoryOrder::H2L, TrajectoryOrder::L2H}) {
      ExperimentConfig c = ref;
      c.order = order;
      traj[to_string(order)] = run_trajectory(c);
    }

    if (!write_golden.empty()) {
      json g;
      g["experiment"] = {{"fft", strategy_summary(first.strategy(StrategyKind::FFT))},
                         {"laft-uriel", strategy_summary(first.strategy(StrategyKind::LAFTUriel))}};
      for (const auto& [order, results] : traj) {
        for (const auto& r : results) g["trajectory"][order][to_string(r.kind)] = r.mean_worst_loss;
      }
      write_file_atomic(write_golden, g.dump(2) + "\n");
      golden = g;
    }

    report(7, "directional end-to-end", [&] { return directional(first, secs, golden); });
    report(8, "trajectory worst stage", [&] { return trajectories(traj, golden); });
    report(9, "closest-language property", [&] { return closest_language(first); });
    report(10, "determinism and formats", [&] {
      const ExperimentResult second = run_experiment(ref);
      return determinism(first, second, out);
    });
  } catch (const std::exception& e) {
    std::printf("FAIL  setup: %s\n", e.what());
    return 2;
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
