// Command-line front end: dataset generation, fitting, evaluation and the
// benchmark reproductions.
//
// Exit codes: 0 success, 1 usage error, 2 I/O error, 3 every run diverged.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tparafac2/tparafac2.hpp"

namespace {

using namespace tparafac2;
using namespace tparafac2::experiments;
namespace fs = std::filesystem;

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kNumerical = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Options shared by several subcommands; unset optionals keep plan or
// solver defaults.
struct Common {
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::optional<int> rank;
  std::optional<double> lambda_A, lambda_B, lambda_D;
  std::vector<double> noise;
  std::vector<double> overlap;
  std::optional<int> inits;
  std::optional<int> n_datasets;
  std::optional<int> max_outer;
  std::string out;
  bool paper_scale = false;
  int threads = 1;
  std::string config;
};

void apply_solver_flags(const Common& c, SolverConfig& s) {
  if (c.rank) s.R = *c.rank;
  if (c.lambda_A) s.reg.lambda_A = *c.lambda_A;
  if (c.lambda_D) s.reg.lambda_D = *c.lambda_D;
  if (c.max_outer) s.max_outer = *c.max_outer;
}

ExperimentPlan build_plan(Group group, const Common& c) {
  ExperimentPlan plan = default_plan(group, c.paper_scale);
  if (!c.config.empty()) {
    apply_plan_json(io::read_json(c.config), plan);
    if (plan.group != group) throw UsageError("config group does not match the requested group");
  }
  if (c.seed_set) plan.base_seed = c.seed;
  if (!c.noise.empty()) plan.noise_levels = c.noise;
  if (!c.overlap.empty()) plan.overlap_fractions = c.overlap;
  if (c.inits) plan.n_inits = *c.inits;
  if (c.n_datasets) plan.n_datasets = *c.n_datasets;
  if (c.lambda_B) plan.lambda_B_grid = {*c.lambda_B};
  plan.threads = c.threads;
  apply_solver_flags(c, plan.solver);
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return plan;
}

void add_solver_flags(CLI::App* app, Common& c) {
  app->add_option("--rank", c.rank, "Number of components R");
  app->add_option("--lambda-a", c.lambda_A, "Ridge penalty on A");
  app->add_option("--lambda-b", c.lambda_B, "Temporal smoothness penalty on B_k");
  app->add_option("--lambda-d", c.lambda_D, "Ridge penalty on the strengths D_k");
  app->add_option("--max-outer", c.max_outer, "Outer iteration cap");
}

void add_plan_flags(CLI::App* app, Common& c) {
  app->add_option_function<std::uint64_t>("--seed", [&c](std::uint64_t s) {
    c.seed = s;
    c.seed_set = true;
  }, "Base seed for datasets and initializations");
  app->add_option("--noise", c.noise, "Noise level(s) eta");
  app->add_option("--overlap", c.overlap, "Initial overlap fraction(s), overlap group only");
  app->add_option("--n-datasets", c.n_datasets, "Datasets per noise level / overlap fraction");
  app->add_flag("--paper-scale", c.paper_scale, "150x100x20 tensors, 20 datasets, 20 inits");
  app->add_option("--config", c.config, "JSON plan file; command-line flags override it");
}

std::string read_text(const fs::path& p) { return io::read_file(p); }

// ---------------------------------------------------------------------------

int cmd_generate(const std::string& group_name, const Common& c) {
  const ExperimentPlan plan = build_plan(group_from_string(group_name), c);
  if (c.out.empty()) throw UsageError("generate: --out is required");
  const fs::path out(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());

  nlohmann::json manifest{{"plan", plan_to_json(plan)}, {"datasets", nlohmann::json::array()}};
  for (const DatasetSpec& spec : plan_datasets(plan)) {
    const synth::Dataset ds = synth::generate(spec.config);
    nlohmann::json gen = spec.config;
    gen["group"] = std::string(to_string(spec.group));
    if (spec.n_low_concepts > 0) gen["n_low_concepts"] = spec.n_low_concepts;
    write_slab(out / spec.id, ds.noisy, &ds.truth, spec.config.seed, gen);
    manifest["datasets"].push_back({{"id", spec.id},
                                    {"dir", spec.id},
                                    {"seed", spec.config.seed},
                                    {"noise", spec.noise},
                                    {"overlap", spec.overlap}});
  }
  io::write_file_atomic(out / "manifest.json", manifest.dump(2) + "\n");
  std::printf("wrote %zu datasets to %s\n", manifest["datasets"].size(), out.string().c_str());
  return kOk;
}

int cmd_fit(const std::string& dataset_dir, const std::string& method_name, const Common& c,
            const std::string& save_factors) {
  const MethodKind kind = method_from_string(method_name);
  const SlabDataset slab = read_slab(dataset_dir);
  SolverConfig cfg;
  if (slab.R_true) cfg.R = static_cast<int>(*slab.R_true);
  apply_solver_flags(c, cfg);
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const MethodSpec method{kind, kind == MethodKind::parafac2 ? 0.0 : c.lambda_B.value_or(0.0)};
  const int n_inits = c.inits.value_or(1);
  if (n_inits < 1) throw UsageError("fit: --inits must be >= 1");

  std::string dataset_id = fs::path(dataset_dir).lexically_normal().filename().string();
  if (dataset_id.empty()) dataset_id = fs::path(dataset_dir).lexically_normal().parent_path().filename().string();
  std::string group;
  double noise = 0.0, overlap = 0.0;
  if (slab.generator_config.is_object()) {
    group = slab.generator_config.value("group", std::string());
    noise = slab.generator_config.value("eta", 0.0);
    overlap = slab.generator_config.value("overlap_fraction", 0.0);
  }

  const Parafac2Factors* truth = slab.truth ? &*slab.truth : nullptr;
  std::vector<RunOutcome> outcomes(static_cast<std::size_t>(n_inits));
  {
    std::atomic<int> next{0};
    auto worker = [&]() {
      for (int i = next.fetch_add(1); i < n_inits; i = next.fetch_add(1))
        outcomes[static_cast<std::size_t>(i)] =
            run_method(slab.data, truth, method, c.seed + static_cast<std::uint64_t>(i), cfg);
    };
    const int n_threads = std::max(1, std::min(c.threads > 0 ? c.threads : 1, n_inits));
    std::vector<std::thread> pool;
    for (int t = 1; t < n_threads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  std::vector<RunRecord> records;
  for (auto& o : outcomes) {
    o.record.dataset_id = dataset_id;
    o.record.group = group;
    o.record.noise = noise;
    o.record.overlap = overlap;
    records.push_back(o.record);
  }

  if (c.out.empty()) {
    std::cout << runs_to_csv(records);
  } else {
    // Append to an existing run file, keeping a JSON mirror of all rows.
    const fs::path out(c.out);
    std::vector<RunRecord> all;
    if (fs::exists(out)) all = runs_from_csv(read_text(out));
    all.insert(all.end(), records.begin(), records.end());
    io::write_file_atomic(out, runs_to_csv(all));
    fs::path mirror = out;
    mirror.replace_extension(".json");
    io::write_file_atomic(mirror, runs_to_json(all));
  }

  if (!save_factors.empty()) {
    const RunRecord best = select_best(records);
    const auto& o = outcomes[static_cast<std::size_t>(best.init_seed - c.seed)];
    if (o.factors) {
      write_factors(save_factors, *o.factors);
    } else {
      // CMF models have no strengths: store unit D_k.
      Parafac2Factors f;
      f.A = o.cmf_factors->A;
      f.B = o.cmf_factors->B;
      f.D.assign(f.B.size(), Vector::Ones(f.A.cols()));
      write_factors(save_factors, f);
    }
  }

  const bool all_diverged =
      std::all_of(records.begin(), records.end(), [](const RunRecord& r) { return r.exit_reason == ExitReason::diverged; });
  if (all_diverged) {
    std::fprintf(stderr, "fit: every run diverged\n");
    return kNumerical;
  }
  return kOk;
}

int cmd_evaluate(const std::string& dataset_dir, const std::string& factors_dir, double threshold,
                 const std::string& out) {
  const SlabDataset slab = read_slab(dataset_dir);
  const Parafac2Factors f = read_factors(factors_dir, slab.data.I(), slab.data.J(), slab.data.K());
  nlohmann::json j;
  double resid = 0.0;
  for (Index k = 0; k < slab.data.K(); ++k)
    resid += (slab.data[k] - reconstruct_slice(f, k)).squaredNorm();
  j["relative_error"] = std::sqrt(resid) / slab.data.norm();
  j["parafac2_residual"] = parafac2_residual(f);
  j["degenerate"] = detect_degenerate(f, threshold);
  if (slab.truth) {
    if (slab.truth->rank() != f.rank()) throw UsageError("evaluate: factor rank differs from the truth");
    const MatchReport rep = fms(f, *slab.truth);
    j["fms"] = rep.fms;
    j["permutation"] = rep.permutation;
    j["per_component_scores"] = rep.per_component_scores;
    j["zero_norm_components"] = rep.zero_norm_components;
  } else {
    j["fms"] = nullptr;
  }
  const std::string text = j.dump(2) + "\n";
  if (out.empty())
    std::cout << text;
  else
    io::write_file_atomic(out, text);
  return kOk;
}

void print_summary(const std::vector<SummaryRow>& rows) {
  std::printf("%-10s %-10s %8s %6s %6s %6s %9s %9s %9s\n", "group", "method", "lambda_B", "noise", "ovl", "used",
              "fms_q1", "median", "fms_q3");
  for (const auto& s : rows) {
    std::printf("%-10s %-10s %8g %6.2f %6.2f %3d/%-2d", s.group.c_str(), s.method.c_str(), s.lambda_B, s.noise,
                s.overlap, s.n_used, s.n_datasets);
    if (s.fms)
      std::printf(" %9.4f %9.4f %9.4f\n", s.fms->q1, s.fms->median, s.fms->q3);
    else
      std::printf(" %9s %9s %9s\n", "-", "-", "-");
  }
}

void write_results(const fs::path& out, const std::vector<RunRecord>& runs) {
  const auto best = best_rows(runs);
  const auto summary = summarize(best);
  io::write_file_atomic(out / "best.csv", runs_to_csv(best));
  io::write_file_atomic(out / "summary.csv", summary_to_csv(summary));
  print_summary(summary);
}

int cmd_summarize(const std::vector<std::string>& files, const std::string& out) {
  if (out.empty()) throw UsageError("summarize: --out is required");
  std::vector<RunRecord> runs;
  for (const auto& f : files) {
    auto part = runs_from_csv(read_text(f));
    runs.insert(runs.end(), part.begin(), part.end());
  }
  std::sort(runs.begin(), runs.end(), record_less);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out + ": " + ec.message());
  write_results(out, runs);
  return kOk;
}

int cmd_reproduce(const std::string& group_name, const Common& c) {
  const ExperimentPlan plan = build_plan(group_from_string(group_name), c);
  const fs::path out = c.out.empty() ? fs::path("results") / std::string(to_string(plan.group)) : fs::path(c.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
  io::write_file_atomic(out / "plan.json", plan_to_json(plan).dump(2) + "\n");

  std::size_t last_pct = 101;
  const auto runs = run_plan(plan, [&last_pct](std::size_t done, std::size_t total) {
    const std::size_t pct = 100 * done / total;
    if (pct / 10 != last_pct / 10 || done == total) {
      std::fprintf(stderr, "  %zu/%zu runs\n", done, total);
      last_pct = pct;
    }
  });
  io::write_file_atomic(out / "runs.csv", runs_to_csv(runs));
  io::write_file_atomic(out / "runs.json", runs_to_json(runs));
  write_results(out, runs);

  const bool all_diverged = !runs.empty() && std::all_of(runs.begin(), runs.end(), [](const RunRecord& r) {
    return r.exit_reason == ExitReason::diverged;
  });
  return all_diverged ? kNumerical : kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fit and benchmark PARAFAC2 with temporal smoothness"};
  app.require_subcommand(1);

  Common c;
  std::string group = "easy", dataset, method = "tPARAFAC2", factors, save_factors;
  std::vector<std::string> run_files;
  double threshold = kDefaultDegeneracyThreshold;

  auto* gen = app.add_subcommand("generate", "Write synthetic datasets with ground truth");
  gen->add_option("--group", group, "easy | almostzero | overlap")->capture_default_str();
  add_plan_flags(gen, c);
  gen->add_option("--out", c.out, "Output directory")->required();

  auto* fit_cmd = app.add_subcommand("fit", "Multi-start fit of one method on one dataset");
  fit_cmd->add_option("dataset", dataset, "Dataset directory")->required();
  fit_cmd->add_option("--method", method, "PARAFAC2 | tPARAFAC2 | tCMF | NNtCMF")->capture_default_str();
  fit_cmd->add_option_function<std::uint64_t>("--seed", [&c](std::uint64_t s) { c.seed = s; },
                                              "First initialization seed");
  fit_cmd->add_option("--inits", c.inits, "Number of random initializations");
  add_solver_flags(fit_cmd, c);
  fit_cmd->add_option("--threads", c.threads, "Worker threads")->capture_default_str();
  fit_cmd->add_option("--out", c.out, "Run file (CSV) to append to; stdout when omitted");
  fit_cmd->add_option("--save-factors", save_factors, "Directory for the best run's factors");

  auto* eval = app.add_subcommand("evaluate", "Score saved factors against a dataset");
  eval->add_option("dataset", dataset, "Dataset directory")->required();
  eval->add_option("--factors", factors, "Directory with A.bin, B.bin, D.bin")->required();
  eval->add_option("--threshold", threshold, "Degeneracy congruence threshold")->capture_default_str();
  eval->add_option("--out", c.out, "Output JSON file; stdout when omitted");

  auto* summ = app.add_subcommand("summarize", "Best-run selection and FMS quantiles over run files");
  summ->add_option("runs", run_files, "Run files (CSV)")->required();
  summ->add_option("--out", c.out, "Output directory")->required();

  auto* repro = app.add_subcommand("reproduce", "Run one benchmark group end to end");
  repro->add_option("group", group, "easy | almostzero | overlap")->required();
  add_plan_flags(repro, c);
  add_solver_flags(repro, c);
  repro->add_option("--inits", c.inits, "Random initializations per method");
  repro->add_option("--threads", c.threads, "Worker threads (0: all cores)")->capture_default_str();
  repro->add_option("--out", c.out, "Output directory (default results/<group>)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*gen) return cmd_generate(group, c);
    if (*fit_cmd) return cmd_fit(dataset, method, c, save_factors);
    if (*eval) return cmd_evaluate(dataset, factors, threshold, c.out);
    if (*summ) return cmd_summarize(run_files, c.out);
    if (*repro) return cmd_reproduce(group, c);
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const fs::filesystem_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kUsage;
  }
  return kUsage;
}
