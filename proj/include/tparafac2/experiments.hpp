#ifndef TPARAFAC2_EXPERIMENTS_HPP_
#define TPARAFAC2_EXPERIMENTS_HPP_

// Batch harness for the synthetic benchmark groups: dataset plans,
// multi-start fitting of every method, best-run selection and summary
// tables. All outputs are deterministic given the plan, whatever the
// number of worker threads.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "tparafac2/cmf.hpp"
#include "tparafac2/core.hpp"
#include "tparafac2/evaluation.hpp"
#include "tparafac2/solver.hpp"
#include "tparafac2/synthgen.hpp"

namespace tparafac2::experiments {

enum class Group { easy, almostzero, overlap };

inline std::string_view to_string(Group g) {
  switch (g) {
    case Group::easy: return "easy";
    case Group::almostzero: return "almostzero";
    case Group::overlap: return "overlap";
  }
  return "?";
}

inline Group group_from_string(std::string_view s) {
  if (s == "easy") return Group::easy;
  if (s == "almostzero" || s == "almost-zero") return Group::almostzero;
  if (s == "overlap") return Group::overlap;
  throw std::invalid_argument("unknown experiment group: " + std::string(s));
}

enum class MethodKind { parafac2, tparafac2, tcmf, nntcmf };

inline std::string_view to_string(MethodKind m) {
  switch (m) {
    case MethodKind::parafac2: return "PARAFAC2";
    case MethodKind::tparafac2: return "tPARAFAC2";
    case MethodKind::tcmf: return "tCMF";
    case MethodKind::nntcmf: return "NNtCMF";
  }
  return "?";
}

inline MethodKind method_from_string(std::string_view s) {
  std::string low(s);
  std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (low == "parafac2") return MethodKind::parafac2;
  if (low == "tparafac2") return MethodKind::tparafac2;
  if (low == "tcmf") return MethodKind::tcmf;
  if (low == "nntcmf") return MethodKind::nntcmf;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

inline bool is_cmf(MethodKind m) { return m == MethodKind::tcmf || m == MethodKind::nntcmf; }

/// One method at one smoothness level.
struct MethodSpec {
  MethodKind kind = MethodKind::tparafac2;
  double lambda_B = 0.0;
};

struct ExperimentPlan {
  Group group = Group::easy;
  int n_datasets = 10;
  std::vector<double> noise_levels{0.5};
  std::vector<double> overlap_fractions{0.2};  // overlap group only
  std::vector<MethodKind> methods{MethodKind::parafac2, MethodKind::tparafac2};
  std::vector<double> lambda_B_grid{0.1, 1.0, 10.0, 100.0};
  int n_inits = 10;
  std::uint64_t base_seed = 0;
  int threads = 1;  // <= 0: one per hardware thread
  synth::PresetShape shape = synth::PresetShape::desk();
  SolverConfig solver;  // R, ridges, tolerances; lambda_B comes from the grid

  void validate() const {
    if (n_datasets < 0) throw std::invalid_argument("ExperimentPlan: n_datasets must be >= 0");
    if (n_inits < 1) throw std::invalid_argument("ExperimentPlan: n_inits must be >= 1");
    if (methods.empty()) throw std::invalid_argument("ExperimentPlan: methods must be non-empty");
    if (noise_levels.empty()) throw std::invalid_argument("ExperimentPlan: noise_levels must be non-empty");
    for (double e : noise_levels)
      if (!(e >= 0.0)) throw std::invalid_argument("ExperimentPlan: noise levels must be non-negative");
    if (group == Group::overlap && overlap_fractions.empty())
      throw std::invalid_argument("ExperimentPlan: overlap group needs overlap_fractions");
    const bool needs_grid = std::any_of(methods.begin(), methods.end(),
                                        [](MethodKind m) { return m != MethodKind::parafac2; });
    if (needs_grid && lambda_B_grid.empty()) throw std::invalid_argument("ExperimentPlan: empty lambda_B grid");
    for (double l : lambda_B_grid)
      if (!(l >= 0.0)) throw std::invalid_argument("ExperimentPlan: lambda_B values must be non-negative");
    solver.validate();
  }

  /// PARAFAC2 once at lambda_B = 0; every other method at each grid value.
  std::vector<MethodSpec> method_specs() const {
    std::vector<MethodSpec> out;
    for (MethodKind m : methods) {
      if (m == MethodKind::parafac2) {
        out.push_back({m, 0.0});
      } else {
        for (double l : lambda_B_grid) out.push_back({m, l});
      }
    }
    return out;
  }
};

/// Desk-scale plans run 10 datasets x 10 inits at 60x40x15; paper scale
/// restores 150x100x20 with 20 datasets (per low-strength count in the
/// almost-zero group) and 20 inits.
inline ExperimentPlan default_plan(Group group, bool paper_scale = false) {
  ExperimentPlan p;
  p.group = group;
  if (paper_scale) {
    p.shape = synth::PresetShape::paper();
    p.n_datasets = 20;
    p.n_inits = 20;
  }
  switch (group) {
    case Group::easy:
      p.noise_levels = paper_scale ? std::vector<double>{0.25, 0.5, 0.75, 1.0} : std::vector<double>{0.5};
      break;
    case Group::almostzero:
      p.noise_levels = {0.25};
      if (paper_scale) p.n_datasets = 40;
      break;
    case Group::overlap:
      p.noise_levels = {0.5};
      p.overlap_fractions = paper_scale ? std::vector<double>{0.1, 0.2, 0.4} : std::vector<double>{0.2};
      p.methods = {MethodKind::parafac2, MethodKind::tparafac2, MethodKind::tcmf, MethodKind::nntcmf};
      break;
  }
  return p;
}

// ---------------------------------------------------------------------------
// Datasets of a plan

struct DatasetSpec {
  std::string id;
  Group group = Group::easy;
  double noise = 0.0;
  double overlap = 0.0;
  int index = 0;
  int n_low_concepts = 0;  // almost-zero group
  synth::SyntheticConfig config;
};

/// Structure seed of the index-th dataset. Noise levels and overlap
/// fractions share it, so they perturb the same underlying concepts.
inline std::uint64_t dataset_seed(std::uint64_t base_seed, int index) {
  return base_seed * 10007u + static_cast<std::uint64_t>(index);
}

inline std::string format_fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

inline std::vector<DatasetSpec> plan_datasets(const ExperimentPlan& plan) {
  plan.validate();
  std::vector<DatasetSpec> out;
  const std::vector<double> fractions =
      plan.group == Group::overlap ? plan.overlap_fractions : std::vector<double>{0.0};
  for (double frac : fractions) {
    for (double eta : plan.noise_levels) {
      for (int i = 0; i < plan.n_datasets; ++i) {
        DatasetSpec d;
        d.group = plan.group;
        d.noise = eta;
        d.overlap = frac;
        d.index = i;
        const std::uint64_t seed = dataset_seed(plan.base_seed, i);
        char idx[16];
        std::snprintf(idx, sizeof idx, "d%02d", i);
        switch (plan.group) {
          case Group::easy:
            d.config = synth::easy_preset(seed, plan.shape, eta);
            d.id = "easy-eta" + format_fixed(eta) + "-" + idx;
            break;
          case Group::almostzero:
            // Alternate between one and two low-strength concepts.
            d.n_low_concepts = 1 + (i % 2);
            d.config = synth::almostzero_preset(seed, d.n_low_concepts, plan.shape, eta);
            d.id = "almostzero-eta" + format_fixed(eta) + "-" + idx;
            break;
          case Group::overlap:
            d.config = synth::overlap_preset(seed, frac, plan.shape, eta);
            d.id = "overlap-f" + format_fixed(frac) + "-eta" + format_fixed(eta) + "-" + idx;
            break;
        }
        out.push_back(std::move(d));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Single runs

/// A run plus the fitted factors, for callers that inspect them.
struct RunOutcome {
  RunRecord record;
  std::optional<Parafac2Factors> factors;    // PARAFAC2 / tPARAFAC2
  std::optional<cmf::CmfFactors> cmf_factors;  // tCMF / NNtCMF
  bool diverged() const { return record.exit_reason == ExitReason::diverged; }
};

/// Fits `method` once from the initialization drawn with `init_seed`.
/// `truth` may be null, leaving the FMS empty.
inline RunOutcome run_method(const TensorSlices& data, const Parafac2Factors* truth, const MethodSpec& method,
                             std::uint64_t init_seed, const SolverConfig& base) {
  SolverConfig cfg = base;
  cfg.seed = init_seed;
  cfg.reg.lambda_B = method.kind == MethodKind::parafac2 ? 0.0 : method.lambda_B;

  RunOutcome out;
  RunRecord& rec = out.record;
  rec.method = std::string(to_string(method.kind));
  rec.lambda_B = cfg.reg.lambda_B;
  rec.init_seed = init_seed;
  const auto t0 = std::chrono::steady_clock::now();
  if (!is_cmf(method.kind)) {
    FitResult r = fit(data, cfg);
    rec.final_loss = r.final_loss();
    rec.outer_iters = r.outer_iters;
    rec.exit_reason = r.exit_reason;
    rec.feas_gap_B_Z = r.feas_gap_B_Z;
    rec.feas_gap_B_Y = r.feas_gap_B_Y;
    rec.feas_gap_D = r.feas_gap_D;
    rec.degenerate = detect_degenerate(r.factors);
    if (truth != nullptr) rec.fms = fms(r.factors, *truth).fms;
    out.factors = std::move(r.factors);
  } else {
    cmf::CmfFitResult r = cmf::fit_cmf(data, cfg, method.kind == MethodKind::nntcmf);
    rec.final_loss = r.final_loss();
    rec.outer_iters = r.outer_iters;
    rec.exit_reason = r.exit_reason;
    rec.feas_gap_B_Z = r.feas_gap_B_Z;
    rec.feas_gap_A = r.feas_gap_A;
    rec.degenerate = cmf::detect_degenerate(r.factors);
    if (truth != nullptr) rec.fms = cmf::fms_cmf(r.factors, *truth).fms;
    out.cmf_factors = std::move(r.factors);
  }
  rec.wall_time_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (rec.fms && !std::isfinite(*rec.fms)) rec.fms.reset();
  return out;
}

inline bool record_less(const RunRecord& a, const RunRecord& b) {
  return std::tie(a.dataset_id, a.method, a.lambda_B, a.init_seed) <
         std::tie(b.dataset_id, b.method, b.lambda_B, b.init_seed);
}

using Progress = std::function<void(std::size_t done, std::size_t total)>;

/// Runs every (dataset, method, init) of the plan on a worker pool and
/// returns the records sorted by (dataset_id, method, lambda_B, init_seed).
/// Init seeds are base_seed .. base_seed + n_inits - 1 for every method,
/// so all methods share initializations.
inline std::vector<RunRecord> run_plan(const ExperimentPlan& plan, const Progress& progress = nullptr) {
  const std::vector<DatasetSpec> specs = plan_datasets(plan);
  const std::vector<MethodSpec> methods = plan.method_specs();

  std::vector<synth::Dataset> data;
  data.reserve(specs.size());
  for (const auto& s : specs) data.push_back(synth::generate(s.config));

  struct Task {
    std::size_t dataset;
    std::size_t method;
    int init;
  };
  std::vector<Task> tasks;
  for (std::size_t d = 0; d < specs.size(); ++d)
    for (std::size_t m = 0; m < methods.size(); ++m)
      for (int i = 0; i < plan.n_inits; ++i) tasks.push_back({d, m, i});

  std::vector<RunRecord> records(tasks.size());
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> done{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  std::mutex failure_mutex;

  auto worker = [&]() {
    for (;;) {
      const std::size_t t = next.fetch_add(1);
      if (t >= tasks.size()) return;
      try {
        const Task& task = tasks[t];
        const DatasetSpec& spec = specs[task.dataset];
        const synth::Dataset& ds = data[task.dataset];
        RunRecord rec = run_method(ds.noisy, &ds.truth, methods[task.method],
                                   plan.base_seed + static_cast<std::uint64_t>(task.init), plan.solver)
                            .record;
        rec.dataset_id = spec.id;
        rec.group = std::string(to_string(spec.group));
        rec.noise = spec.noise;
        rec.overlap = spec.overlap;
        records[t] = std::move(rec);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next.store(tasks.size());
        return;
      }
      const std::size_t finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(finished, tasks.size());
      }
    }
  };

  int n_threads = plan.threads > 0 ? plan.threads : static_cast<int>(std::thread::hardware_concurrency());
  n_threads = std::max(1, std::min<int>(n_threads, static_cast<int>(std::max<std::size_t>(tasks.size(), 1))));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  std::sort(records.begin(), records.end(), record_less);
  return records;
}

// ---------------------------------------------------------------------------
// Selection and summaries

/// select_best per (dataset, method, lambda_B), in sorted order.
inline std::vector<RunRecord> best_rows(const std::vector<RunRecord>& runs) {
  std::map<std::tuple<std::string, std::string, double>, std::vector<RunRecord>> cells;
  for (const auto& r : runs) cells[{r.dataset_id, r.method, r.lambda_B}].push_back(r);
  std::vector<RunRecord> out;
  out.reserve(cells.size());
  for (const auto& [key, rs] : cells) out.push_back(select_best(rs));
  return out;
}

/// Quantile with linear interpolation between order statistics.
inline double quantile(std::vector<double> v, double q) {
  if (v.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

struct FmsStats {
  double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

struct SummaryRow {
  std::string group;
  std::string method;
  double lambda_B = 0.0;
  double noise = 0.0;
  double overlap = 0.0;
  int n_datasets = 0;            // datasets in the cell
  int n_used = 0;                // datasets whose best run survived screening
  int n_discarded_max_iter = 0;  // datasets with only capped runs
  int n_discarded_degenerate = 0;
  std::optional<FmsStats> fms;   // empty when nothing survived
};

/// Aggregates best rows over datasets per (group, method, lambda_B, noise,
/// overlap). Datasets whose best row is a fallback (all runs discarded)
/// are counted but left out of the FMS statistics.
inline std::vector<SummaryRow> summarize(const std::vector<RunRecord>& best) {
  using Key = std::tuple<std::string, std::string, double, double, double>;
  std::map<Key, std::vector<const RunRecord*>> cells;
  for (const auto& r : best) cells[{r.group, r.method, r.lambda_B, r.noise, r.overlap}].push_back(&r);
  std::vector<SummaryRow> out;
  for (const auto& [key, rows] : cells) {
    SummaryRow s;
    std::tie(s.group, s.method, s.lambda_B, s.noise, s.overlap) = key;
    s.n_datasets = static_cast<int>(rows.size());
    std::vector<double> values;
    for (const RunRecord* r : rows) {
      if (r->discarded_reason) {
        if (*r->discarded_reason == DiscardReason::max_iterations) ++s.n_discarded_max_iter;
        else ++s.n_discarded_degenerate;
        continue;
      }
      if (r->fms) values.push_back(*r->fms);
    }
    s.n_used = static_cast<int>(values.size());
    if (!values.empty())
      s.fms = FmsStats{quantile(values, 0.0), quantile(values, 0.25), quantile(values, 0.5), quantile(values, 0.75),
                       quantile(values, 1.0)};
    out.push_back(std::move(s));
  }
  return out;
}

/// Summary row of the best smoothing level: highest median FMS among the
/// rows of `method` (ties go to the smaller lambda_B).
inline std::optional<SummaryRow> best_lambda_row(const std::vector<SummaryRow>& rows, std::string_view method,
                                                 double noise, double overlap = 0.0) {
  std::optional<SummaryRow> best;
  for (const auto& r : rows) {
    if (r.method != method || r.noise != noise || r.overlap != overlap || !r.fms) continue;
    if (!best || r.fms->median > best->fms->median) best = r;
  }
  return best;
}

// ---------------------------------------------------------------------------
// CSV / JSON

inline constexpr std::string_view kRunsHeader =
    "dataset_id,group,noise,overlap,method,lambda_B,init_seed,final_loss,outer_iters,exit_reason,degenerate,fms,"
    "feas_gap_B_Z,feas_gap_B_Y,feas_gap_D,feas_gap_A,wall_time_seconds,discarded_reason";

inline constexpr std::string_view kSummaryHeader =
    "group,method,lambda_B,noise,overlap,n_datasets,n_used,n_discarded_max_iter,n_discarded_degenerate,"
    "fms_min,fms_q1,fms_median,fms_q3,fms_max";

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_short(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

inline std::string runs_to_csv(const std::vector<RunRecord>& runs) {
  std::ostringstream os;
  os << kRunsHeader << '\n';
  for (const auto& r : runs) {
    os << r.dataset_id << ',' << r.group << ',' << format_short(r.noise) << ',' << format_short(r.overlap) << ','
       << r.method << ',' << format_short(r.lambda_B) << ',' << r.init_seed << ',' << format_double(r.final_loss)
       << ',' << r.outer_iters << ',' << to_string(r.exit_reason) << ',' << (r.degenerate ? 1 : 0) << ','
       << (r.fms ? format_double(*r.fms) : std::string()) << ',' << format_double(r.feas_gap_B_Z) << ','
       << format_double(r.feas_gap_B_Y) << ',' << format_double(r.feas_gap_D) << ',' << format_double(r.feas_gap_A)
       << ',' << format_short(r.wall_time_seconds) << ','
       << (r.discarded_reason ? std::string(to_string(*r.discarded_reason)) : std::string()) << '\n';
  }
  return os.str();
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& s) {
  std::size_t used = 0;
  const double v = std::stod(s, &used);
  if (used != s.size()) throw std::invalid_argument("bad number: " + s);
  return v;
}

}  // namespace detail

/// Parses the output of runs_to_csv. Throws std::invalid_argument on a
/// malformed file.
inline std::vector<RunRecord> runs_from_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line)) throw std::invalid_argument("run file is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRunsHeader) throw std::invalid_argument("run file has an unexpected header");
  std::vector<RunRecord> out;
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 18) throw std::invalid_argument("run file line " + std::to_string(lineno) + ": expected 18 fields");
    try {
      RunRecord r;
      r.dataset_id = f[0];
      r.group = f[1];
      r.noise = detail::parse_double(f[2]);
      r.overlap = detail::parse_double(f[3]);
      r.method = f[4];
      r.lambda_B = detail::parse_double(f[5]);
      r.init_seed = std::stoull(f[6]);
      r.final_loss = detail::parse_double(f[7]);
      r.outer_iters = std::stoi(f[8]);
      r.exit_reason = exit_reason_from_string(f[9]);
      r.degenerate = f[10] == "1";
      if (!f[11].empty()) r.fms = detail::parse_double(f[11]);
      r.feas_gap_B_Z = detail::parse_double(f[12]);
      r.feas_gap_B_Y = detail::parse_double(f[13]);
      r.feas_gap_D = detail::parse_double(f[14]);
      r.feas_gap_A = detail::parse_double(f[15]);
      r.wall_time_seconds = detail::parse_double(f[16]);
      if (f[17] == "max-iterations") r.discarded_reason = DiscardReason::max_iterations;
      else if (f[17] == "degenerate") r.discarded_reason = DiscardReason::degenerate;
      out.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw std::invalid_argument("run file line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline nlohmann::json run_to_json(const RunRecord& r) {
  nlohmann::json j{{"dataset_id", r.dataset_id},
                   {"group", r.group},
                   {"noise", r.noise},
                   {"overlap", r.overlap},
                   {"method", r.method},
                   {"lambda_B", r.lambda_B},
                   {"init_seed", r.init_seed},
                   {"final_loss", std::isfinite(r.final_loss) ? nlohmann::json(r.final_loss) : nlohmann::json()},
                   {"outer_iters", r.outer_iters},
                   {"exit_reason", std::string(to_string(r.exit_reason))},
                   {"degenerate", r.degenerate},
                   {"fms", r.fms ? nlohmann::json(*r.fms) : nlohmann::json()},
                   {"feas_gap_B_Z", r.feas_gap_B_Z},
                   {"feas_gap_B_Y", r.feas_gap_B_Y},
                   {"feas_gap_D", r.feas_gap_D},
                   {"feas_gap_A", r.feas_gap_A},
                   {"wall_time_seconds", r.wall_time_seconds}};
  j["discarded_reason"] = r.discarded_reason ? nlohmann::json(std::string(to_string(*r.discarded_reason)))
                                             : nlohmann::json();
  return j;
}

inline std::string runs_to_json(const std::vector<RunRecord>& runs) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : runs) arr.push_back(run_to_json(r));
  return arr.dump(2) + "\n";
}

/// Summary table without timing columns: byte-identical across reruns of
/// the same plan.
inline std::string summary_to_csv(const std::vector<SummaryRow>& rows) {
  std::ostringstream os;
  os << kSummaryHeader << '\n';
  auto fmt = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& s : rows) {
    os << s.group << ',' << s.method << ',' << format_short(s.lambda_B) << ',' << format_short(s.noise) << ','
       << format_short(s.overlap) << ',' << s.n_datasets << ',' << s.n_used << ',' << s.n_discarded_max_iter << ','
       << s.n_discarded_degenerate;
    if (s.fms)
      os << ',' << fmt(s.fms->min) << ',' << fmt(s.fms->q1) << ',' << fmt(s.fms->median) << ',' << fmt(s.fms->q3)
         << ',' << fmt(s.fms->max);
    else
      os << ",,,,,";
    os << '\n';
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Plan JSON

inline nlohmann::json plan_to_json(const ExperimentPlan& p) {
  std::vector<std::string> methods;
  for (MethodKind m : p.methods) methods.emplace_back(to_string(m));
  return nlohmann::json{{"group", std::string(to_string(p.group))},
                        {"n_datasets", p.n_datasets},
                        {"noise_levels", p.noise_levels},
                        {"overlap_fractions", p.overlap_fractions},
                        {"methods", methods},
                        {"lambda_B_grid", p.lambda_B_grid},
                        {"n_inits", p.n_inits},
                        {"base_seed", p.base_seed},
                        {"shape",
                         {{"I", p.shape.I},
                          {"J", p.shape.J},
                          {"K", p.shape.K},
                          {"R", p.shape.R},
                          {"word_set_size", p.shape.word_set_size},
                          {"author_set_size", p.shape.author_set_size}}},
                        {"solver",
                         {{"R", p.solver.R},
                          {"lambda_A", p.solver.reg.lambda_A},
                          {"lambda_D", p.solver.reg.lambda_D},
                          {"ridge_B", p.solver.reg.ridge_B},
                          {"max_outer", p.solver.max_outer},
                          {"max_inner_B", p.solver.max_inner_B},
                          {"abs_tol_loss", p.solver.abs_tol_loss},
                          {"rel_tol_loss", p.solver.rel_tol_loss},
                          {"feas_tol", p.solver.feas_tol},
                          {"inner_tol", p.solver.inner_tol},
                          {"projection_inner", p.solver.projection_inner}}}};
}

/// Overlays the fields present in `j` onto `p` (a default plan).
inline void apply_plan_json(const nlohmann::json& j, ExperimentPlan& p) {
  if (j.contains("group")) p.group = group_from_string(j.at("group").get<std::string>());
  p.n_datasets = j.value("n_datasets", p.n_datasets);
  p.noise_levels = j.value("noise_levels", p.noise_levels);
  p.overlap_fractions = j.value("overlap_fractions", p.overlap_fractions);
  if (j.contains("methods")) {
    p.methods.clear();
    for (const auto& m : j.at("methods")) p.methods.push_back(method_from_string(m.get<std::string>()));
  }
  p.lambda_B_grid = j.value("lambda_B_grid", p.lambda_B_grid);
  p.n_inits = j.value("n_inits", p.n_inits);
  p.base_seed = j.value("base_seed", p.base_seed);
  p.threads = j.value("threads", p.threads);
  if (j.contains("shape")) {
    const auto& s = j.at("shape");
    p.shape.I = s.value("I", p.shape.I);
    p.shape.J = s.value("J", p.shape.J);
    p.shape.K = s.value("K", p.shape.K);
    p.shape.R = s.value("R", p.shape.R);
    p.shape.word_set_size = s.value("word_set_size", p.shape.word_set_size);
    p.shape.author_set_size = s.value("author_set_size", p.shape.author_set_size);
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    p.solver.R = s.value("R", p.solver.R);
    p.solver.reg.lambda_A = s.value("lambda_A", p.solver.reg.lambda_A);
    p.solver.reg.lambda_D = s.value("lambda_D", p.solver.reg.lambda_D);
    p.solver.reg.ridge_B = s.value("ridge_B", p.solver.reg.ridge_B);
    p.solver.max_outer = s.value("max_outer", p.solver.max_outer);
    p.solver.max_inner_B = s.value("max_inner_B", p.solver.max_inner_B);
    p.solver.abs_tol_loss = s.value("abs_tol_loss", p.solver.abs_tol_loss);
    p.solver.rel_tol_loss = s.value("rel_tol_loss", p.solver.rel_tol_loss);
    p.solver.feas_tol = s.value("feas_tol", p.solver.feas_tol);
    p.solver.inner_tol = s.value("inner_tol", p.solver.inner_tol);
    p.solver.projection_inner = s.value("projection_inner", p.solver.projection_inner);
  }
}

}  // namespace tparafac2::experiments

#endif  // TPARAFAC2_EXPERIMENTS_HPP_
