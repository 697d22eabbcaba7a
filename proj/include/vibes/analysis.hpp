#pragma once

// Efficiency curves over repeated searches, evaluator correlation, and
// per-class subsampling.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "vibes/core_model.hpp"
#include "vibes/error.hpp"
#include "vibes/rng.hpp"
#include "vibes/sampling.hpp"
#include "vibes/search.hpp"

namespace vibes {

/// Linear interpolation between order statistics at position (q / 100) * (m - 1).
inline double percentile(std::span<const double> values, double q) {
  if (values.empty()) throw DataError("percentile of an empty list");
  if (!(q >= 0.0 && q <= 100.0)) throw ConfigError("percentile rank must lie in [0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double pos = q / 100.0 * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0) return sorted[lo];
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

/// Per (budget, run) metric of the selected backbone; empty when the run
/// selected nothing at that budget.
struct RunMatrix {
  std::vector<double> t_grid;
  std::size_t n_runs = 0;
  /// cells[t_index][run]
  std::vector<std::vector<std::optional<double>>> cells;

  RunMatrix() = default;
  RunMatrix(std::vector<double> grid, std::size_t runs)
      : t_grid(std::move(grid)), n_runs(runs), cells(t_grid.size(), std::vector<std::optional<double>>(runs)) {}

  friend bool operator==(const RunMatrix&, const RunMatrix&) = default;
};

enum class CentralStat { median, mean };

struct BsecOptions {
  std::size_t n_runs = 30;
  std::uint64_t base_seed = 0;
  std::size_t threads = 1;
  CentralStat stat = CentralStat::median;
  /// Score the selection's test metric with logistic regression, whatever
  /// evaluator drove the search.
  bool final_full_eval = false;
};

struct BsecStudy {
  BsecCurve curve;
  RunMatrix test;
  /// Validation metric of each selection, kept for provenance checks.
  RunMatrix val;
};

/// Collapses a run matrix into curve points. A budget where fewer than half the
/// runs selected a backbone is left out.
inline std::vector<BsecPoint> summarize(const RunMatrix& runs, CentralStat stat = CentralStat::median) {
  std::vector<BsecPoint> points;
  for (std::size_t t = 0; t < runs.t_grid.size(); ++t) {
    std::vector<double> present;
    for (const auto& cell : runs.cells[t])
      if (cell) present.push_back(*cell);
    if (present.empty() || 2 * present.size() < runs.n_runs) continue;
    BsecPoint p;
    p.t_max_seconds = runs.t_grid[t];
    p.n_runs = runs.n_runs;
    p.n_valid_runs = present.size();
    if (stat == CentralStat::median) {
      p.median = percentile(present, 50.0);
      p.p25 = percentile(present, 25.0);
      p.p75 = percentile(present, 75.0);
    } else {
      double mean = 0.0;
      for (const double v : present) mean += v;
      mean /= static_cast<double>(present.size());
      double var = 0.0;
      for (const double v : present) var += (v - mean) * (v - mean);
      const double sd = std::sqrt(var / static_cast<double>(present.size()));
      p.median = mean;
      p.p25 = mean - sd;
      p.p75 = mean + sd;
    }
    points.push_back(p);
  }
  return points;
}

namespace detail {

inline void check_grid(std::span<const double> t_grid) {
  if (t_grid.empty()) throw ConfigError("budget grid is empty");
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    if (!(t_grid[i] > 0.0) || !std::isfinite(t_grid[i])) throw ConfigError("budget grid values must be positive");
    if (i > 0 && !(t_grid[i] > t_grid[i - 1])) throw ConfigError("budget grid must be strictly increasing");
  }
}

/// Runs fn(run) for run in [0, n) on up to `threads` workers. The first
/// exception (lowest run index) is rethrown after all workers finish.
template <typename Fn>
void parallel_runs(std::size_t n, std::size_t threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t run = next++; run < n; run = next++) {
      try {
        fn(run);
      } catch (...) {
        errors[run] = std::current_exception();
      }
    }
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(threads, n));
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Repeats the budgeted search for every run and budget. Run r uses seed
/// base_seed + r; seed-independent strategies share one permutation.
inline BsecStudy run_bsec(const Registry& registry, EvaluationBackend& backend, Strategy strategy, Evaluator evaluator,
                          std::span<const double> t_grid, const BsecOptions& opts = {}) {
  detail::check_grid(t_grid);
  if (opts.n_runs == 0) throw ConfigError("n_runs must be at least 1");
  const std::vector<double> grid(t_grid.begin(), t_grid.end());
  BsecStudy study{{std::string(to_string(strategy)), evaluator, {}}, RunMatrix(grid, opts.n_runs),
                  RunMatrix(grid, opts.n_runs)};
  std::optional<Permutation> shared;
  if (is_deterministic(strategy)) shared = make_permutation(strategy, registry, opts.base_seed);
  const Evaluator scoring = opts.final_full_eval ? Evaluator::logreg : evaluator;

  detail::parallel_runs(opts.n_runs, opts.threads, [&](std::size_t run) {
    const Permutation perm = shared ? *shared : make_permutation(strategy, registry, opts.base_seed + run);
    for (std::size_t t = 0; t < grid.size(); ++t) {
      const auto outcome = budgeted_search(perm, backend, evaluator, grid[t]);
      if (!outcome.selected) continue;
      const auto& chosen = *std::find_if(outcome.evaluations.begin(), outcome.evaluations.end(),
                                         [&](const EvaluationRecord& e) { return e.backbone_id == *outcome.selected; });
      study.val.cells[t][run] = chosen.val_metric;
      study.test.cells[t][run] = detail::evaluate_with_context(backend, *outcome.selected, scoring).test_metric;
    }
  });
  study.curve.points = summarize(study.test, opts.stat);
  return study;
}

inline BsecCurve bsec(const Registry& registry, EvaluationBackend& backend, Strategy strategy, Evaluator evaluator,
                      std::span<const double> t_grid, const BsecOptions& opts = {}) {
  return run_bsec(registry, backend, strategy, evaluator, t_grid, opts).curve;
}

// ------------------------------------------------------------- correlation

struct CorrelationPoint {
  std::string backbone_id;
  double metric_a = 0.0;
  double metric_b = 0.0;
};

struct CorrelationReport {
  std::vector<CorrelationPoint> points;
  double pearson_r = 0.0;
  double fraction_a_ge_b = 0.0;
};

inline double pearson(std::span<const double> a, std::span<const double> b) {
  auto constant = [](std::span<const double> v) { return std::adjacent_find(v.begin(), v.end(), std::not_equal_to<>()) == v.end(); };
  if (a.size() < 2 || constant(a) || constant(b)) throw DataError("correlation undefined: zero variance");
  const auto n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) mean_a += a[i], mean_b += b[i];
  mean_a /= n, mean_b /= n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - mean_a, db = b[i] - mean_b;
    cov += da * db, var_a += da * da, var_b += db * db;
  }
  if (!(var_a > 0.0) || !(var_b > 0.0)) throw DataError("correlation undefined: zero variance");
  return std::clamp(cov / std::sqrt(var_a * var_b), -1.0, 1.0);
}

namespace detail {

/// Validation metric per backbone, restricted to one evaluator when given.
inline std::vector<std::pair<std::string, double>> val_metrics(const EvalTrace& trace, std::optional<Evaluator> only,
                                                               const char* side) {
  std::vector<std::pair<std::string, double>> out;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& e : trace.entries) {
    if (only && e.evaluator != *only) continue;
    if (!seen.emplace(e.backbone_id, out.size()).second)
      throw DataError(std::string("trace ") + side + " holds several evaluators for backbone '" + e.backbone_id +
                      "'; choose one");
    out.emplace_back(e.backbone_id, e.val_metric);
  }
  return out;
}

}  // namespace detail

/// Pairs validation metrics by backbone id (in trace-a order).
inline CorrelationReport correlate_evaluators(const EvalTrace& trace_a, const EvalTrace& trace_b,
                                              std::optional<Evaluator> evaluator_a = std::nullopt,
                                              std::optional<Evaluator> evaluator_b = std::nullopt) {
  const auto a = detail::val_metrics(trace_a, evaluator_a, "a");
  const auto b = detail::val_metrics(trace_b, evaluator_b, "b");
  std::unordered_map<std::string_view, double> b_by_id;
  for (const auto& [id, v] : b) b_by_id.emplace(id, v);

  CorrelationReport report;
  std::vector<double> xs, ys;
  std::size_t ge = 0;
  for (const auto& [id, va] : a) {
    const auto it = b_by_id.find(id);
    if (it == b_by_id.end()) continue;
    report.points.push_back({id, va, it->second});
    xs.push_back(va);
    ys.push_back(it->second);
    ge += va >= it->second ? 1 : 0;
  }
  if (report.points.size() < 2) throw DataError("fewer than 2 common backbones");
  report.pearson_r = pearson(xs, ys);
  report.fraction_a_ge_b = static_cast<double>(ge) / static_cast<double>(report.points.size());
  return report;
}

// ------------------------------------------------------------- subsampling

/// Seeded uniform sample of up to `n_per_class` indices per class, sorted
/// ascending. Classes are drawn in ascending label order from one generator;
/// classes with fewer items are taken whole.
inline std::vector<std::size_t> subsample_per_class(std::span<const std::int64_t> labels, std::size_t n_per_class,
                                                    std::uint64_t seed) {
  if (labels.empty()) throw DataError("no labels to subsample");
  if (n_per_class == 0) throw ConfigError("n_per_class must be at least 1");
  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  Xoshiro256 rng(seed);
  std::vector<std::size_t> picked;
  for (auto& [label, members] : by_class) {
    shuffle(members, rng);
    const std::size_t take = std::min(n_per_class, members.size());
    picked.insert(picked.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(take));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

}  // namespace vibes
