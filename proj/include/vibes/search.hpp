#pragma once

// Budgeted backbone selection over an evaluation backend.
//
// Backbones are evaluated in permutation order while the cumulative cost fits
// in the budget; the selection is the best validation metric seen. A backend
// either replays recorded costs (simulated time) or runs the classifiers on
// feature caches and measures wall time.

#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "vibes/classifiers.hpp"
#include "vibes/core_model.hpp"
#include "vibes/error.hpp"
#include "vibes/io.hpp"
#include "vibes/sampling.hpp"

namespace vibes {

struct Measurement {
  double val_metric = 0.0;
  double test_metric = 0.0;
  double tau_seconds = 0.0;

  friend bool operator==(const Measurement&, const Measurement&) = default;
};

enum class ClockMode { simulated, wall };

/// Source of (val, test, tau) for a backbone under an evaluator.
/// Implementations must be safe to call from several threads.
class EvaluationBackend {
 public:
  virtual ~EvaluationBackend() = default;
  virtual Measurement evaluate(std::string_view backbone_id, Evaluator evaluator) = 0;
  [[nodiscard]] virtual ClockMode clock_mode() const noexcept = 0;
};

/// Elapsed search time. Only moves forward, by the cost each evaluation reports.
class BudgetClock {
 public:
  explicit BudgetClock(ClockMode mode) noexcept : mode_(mode) {}

  void advance(double seconds) {
    if (!(seconds >= 0.0)) throw DataError("budget clock cannot move backwards");
    elapsed_ += seconds;
  }
  [[nodiscard]] double elapsed_seconds() const noexcept { return elapsed_; }
  [[nodiscard]] ClockMode mode() const noexcept { return mode_; }

 private:
  ClockMode mode_;
  double elapsed_ = 0.0;
};

/// Serves recorded trace entries; immutable after construction.
class ReplayBackend final : public EvaluationBackend {
 public:
  explicit ReplayBackend(const EvalTrace& trace) {
    for (const auto& e : trace.entries) {
      if (!entries_.try_emplace({e.backbone_id, e.evaluator}, Measurement{e.val_metric, e.test_metric, e.tau_seconds})
               .second)
        throw DataError("duplicate trace entry (" + e.backbone_id + ", " + std::string(to_string(e.evaluator)) + ")");
    }
  }

  Measurement evaluate(std::string_view backbone_id, Evaluator evaluator) override {
    const auto it = entries_.find({std::string(backbone_id), evaluator});
    if (it == entries_.end())
      throw DataError("missing trace entry for backbone '" + std::string(backbone_id) + "' and evaluator '" +
                      std::string(to_string(evaluator)) + "'");
    return it->second;
  }

  [[nodiscard]] ClockMode clock_mode() const noexcept override { return ClockMode::simulated; }

 private:
  std::map<std::pair<std::string, Evaluator>, Measurement> entries_;
};

struct LiveOptions {
  LogregConfig logreg;
  std::size_t knn_k = 5;
  /// Adds the producer-recorded download/extraction seconds to tau.
  bool tau_includes_extraction = false;
};

/// Runs the classifiers on a cache. tau covers fit plus validation scoring;
/// the test split is scored outside the timed region.
inline Measurement measure_on_cache(const FeatureCache& cache, Evaluator evaluator, const LiveOptions& opts) {
  const auto train = view_of(cache.train, cache.feature_dim);
  const auto val = view_of(cache.val, cache.feature_dim);
  const auto test = view_of(cache.test, cache.feature_dim);
  detail::check_train_eval(train, val, cache.class_count, evaluator != Evaluator::knn5);
  detail::check_train_eval(train, test, cache.class_count, evaluator != Evaluator::knn5);

  const detail::Stopwatch clock;
  std::vector<std::int32_t> val_pred, test_pred;
  double timed = 0.0;
  switch (evaluator) {
    case Evaluator::logreg: {
      const auto model = fit_logreg(train, cache.class_count, opts.logreg);
      val_pred = predict(model, val);
      timed = clock.seconds();
      test_pred = predict(model, test);
      break;
    }
    case Evaluator::nearest_centroid: {
      const auto model = fit_nearest_centroid(train, cache.class_count);
      val_pred = predict(model, val);
      timed = clock.seconds();
      test_pred = predict(model, test);
      break;
    }
    case Evaluator::knn5: {
      val_pred = predict_knn(train, val, cache.class_count, opts.knn_k);
      timed = clock.seconds();
      test_pred = predict_knn(train, test, cache.class_count, opts.knn_k);
      break;
    }
  }
  Measurement m;
  m.val_metric = detail::accuracy(val_pred, cache.val.labels);
  m.test_metric = detail::accuracy(test_pred, cache.test.labels);
  // Clock granularity can report zero; costs must stay positive.
  m.tau_seconds = std::max(timed, 1e-9) + (opts.tau_includes_extraction ? cache.extraction_seconds : 0.0);
  return m;
}

/// Evaluates feature caches on demand with measured wall time.
///
/// Evaluations run one at a time. Every result is appended to an emitted trace
/// so the run can be replayed, and repeated queries return the recorded result.
class LiveBackend final : public EvaluationBackend {
 public:
  using CacheLoader = std::function<FeatureCache(std::string_view backbone_id)>;

  /// Preloaded caches keyed by backbone id.
  LiveBackend(std::map<std::string, FeatureCache> caches, LiveOptions opts)
      : caches_(std::move(caches)), opts_(std::move(opts)) {}

  /// Loads caches on demand; load time counts toward tau.
  LiveBackend(CacheLoader loader, LiveOptions opts) : loader_(std::move(loader)), opts_(std::move(opts)) {}

  Measurement evaluate(std::string_view backbone_id, Evaluator evaluator) override {
    const std::lock_guard lock(mutex_);
    if (const auto* seen = emitted_.find(backbone_id, evaluator))
      return {seen->val_metric, seen->test_metric, seen->tau_seconds};

    Measurement m;
    if (loader_) {
      const detail::Stopwatch clock;
      const FeatureCache cache = loader_(backbone_id);
      const double load = clock.seconds();
      m = measure_on_cache(cache, evaluator, opts_);
      m.tau_seconds += load;
    } else {
      const auto it = caches_.find(std::string(backbone_id));
      if (it == caches_.end()) throw DataError("missing feature cache for backbone '" + std::string(backbone_id) + "'");
      m = measure_on_cache(it->second, evaluator, opts_);
    }
    emitted_.entries.push_back({std::string(backbone_id), evaluator, m.tau_seconds, m.val_metric, m.test_metric});
    return m;
  }

  [[nodiscard]] ClockMode clock_mode() const noexcept override { return ClockMode::wall; }

  /// Snapshot of every evaluation performed so far, in execution order.
  [[nodiscard]] EvalTrace emitted_trace() const {
    const std::lock_guard lock(mutex_);
    return emitted_;
  }

 private:
  std::map<std::string, FeatureCache> caches_;
  CacheLoader loader_;
  LiveOptions opts_;
  mutable std::mutex mutex_;
  EvalTrace emitted_;
};

namespace detail {

inline Measurement evaluate_with_context(EvaluationBackend& backend, std::string_view id, Evaluator evaluator) {
  try {
    return backend.evaluate(id, evaluator);
  } catch (const DataError& e) {
    throw DataError("evaluating backbone '" + std::string(id) + "': " + e.what());
  }
}

inline void select_best(SearchOutcome& outcome) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < outcome.evaluations.size(); ++i)
    if (!best || outcome.evaluations[i].val_metric > outcome.evaluations[*best].val_metric) best = i;
  outcome.k = outcome.evaluations.size();
  outcome.selected = best ? std::optional<std::string>(outcome.evaluations[*best].backbone_id) : std::nullopt;
}

}  // namespace detail

/// Evaluates `perm` in order, stopping before the first evaluation whose cost
/// would take the cumulative total past `t_max_seconds`. The selection is the
/// earliest evaluation with the highest validation metric; none when k = 0.
inline SearchOutcome budgeted_search(const Permutation& perm, EvaluationBackend& backend, Evaluator evaluator,
                                     double t_max_seconds) {
  if (!(t_max_seconds > 0.0)) throw ConfigError("t_max must be positive");
  if (perm.order.empty()) throw DataError("cannot search a zero-length registry");
  BudgetClock clock(backend.clock_mode());
  SearchOutcome outcome;
  for (const auto& id : perm.order) {
    const auto m = detail::evaluate_with_context(backend, id, evaluator);
    if (clock.elapsed_seconds() + m.tau_seconds > t_max_seconds) break;
    clock.advance(m.tau_seconds);
    outcome.evaluations.push_back({id, m.val_metric});
  }
  outcome.budget_used_seconds = clock.elapsed_seconds();
  detail::select_best(outcome);
  return outcome;
}

/// Evaluates every backbone in registry order.
inline SearchOutcome exhaustive_search(const Registry& registry, EvaluationBackend& backend, Evaluator evaluator) {
  if (registry.empty()) throw DataError("cannot search a zero-length registry");
  BudgetClock clock(backend.clock_mode());
  SearchOutcome outcome;
  for (const auto& b : registry.backbones()) {
    const auto m = detail::evaluate_with_context(backend, b.id, evaluator);
    clock.advance(m.tau_seconds);
    outcome.evaluations.push_back({b.id, m.val_metric});
  }
  outcome.budget_used_seconds = clock.elapsed_seconds();
  detail::select_best(outcome);
  return outcome;
}

}  // namespace vibes
