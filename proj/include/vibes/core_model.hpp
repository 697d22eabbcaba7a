#pragma once

// Domain types shared by every part of the engine.

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "vibes/error.hpp"

namespace vibes {

/// Metadata for one pretrained backbone.
struct BackboneRecord {
  std::string id;
  std::int64_t param_count = 1;
  std::string pretrain_dataset;
  std::int64_t pretrain_dataset_size = 0;
  std::int64_t feature_dim = 1;
  std::string source;

  friend bool operator==(const BackboneRecord&, const BackboneRecord&) = default;
};

/// Ordered, validated pool of backbones.
class Registry {
 public:
  Registry() = default;

  /// Throws DataError on an empty pool, duplicate ids or bad field values.
  explicit Registry(std::vector<BackboneRecord> backbones) : backbones_(std::move(backbones)) {
    if (backbones_.empty()) throw DataError("empty registry");
    std::unordered_set<std::string_view> seen;
    for (const auto& b : backbones_) {
      if (b.id.empty()) throw DataError("backbone with empty id");
      if (b.param_count < 1) throw DataError("backbone '" + b.id + "': param_count must be >= 1");
      if (b.feature_dim < 1) throw DataError("backbone '" + b.id + "': feature_dim must be >= 1");
      if (b.pretrain_dataset_size < 0)
        throw DataError("backbone '" + b.id + "': pretrain_dataset_size must be >= 0");
      if (!seen.insert(b.id).second) throw DataError("duplicate backbone id '" + b.id + "'");
    }
  }

  [[nodiscard]] std::span<const BackboneRecord> backbones() const noexcept { return backbones_; }
  [[nodiscard]] std::size_t size() const noexcept { return backbones_.size(); }
  [[nodiscard]] bool empty() const noexcept { return backbones_.empty(); }

  [[nodiscard]] const BackboneRecord* find(std::string_view id) const noexcept {
    const auto it = std::find_if(backbones_.begin(), backbones_.end(),
                                 [&](const BackboneRecord& b) { return b.id == id; });
    return it == backbones_.end() ? nullptr : &*it;
  }

  friend bool operator==(const Registry&, const Registry&) = default;

 private:
  std::vector<BackboneRecord> backbones_;
};

enum class Evaluator { logreg, nearest_centroid, knn5 };

inline constexpr std::array<Evaluator, 3> kAllEvaluators{Evaluator::logreg, Evaluator::nearest_centroid,
                                                         Evaluator::knn5};

constexpr std::string_view to_string(Evaluator e) noexcept {
  switch (e) {
    case Evaluator::logreg: return "logreg";
    case Evaluator::nearest_centroid: return "nearest_centroid";
    case Evaluator::knn5: return "knn5";
  }
  return "?";
}

inline std::optional<Evaluator> parse_evaluator(std::string_view name) noexcept {
  for (const auto e : kAllEvaluators)
    if (to_string(e) == name) return e;
  return std::nullopt;
}

/// One recorded evaluation of a backbone.
struct TraceEntry {
  std::string backbone_id;
  Evaluator evaluator = Evaluator::logreg;
  double tau_seconds = 0.0;
  double val_metric = 0.0;
  double test_metric = 0.0;

  friend bool operator==(const TraceEntry&, const TraceEntry&) = default;
};

/// Recorded evaluations, at most one per (backbone, evaluator).
struct EvalTrace {
  std::vector<TraceEntry> entries;

  [[nodiscard]] const TraceEntry* find(std::string_view id, Evaluator e) const noexcept {
    for (const auto& entry : entries)
      if (entry.evaluator == e && entry.backbone_id == id) return &entry;
    return nullptr;
  }

  friend bool operator==(const EvalTrace&, const EvalTrace&) = default;
};

/// Rows of one split: row-major features plus labels.
struct Split {
  std::vector<float> features;
  std::vector<std::int32_t> labels;

  [[nodiscard]] std::size_t rows() const noexcept { return labels.size(); }

  friend bool operator==(const Split&, const Split&) = default;
};

/// Frozen features of one backbone on one dataset.
struct FeatureCache {
  std::string backbone_id;
  std::int64_t feature_dim = 1;
  std::int32_t class_count = 1;
  Split train;
  Split val;
  Split test;
  /// Seconds spent acquiring the backbone and extracting features, as recorded
  /// by the producer (0 when not recorded).
  double extraction_seconds = 0.0;

  friend bool operator==(const FeatureCache&, const FeatureCache&) = default;
};

struct EvaluationRecord {
  std::string backbone_id;
  double val_metric = 0.0;

  friend bool operator==(const EvaluationRecord&, const EvaluationRecord&) = default;
};

/// Result of one budgeted search.
struct SearchOutcome {
  std::optional<std::string> selected;
  std::size_t k = 0;
  double budget_used_seconds = 0.0;
  std::vector<EvaluationRecord> evaluations;

  friend bool operator==(const SearchOutcome&, const SearchOutcome&) = default;
};

struct BsecPoint {
  double t_max_seconds = 0.0;
  double median = 0.0;
  double p25 = 0.0;
  double p75 = 0.0;
  std::size_t n_runs = 0;
  std::size_t n_valid_runs = 0;

  friend bool operator==(const BsecPoint&, const BsecPoint&) = default;
};

/// Backbone selection efficiency curve for one (strategy, evaluator).
struct BsecCurve {
  std::string strategy;
  Evaluator evaluator = Evaluator::logreg;
  std::vector<BsecPoint> points;

  friend bool operator==(const BsecCurve&, const BsecCurve&) = default;
};

}  // namespace vibes
