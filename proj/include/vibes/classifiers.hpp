#pragma once

// Classifiers on frozen features: multinomial logistic regression (the full
// evaluator) and the learning-free nearest-centroid and k-NN proxies.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "vibes/core_model.hpp"
#include "vibes/error.hpp"
#include "vibes/lbfgs.hpp"

namespace vibes {

/// Non-owning view of labeled rows: `features` is rows x dim, row-major.
template <std::floating_point T>
struct LabeledView {
  std::span<const T> features;
  std::span<const std::int32_t> labels;
  std::size_t dim = 0;

  [[nodiscard]] std::size_t rows() const noexcept { return labels.size(); }
  [[nodiscard]] std::span<const T> row(std::size_t i) const noexcept { return features.subspan(i * dim, dim); }
};

inline LabeledView<float> view_of(const Split& split, std::int64_t dim) {
  return {split.features, split.labels, static_cast<std::size_t>(dim)};
}

struct LogregConfig {
  /// Inverse L2 strength.
  double reg_c = 1.0;
  std::size_t max_iter = 100;
  /// Stop once the gradient max-norm is below this.
  double grad_tol = 1e-4;
  /// L-BFGS memory depth.
  std::size_t history = 10;
};

struct EvalResult {
  double accuracy = 0.0;
  double fit_predict_seconds = 0.0;
};

namespace detail {

template <std::floating_point T>
void check_shape(const LabeledView<T>& v, const char* what) {
  if (v.dim == 0) throw DataError(std::string(what) + ": feature dimension must be positive");
  if (v.features.size() != v.rows() * v.dim)
    throw DataError(std::string(what) + ": dimension mismatch (" + std::to_string(v.features.size()) +
                    " values for " + std::to_string(v.rows()) + " rows of dim " + std::to_string(v.dim) + ")");
}

template <std::floating_point T>
void check_labels(const LabeledView<T>& v, int class_count, const char* what) {
  for (const auto y : v.labels)
    if (y < 0 || y >= class_count)
      throw DataError(std::string(what) + ": label " + std::to_string(y) + " outside [0, " +
                      std::to_string(class_count - 1) + "]");
}

/// Validates a train/eval pair for any classifier.
template <std::floating_point T>
void check_train_eval(const LabeledView<T>& train, const LabeledView<T>& eval, int class_count,
                      bool require_every_class = true) {
  if (class_count < 1) throw DataError("class count must be positive");
  check_shape(train, "train");
  check_shape(eval, "eval");
  if (train.dim != eval.dim)
    throw DataError("dimension mismatch: train dim " + std::to_string(train.dim) + " vs eval dim " +
                    std::to_string(eval.dim));
  if (eval.rows() == 0) throw DataError("eval split is empty");
  check_labels(train, class_count, "train");
  check_labels(eval, class_count, "eval");
  if (!require_every_class) return;
  std::vector<bool> present(static_cast<std::size_t>(class_count), false);
  for (const auto y : train.labels) present[static_cast<std::size_t>(y)] = true;
  for (int c = 0; c < class_count; ++c)
    if (!present[static_cast<std::size_t>(c)]) throw DataError("class " + std::to_string(c) + " absent from train");
}

inline double accuracy(std::span<const std::int32_t> predicted, std::span<const std::int32_t> truth) {
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i] ? 1 : 0;
  return truth.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(truth.size());
}

/// Index of the largest score; ties go to the lowest index.
inline std::int32_t argmax(std::span<const double> scores) {
  std::size_t best = 0;
  for (std::size_t c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return static_cast<std::int32_t>(best);
}

class Stopwatch {
 public:
  [[nodiscard]] double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

// ------------------------------------------------------ logistic regression

/// Softmax cross-entropy summed over rows plus (1 / (2 reg_c)) * ||W||^2 on the
/// non-bias weights. `weights` is class_count x (dim + 1), row-major, bias last.
/// Writes the analytic gradient into `gradient` and returns the loss.
template <std::floating_point T>
double logreg_objective(std::span<const double> weights, const LabeledView<T>& data, int class_count, double reg_c,
                        std::span<double> gradient) {
  const std::size_t d = data.dim, stride = d + 1, classes = static_cast<std::size_t>(class_count);
  std::fill(gradient.begin(), gradient.end(), 0.0);
  std::vector<double> logits(classes);
  double loss = 0.0;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    for (std::size_t c = 0; c < classes; ++c) {
      const double* w = weights.data() + c * stride;
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * static_cast<double>(x[j]);
      logits[c] = z;
    }
    const double top = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (const double z : logits) sum += std::exp(z - top);
    const double lse = top + std::log(sum);
    const auto y = static_cast<std::size_t>(data.labels[i]);
    loss += lse - logits[y];
    for (std::size_t c = 0; c < classes; ++c) {
      const double residual = std::exp(logits[c] - lse) - (c == y ? 1.0 : 0.0);
      double* g = gradient.data() + c * stride;
      for (std::size_t j = 0; j < d; ++j) g[j] += residual * static_cast<double>(x[j]);
      g[d] += residual;
    }
  }
  const double inv_c = 1.0 / reg_c;
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < d; ++j) {
      const double w = weights[c * stride + j];
      loss += 0.5 * inv_c * w * w;
      gradient[c * stride + j] += inv_c * w;
    }
  }
  return loss;
}

struct ObjectiveValue {
  double loss = 0.0;
  std::vector<double> gradient;
};

/// Allocating form of logreg_objective; rejects non-finite input.
template <std::floating_point T>
ObjectiveValue logreg_objective(std::span<const double> weights, const LabeledView<T>& data, int class_count,
                                double reg_c) {
  detail::check_shape(data, "logreg");
  detail::check_labels(data, class_count, "logreg");
  if (weights.size() != static_cast<std::size_t>(class_count) * (data.dim + 1))
    throw DataError("logreg: weight matrix must be class_count x (dim + 1)");
  if (!(reg_c > 0.0)) throw DataError("logreg: reg_c must be positive");
  for (const double w : weights)
    if (!std::isfinite(w)) throw DataError("logreg: non-finite weight");
  for (const T x : data.features)
    if (!std::isfinite(x)) throw DataError("logreg: non-finite feature");
  ObjectiveValue out;
  out.gradient.resize(weights.size());
  out.loss = logreg_objective(weights, data, class_count, reg_c, std::span<double>(out.gradient));
  return out;
}

struct LogregModel {
  std::size_t dim = 0;
  int class_count = 0;
  std::vector<double> weights;
  std::size_t iterations = 0;
  bool converged = false;
};

template <std::floating_point T>
LogregModel fit_logreg(const LabeledView<T>& train, int class_count, const LogregConfig& cfg = {}) {
  if (!(cfg.reg_c > 0.0) || cfg.max_iter == 0 || !(cfg.grad_tol > 0.0) || cfg.history == 0)
    throw ConfigError("logreg config fields must all be positive");
  for (const T x : train.features)
    if (!std::isfinite(x)) throw DataError("logreg: non-finite feature");
  const std::size_t n_weights = static_cast<std::size_t>(class_count) * (train.dim + 1);
  LbfgsOptions opts;
  opts.max_iterations = cfg.max_iter;
  opts.grad_tolerance = cfg.grad_tol;
  opts.history = cfg.history;
  auto objective = [&](std::span<const double> w, std::span<double> g) {
    return logreg_objective(w, train, class_count, cfg.reg_c, g);
  };
  auto solution = minimize_lbfgs(objective, std::vector<double>(n_weights, 0.0), opts);
  return {train.dim, class_count, std::move(solution.x), solution.iterations, solution.converged};
}

template <std::floating_point T>
std::vector<std::int32_t> predict(const LogregModel& model, const LabeledView<T>& data) {
  const std::size_t d = model.dim, stride = d + 1;
  std::vector<std::int32_t> out(data.rows());
  std::vector<double> scores(static_cast<std::size_t>(model.class_count));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    for (std::size_t c = 0; c < scores.size(); ++c) {
      const double* w = model.weights.data() + c * stride;
      double z = w[d];
      for (std::size_t j = 0; j < d; ++j) z += w[j] * static_cast<double>(x[j]);
      scores[c] = z;
    }
    out[i] = detail::argmax(scores);
  }
  return out;
}

template <std::floating_point T>
EvalResult fit_eval_logreg(const LabeledView<T>& train, const LabeledView<T>& eval, int class_count,
                           const LogregConfig& cfg = {}) {
  detail::check_train_eval(train, eval, class_count);
  const detail::Stopwatch clock;
  const auto model = fit_logreg(train, class_count, cfg);
  const auto predicted = predict(model, eval);
  const double acc = detail::accuracy(predicted, eval.labels);
  return {acc, clock.seconds()};
}

// -------------------------------------------------------- nearest centroid

struct CentroidModel {
  std::size_t dim = 0;
  int class_count = 0;
  /// class_count x dim, row-major.
  std::vector<double> centroids;
};

/// Per-class mean of the train rows. O(n d).
template <std::floating_point T>
CentroidModel fit_nearest_centroid(const LabeledView<T>& train, int class_count) {
  CentroidModel model{train.dim, class_count, std::vector<double>(static_cast<std::size_t>(class_count) * train.dim)};
  std::vector<std::size_t> counts(static_cast<std::size_t>(class_count), 0);
  for (std::size_t i = 0; i < train.rows(); ++i) {
    const auto c = static_cast<std::size_t>(train.labels[i]);
    ++counts[c];
    const auto x = train.row(i);
    double* centroid = model.centroids.data() + c * train.dim;
    for (std::size_t j = 0; j < train.dim; ++j) centroid[j] += static_cast<double>(x[j]);
  }
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) continue;
    const double inv = 1.0 / static_cast<double>(counts[c]);
    for (std::size_t j = 0; j < train.dim; ++j) model.centroids[c * train.dim + j] *= inv;
  }
  return model;
}

/// Nearest centroid in Euclidean distance, ties to the lowest class. O(C d) per row.
template <std::floating_point T>
std::vector<std::int32_t> predict(const CentroidModel& model, const LabeledView<T>& data) {
  std::vector<std::int32_t> out(data.rows());
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    double best = std::numeric_limits<double>::infinity();
    std::int32_t best_class = 0;
    for (int c = 0; c < model.class_count; ++c) {
      const double* centroid = model.centroids.data() + static_cast<std::size_t>(c) * model.dim;
      double dist = 0.0;
      for (std::size_t j = 0; j < model.dim; ++j) {
        const double diff = static_cast<double>(x[j]) - centroid[j];
        dist += diff * diff;
      }
      if (dist < best) best = dist, best_class = c;
    }
    out[i] = best_class;
  }
  return out;
}

template <std::floating_point T>
EvalResult fit_eval_nearest_centroid(const LabeledView<T>& train, const LabeledView<T>& eval, int class_count) {
  detail::check_train_eval(train, eval, class_count);
  const detail::Stopwatch clock;
  const auto model = fit_nearest_centroid(train, class_count);
  const auto predicted = predict(model, eval);
  const double acc = detail::accuracy(predicted, eval.labels);
  return {acc, clock.seconds()};
}

// ---------------------------------------------------------------------- kNN

/// Majority vote among the k nearest train rows. Distance ties go to the lower
/// train row; vote ties go to the tied class owning the closest neighbor.
template <std::floating_point T>
std::vector<std::int32_t> predict_knn(const LabeledView<T>& train, const LabeledView<T>& data, int class_count,
                                      std::size_t k) {
  if (k == 0) throw ConfigError("knn: k must be positive");
  if (train.rows() < k)
    throw DataError("knn: train has " + std::to_string(train.rows()) + " rows, fewer than k = " + std::to_string(k));
  std::vector<std::int32_t> out(data.rows());
  std::vector<std::pair<double, std::size_t>> dist(train.rows());
  std::vector<std::size_t> votes(static_cast<std::size_t>(class_count));
  for (std::size_t i = 0; i < data.rows(); ++i) {
    const auto x = data.row(i);
    for (std::size_t r = 0; r < train.rows(); ++r) {
      const auto t = train.row(r);
      double sum = 0.0;
      for (std::size_t j = 0; j < train.dim; ++j) {
        const double diff = static_cast<double>(x[j]) - static_cast<double>(t[j]);
        sum += diff * diff;
      }
      dist[r] = {sum, r};
    }
    std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
    std::fill(votes.begin(), votes.end(), 0);
    std::size_t top = 0;
    for (std::size_t n = 0; n < k; ++n) top = std::max(top, ++votes[static_cast<std::size_t>(train.labels[dist[n].second])]);
    // Neighbors are sorted by distance, so the first class reaching `top` owns the closest tied neighbor.
    for (std::size_t n = 0; n < k; ++n) {
      const auto c = train.labels[dist[n].second];
      if (votes[static_cast<std::size_t>(c)] == top) {
        out[i] = c;
        break;
      }
    }
  }
  return out;
}

template <std::floating_point T>
EvalResult fit_eval_knn(const LabeledView<T>& train, const LabeledView<T>& eval, int class_count, std::size_t k = 5) {
  detail::check_train_eval(train, eval, class_count, false);
  const detail::Stopwatch clock;
  const auto predicted = predict_knn(train, eval, class_count, k);
  const double acc = detail::accuracy(predicted, eval.labels);
  return {acc, clock.seconds()};
}

}  // namespace vibes
