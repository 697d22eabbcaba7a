#pragma once

// Test-only generators and independent oracles. Nothing here calls into the
// code paths it is used to check.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "vibes/core_model.hpp"
#include "vibes/rng.hpp"

namespace vibes::testing {

namespace fs = std::filesystem;

/// Scratch directory removed on scope exit.
class TempDir {
 public:
  TempDir() {
    static std::uint64_t counter = 0;
    path_ = fs::temp_directory_path() /
            ("vibes_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  [[nodiscard]] const fs::path& path() const noexcept { return path_; }

 private:
  fs::path path_;
};

// ------------------------------------------------------- reference PRNG

/// Straight transcription of the published splitmix64 / xoshiro256** code.
namespace ref {

inline std::uint64_t splitmix64(std::uint64_t& x) {
  std::uint64_t z = (x += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

struct Xoshiro {
  std::uint64_t s[4];

  explicit Xoshiro(std::uint64_t seed) {
    for (auto& w : s) w = splitmix64(seed);
  }
  static std::uint64_t rotl(const std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
  std::uint64_t bounded(std::uint64_t n) {
    // Smallest multiple-of-n window ending at 2^64.
    const std::uint64_t reject_below = (~n + 1) % n;
    std::uint64_t x;
    do x = next();
    while (x < reject_below);
    return x % n;
  }
};

template <typename T>
void fisher_yates(std::vector<T>& v, Xoshiro& g) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[g.bounded(i)]);
}

}  // namespace ref

// ---------------------------------------------------------- generators

inline double gaussian(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  return n(rng);
}

inline Registry random_registry(std::mt19937_64& rng, std::size_t n, std::size_t n_datasets = 3) {
  std::vector<BackboneRecord> records;
  std::uniform_int_distribution<int> params(1, 6), dataset(0, static_cast<int>(n_datasets) - 1), dim(1, 16);
  for (std::size_t i = 0; i < n; ++i) {
    const int ds = dataset(rng);
    records.push_back({"bb" + std::to_string(i), static_cast<std::int64_t>(params(rng)) * 1'000'000,
                       "ds" + std::to_string(ds), static_cast<std::int64_t>((ds + 1) * 1000), dim(rng), "test"});
  }
  std::shuffle(records.begin(), records.end(), rng);
  return Registry(std::move(records));
}

/// Trace for every registry backbone under `e`. Metrics come from a small set
/// of values so ties occur.
inline EvalTrace random_trace(std::mt19937_64& rng, const Registry& registry, Evaluator e = Evaluator::logreg) {
  std::uniform_int_distribution<int> level(0, 10), tau(1, 40);
  EvalTrace trace;
  for (const auto& b : registry.backbones())
    trace.entries.push_back({b.id, e, 0.25 * tau(rng), level(rng) / 10.0, level(rng) / 10.0});
  return trace;
}

// -------------------------------------------------------------- oracles

struct PrefixOracle {
  std::optional<std::size_t> selected;  // position in the permutation
  std::size_t k = 0;
  double budget_used = 0.0;
};

/// Budgeted prefix selection by enumeration: try every prefix length from longest to shortest,
/// keep the first one whose cost fits, then scan it for the best value.
inline PrefixOracle prefix_argmax_oracle(const std::vector<double>& taus, const std::vector<double>& vals,
                                         double t_max) {
  PrefixOracle out;
  for (std::size_t k = taus.size(); k >= 1; --k) {
    double cost = 0.0;
    for (std::size_t i = 0; i < k; ++i) cost += taus[i];
    if (cost <= t_max) {
      out.k = k;
      out.budget_used = cost;
      std::size_t best = 0;
      for (std::size_t i = 1; i < k; ++i)
        if (vals[i] > vals[best]) best = i;
      out.selected = best;
      return out;
    }
  }
  return out;
}

/// Percentile by expanding to the sorted list and interpolating by hand.
inline double sorted_percentile(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q / 100.0;
  const double lower = std::floor(h);
  const auto i = static_cast<std::size_t>(lower);
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - lower) * (v[i + 1] - v[i]);
}

// ------------------------------------------------------ synthetic data

struct Blobs {
  std::vector<float> features;
  std::vector<std::int32_t> labels;
  std::size_t dim = 0;
};

/// Isotropic Gaussian blobs with class means on random directions at the given
/// pairwise-ish spread.
inline Blobs gaussian_blobs(std::mt19937_64& rng, const std::vector<std::vector<double>>& means, std::size_t per_class,
                            double sigma) {
  Blobs b;
  b.dim = means.front().size();
  for (std::size_t c = 0; c < means.size(); ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < b.dim; ++j) b.features.push_back(static_cast<float>(means[c][j] + sigma * gaussian(rng)));
      b.labels.push_back(static_cast<std::int32_t>(c));
    }
  return b;
}

/// Plain softmax cross-entropy gradient (summed) with 1/(2C) L2 on non-bias
/// weights, written independently of the library objective.
inline double softmax_loss_grad(const std::vector<double>& w, const Blobs& data, int classes, double reg_c,
                                std::vector<double>& grad) {
  const std::size_t d = data.dim;
  grad.assign(w.size(), 0.0);
  double loss = 0.0;
  std::vector<double> z(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    double zmax = -1e300;
    for (int c = 0; c < classes; ++c) {
      double s = w[c * (d + 1) + d];
      for (std::size_t j = 0; j < d; ++j) s += w[c * (d + 1) + j] * data.features[i * d + j];
      z[c] = s;
      zmax = std::max(zmax, s);
    }
    double norm = 0.0;
    for (int c = 0; c < classes; ++c) norm += std::exp(z[c] - zmax);
    for (int c = 0; c < classes; ++c) {
      const double p = std::exp(z[c] - zmax) / norm;
      const double r = p - (c == data.labels[i] ? 1.0 : 0.0);
      for (std::size_t j = 0; j < d; ++j) grad[c * (d + 1) + j] += r * data.features[i * d + j];
      grad[c * (d + 1) + d] += r;
    }
    loss += zmax + std::log(norm) - z[data.labels[i]];
  }
  for (int c = 0; c < classes; ++c)
    for (std::size_t j = 0; j < d; ++j) {
      loss += w[c * (d + 1) + j] * w[c * (d + 1) + j] / (2 * reg_c);
      grad[c * (d + 1) + j] += w[c * (d + 1) + j] / reg_c;
    }
  return loss;
}

/// Gradient descent with backtracking, run until the gradient vanishes.
inline std::vector<double> gradient_descent_oracle(const Blobs& data, int classes, double reg_c,
                                                   std::size_t max_steps = 200000) {
  std::vector<double> w(static_cast<std::size_t>(classes) * (data.dim + 1), 0.0), g, trial, g_trial;
  double f = softmax_loss_grad(w, data, classes, reg_c, g);
  double step = 1.0;
  for (std::size_t it = 0; it < max_steps; ++it) {
    double gmax = 0.0, gg = 0.0;
    for (const double v : g) gmax = std::max(gmax, std::abs(v)), gg += v * v;
    if (gmax < 1e-8) break;
    step *= 2.0;
    for (;;) {
      trial = w;
      for (std::size_t i = 0; i < w.size(); ++i) trial[i] -= step * g[i];
      const double ft = softmax_loss_grad(trial, data, classes, reg_c, g_trial);
      if (ft <= f - 0.5 * step * gg) {
        w.swap(trial), g.swap(g_trial), f = ft;
        break;
      }
      step *= 0.5;
    }
  }
  return w;
}

/// One synthetic "backbone": a random linear embedding of a shared latent
/// labeled dataset, with backbone-specific signal strength and nuisance noise.
struct SyntheticBackbone {
  Blobs train;
  Blobs val;
  int classes = 0;
};

inline std::vector<SyntheticBackbone> synthetic_backbone_suite(std::uint64_t seed, std::size_t count) {
  std::mt19937_64 rng(seed);
  constexpr int kClasses = 5;
  constexpr std::size_t kLatent = 8, kTrainPerClass = 10, kValPerClass = 40;
  std::vector<std::vector<double>> means(kClasses, std::vector<double>(kLatent));
  for (auto& m : means)
    for (auto& v : m) v = 1.2 * gaussian(rng);
  const auto latent_train = gaussian_blobs(rng, means, kTrainPerClass, 1.0);
  const auto latent_val = gaussian_blobs(rng, means, kValPerClass, 1.0);

  std::vector<SyntheticBackbone> suite;
  std::uniform_int_distribution<std::size_t> dims(4, 48);
  std::uniform_real_distribution<double> quality(0.15, 1.0), log_noise(-1.5, 2.5);
  for (std::size_t b = 0; b < count; ++b) {
    const std::size_t d = dims(rng);
    const double q = quality(rng);
    std::vector<double> embed(d * kLatent), noise_scale(d);
    for (auto& v : embed) v = q * gaussian(rng) / std::sqrt(static_cast<double>(kLatent));
    for (auto& s : noise_scale) s = std::exp(log_noise(rng));
    auto project = [&](const Blobs& latent) {
      Blobs out;
      out.dim = d;
      out.labels = latent.labels;
      for (std::size_t i = 0; i < latent.labels.size(); ++i)
        for (std::size_t j = 0; j < d; ++j) {
          double v = 0.0;
          for (std::size_t l = 0; l < kLatent; ++l) v += embed[j * kLatent + l] * latent.features[i * kLatent + l];
          out.features.push_back(static_cast<float>(v + noise_scale[j] * 0.5 * gaussian(rng)));
        }
      return out;
    };
    suite.push_back({project(latent_train), project(latent_val), kClasses});
  }
  return suite;
}

}  // namespace vibes::testing
