#pragma once

// Limited-memory BFGS with a strong-Wolfe line search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

namespace vibes {

struct LbfgsOptions {
  std::size_t max_iterations = 100;
  /// Converged when max |g_i| drops below this.
  double grad_tolerance = 1e-4;
  std::size_t history = 10;
  std::size_t max_line_search_evals = 25;
  double armijo = 1e-4;
  double curvature = 0.9;
};

struct LbfgsResult {
  std::vector<double> x;
  double value = 0.0;
  std::size_t iterations = 0;
  std::size_t evaluations = 0;
  bool converged = false;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

/// Minimizer of the cubic matching values and slopes at a and b.
inline double cubic_minimizer(double a, double fa, double da, double b, double fb, double db) {
  const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
  const double disc = d1 * d1 - da * db;
  if (disc < 0.0) return 0.5 * (a + b);
  const double d2 = std::copysign(std::sqrt(disc), b - a);
  return b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
}

}  // namespace detail

/// Minimizes `objective`, a callable double(span<const double> x, span<double> grad),
/// starting from x0.
template <typename Objective>
LbfgsResult minimize_lbfgs(Objective&& objective, std::vector<double> x0, const LbfgsOptions& opts = {}) {
  const std::size_t n = x0.size();
  LbfgsResult result;
  result.x = std::move(x0);
  std::vector<double> grad(n);
  result.value = objective(std::span<const double>(result.x), std::span<double>(grad));
  result.evaluations = 1;

  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::deque<Pair> memory;
  std::vector<double> direction(n), alpha(opts.history), trial_x(n), trial_g(n);

  while (true) {
    if (detail::max_abs(grad) < opts.grad_tolerance) {
      result.converged = true;
      break;
    }
    if (result.iterations >= opts.max_iterations) break;

    // Two-loop recursion: direction = -H * grad.
    for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i];
    for (std::size_t m = memory.size(); m-- > 0;) {
      alpha[m] = memory[m].rho * detail::dot(memory[m].s, direction);
      for (std::size_t i = 0; i < n; ++i) direction[i] -= alpha[m] * memory[m].y[i];
    }
    if (!memory.empty()) {
      const auto& last = memory.back();
      const double gamma = detail::dot(last.s, last.y) / detail::dot(last.y, last.y);
      for (auto& v : direction) v *= gamma;
    }
    for (std::size_t m = 0; m < memory.size(); ++m) {
      const double beta = memory[m].rho * detail::dot(memory[m].y, direction);
      for (std::size_t i = 0; i < n; ++i) direction[i] += memory[m].s[i] * (alpha[m] - beta);
    }

    double slope0 = detail::dot(grad, direction);
    if (!(slope0 < 0.0)) {
      // Not a descent direction: restart from steepest descent.
      memory.clear();
      for (std::size_t i = 0; i < n; ++i) direction[i] = -grad[i];
      slope0 = -detail::dot(grad, grad);
    }

    const double f0 = result.value;
    auto phi = [&](double step, double& slope) {
      for (std::size_t i = 0; i < n; ++i) trial_x[i] = result.x[i] + step * direction[i];
      const double f = objective(std::span<const double>(trial_x), std::span<double>(trial_g));
      ++result.evaluations;
      slope = detail::dot(trial_g, direction);
      return f;
    };

    double step = memory.empty() ? std::min(1.0, 1.0 / std::sqrt(-slope0)) : 1.0;
    double prev_step = 0.0, f_prev = f0, d_prev = slope0;
    double accepted = -1.0, f_accepted = 0.0;
    std::size_t evals = 0;

    auto zoom = [&](double lo, double f_lo, double d_lo, double hi, double f_hi, double d_hi) {
      while (evals < opts.max_line_search_evals) {
        double a = detail::cubic_minimizer(lo, f_lo, d_lo, hi, f_hi, d_hi);
        const double left = std::min(lo, hi), right = std::max(lo, hi), width = right - left;
        if (!std::isfinite(a) || a < left + 0.1 * width || a > right - 0.1 * width) a = 0.5 * (lo + hi);
        double d;
        const double f = phi(a, d);
        ++evals;
        if (f > f0 + opts.armijo * a * slope0 || f >= f_lo) {
          hi = a, f_hi = f, d_hi = d;
        } else {
          if (std::abs(d) <= -opts.curvature * slope0) {
            accepted = a, f_accepted = f;
            return;
          }
          if (d * (hi - lo) >= 0.0) hi = lo, f_hi = f_lo, d_hi = d_lo;
          lo = a, f_lo = f, d_lo = d;
        }
        if (std::abs(hi - lo) < 1e-16 * std::max(1.0, std::abs(lo))) break;
      }
      // Fall back to the best Armijo point found, if any.
      if (lo > 0.0) {
        double d;
        f_accepted = phi(lo, d);
        accepted = lo;
      }
    };

    while (evals < opts.max_line_search_evals) {
      double d;
      const double f = phi(step, d);
      ++evals;
      if (!std::isfinite(f) || f > f0 + opts.armijo * step * slope0 || (evals > 1 && f >= f_prev)) {
        if (!std::isfinite(f)) {
          step = 0.5 * (prev_step + step);
          continue;
        }
        zoom(prev_step, f_prev, d_prev, step, f, d);
        break;
      }
      if (std::abs(d) <= -opts.curvature * slope0) {
        accepted = step, f_accepted = f;
        break;
      }
      if (d >= 0.0) {
        zoom(step, f, d, prev_step, f_prev, d_prev);
        break;
      }
      prev_step = step, f_prev = f, d_prev = d;
      step *= 2.0;
    }
    if (accepted <= 0.0) break;  // line search failed; keep the current iterate

    Pair pair{std::vector<double>(n), std::vector<double>(n), 0.0};
    for (std::size_t i = 0; i < n; ++i) {
      pair.s[i] = trial_x[i] - result.x[i];
      pair.y[i] = trial_g[i] - grad[i];
    }
    const double sy = detail::dot(pair.s, pair.y);
    result.x.swap(trial_x);
    grad.swap(trial_g);
    trial_x.assign(n, 0.0);
    trial_g.assign(n, 0.0);
    result.value = f_accepted;
    ++result.iterations;
    if (sy > 1e-12 * detail::dot(pair.y, pair.y)) {
      pair.rho = 1.0 / sy;
      memory.push_back(std::move(pair));
      if (memory.size() > opts.history) memory.pop_front();
    }
  }
  return result;
}

}  // namespace vibes
