#pragma once

// Projected gradient descent with a diagonal metric, Barzilai-Borwein trial
// steps and Armijo backtracking. Shared by the mean-field and pair solvers.

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mfc {

struct DescentOptions {
  int max_iters = 500;
  double tol = 1e-6;  // on the projected metric gradient norm
  double step = 1.0;
  double armijo = 1e-4;
  int max_backtracks = 40;
  double bound = 0.0;  // box |x_i| <= bound
  std::function<void(int, double, double)> on_iterate;
};

/// An evaluated point: variables, objective, Euclidean gradient and the
/// diagonal metric in which steps are taken.
template <class Payload>
struct DescentPoint {
  std::vector<double> x;
  std::vector<double> gradient;
  std::vector<double> metric;
  double objective = 0.0;
  double grad_norm = 0.0;
  Payload payload;
};

struct DescentLog {
  int iterations = 0;
  std::vector<double> objective_history;
  std::string message;
};

namespace detail {

/// Metric norm of the gradient, skipping components pinned at the box and
/// pointing outward.
inline double projected_norm(std::span<const double> x, std::span<const double> gradient,
                             std::span<const double> metric, double bound) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = gradient[i] / metric[i];
    const bool pinned = (x[i] >= bound && d < 0.0) || (x[i] <= -bound && d > 0.0);
    if (!pinned) s += d * gradient[i];
  }
  return std::sqrt(s);
}

}  // namespace detail

/// `evaluate(x)` returns the evaluated point, or nullopt when x is not
/// admissible; `project(x)` maps a trial vector onto the feasible set and
/// must include the box clamp.
template <class Payload, class Evaluate, class Project>
DescentPoint<Payload> descend(DescentPoint<Payload> current, Evaluate&& evaluate, Project&& project,
                              const DescentOptions& opts, DescentLog& log) {
  auto norm_of = [&](const DescentPoint<Payload>& p) {
    return detail::projected_norm(p.x, p.gradient, p.metric, opts.bound);
  };
  current.grad_norm = norm_of(current);
  double alpha = opts.step;
  std::vector<double> prev_x, prev_dir;
  std::vector<double> trial(current.x.size());
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (current.grad_norm < opts.tol) break;
    const std::size_t n = current.x.size();
    if (!prev_x.empty()) {
      // Barzilai-Borwein step measured in the current metric
      double ss = 0.0, sy = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double s = current.x[i] - prev_x[i];
        const double y = current.gradient[i] / current.metric[i] - prev_dir[i];
        ss += current.metric[i] * s * s;
        sy += current.metric[i] * s * y;
      }
      alpha = sy > 0.0 ? std::clamp(ss / sy, 1e-4, 1e4) : opts.step;
    }
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt, alpha *= 0.5) {
      for (std::size_t i = 0; i < n; ++i) trial[i] = current.x[i] - alpha * current.gradient[i] / current.metric[i];
      project(trial);
      double decrease = 0.0;
      for (std::size_t i = 0; i < n; ++i) decrease += current.gradient[i] * (current.x[i] - trial[i]);
      if (decrease <= 0.0) break;  // no first-order progress left inside the box
      auto next = evaluate(trial);
      if (!next) continue;
      if (next->objective <= current.objective - opts.armijo * decrease) {
        prev_x = std::move(current.x);
        prev_dir.resize(n);
        for (std::size_t i = 0; i < n; ++i) prev_dir[i] = current.gradient[i] / current.metric[i];
        current = std::move(*next);
        current.grad_norm = norm_of(current);
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      log.message = "line search stalled";
      break;
    }
    ++log.iterations;
    log.objective_history.push_back(current.objective);
    if (opts.on_iterate) opts.on_iterate(log.iterations, current.objective, current.grad_norm);
  }
  return current;
}

}  // namespace mfc
