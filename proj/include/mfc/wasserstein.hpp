#pragma once

// Exact Wasserstein distances on the circle R/Z.
//
// Every measure here is encoded by its CDF on [0,1] as a monotone polyline
// through knots (x_k, F_k). Grid measures give one knot per cell boundary;
// point clouds give a vertical segment at each atom. Swapping the two
// coordinates of the same polyline gives the quantile function.
//
//   W1 = min_a  \int_0^1 |F(x) - G(x) - a| dx
//   W2 = min_t  ( \int_0^1 |Q_F(s) - Q_G~(s + t)|^2 ds )^{1/2}
//
// where Q_G~ is the quantile function of G lifted to the real line,
// Q_G~(s + 1) = Q_G~(s) + 1. The W2 objective is convex in t.

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/measure.hpp"

namespace mfc {

/// Monotone polyline from (0,0) to (1,1); abscissae may repeat (jumps) and
/// ordinates may repeat (flats).
class CirclePolyline {
 public:
  CirclePolyline() = default;

  static CirclePolyline cdf(std::span<const double> density) {
    CirclePolyline p;
    const std::size_t m = density.size();
    const double h = 1.0 / static_cast<double>(m);
    p.u_.reserve(m + 1);
    p.v_.reserve(m + 1);
    double mass = 0.0;
    p.push(0.0, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
      mass += h * density[j];
      p.push(static_cast<double>(j + 1) * h, j + 1 == m ? 1.0 : std::min(mass, 1.0));
    }
    return p;
  }

  static CirclePolyline cdf(const GridMeasure& mu) { return cdf(mu.density()); }

  static CirclePolyline cdf(const EmpiricalMeasure& emp) {
    std::vector<double> xs(emp.points().begin(), emp.points().end());
    std::sort(xs.begin(), xs.end());
    CirclePolyline p;
    const double n = static_cast<double>(xs.size());
    p.push(0.0, 0.0);
    for (std::size_t i = 0; i < xs.size(); ++i) {
      p.push(xs[i], static_cast<double>(i) / n);
      p.push(xs[i], i + 1 == xs.size() ? 1.0 : static_cast<double>(i + 1) / n);
    }
    p.push(1.0, 1.0);
    return p;
  }

  CirclePolyline swapped() const {
    CirclePolyline p;
    p.u_ = v_;
    p.v_ = u_;
    return p;
  }

  std::span<const double> knots() const { return u_; }

  /// Value just right of x (x in [0,1]).
  double right(double x) const {
    if (x >= u_.back()) return v_.back();
    const auto k = static_cast<std::size_t>(std::upper_bound(u_.begin(), u_.end(), x) - u_.begin());
    return lerp(k - 1, k, x);
  }

  /// Value just left of x (x in [0,1]).
  double left(double x) const {
    if (x <= u_.front()) return v_.front();
    const auto k = static_cast<std::size_t>(std::lower_bound(u_.begin(), u_.end(), x) - u_.begin());
    return lerp(k - 1, k, x);
  }

  /// Periodic lift: f(x + n) = f(x) + n.
  double right_lifted(double x) const {
    const double n = std::floor(x);
    return right(x - n) + n;
  }
  double left_lifted(double x) const {
    double n = std::floor(x);
    if (x - n == 0.0) n -= 1.0;  // left limit at an integer comes from the previous period
    return left(x - n) + n;
  }

 private:
  void push(double u, double v) {
    u_.push_back(u);
    v_.push_back(v);
  }

  double lerp(std::size_t a, std::size_t b, double x) const {
    const double du = u_[b] - u_[a];
    if (du <= 0.0) return v_[b];
    const double f = (x - u_[a]) / du;
    return v_[a] + f * (v_[b] - v_[a]);
  }

  std::vector<double> u_;
  std::vector<double> v_;
};

namespace detail {

/// A linear function on an interval of the given length.
struct LinearPiece {
  double length;
  double start;
  double end;
};

/// \int |f| over a linear piece.
inline double abs_integral(const LinearPiece& p) {
  const double a = p.start, b = p.end;
  if ((a >= 0.0 && b >= 0.0) || (a <= 0.0 && b <= 0.0)) return p.length * std::abs(a + b) * 0.5;
  return p.length * (a * a + b * b) / (2.0 * (std::abs(a) + std::abs(b)));
}

/// Lebesgue measure of {f <= level} over the pieces.
inline double sublevel_measure(std::span<const LinearPiece> pieces, double level) {
  double m = 0.0;
  for (const auto& p : pieces) {
    const double lo = std::min(p.start, p.end), hi = std::max(p.start, p.end);
    if (level >= hi) {
      m += p.length;
    } else if (level > lo) {
      m += p.length * (level - lo) / (hi - lo);
    }
  }
  return m;
}

inline std::vector<double> merged_breaks(std::span<const double> a, std::span<const double> b) {
  std::vector<double> xs;
  xs.reserve(a.size() + b.size());
  xs.insert(xs.end(), a.begin(), a.end());
  xs.insert(xs.end(), b.begin(), b.end());
  std::sort(xs.begin(), xs.end());
  xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
  return xs;
}

inline double w1_from_cdfs(const CirclePolyline& f, const CirclePolyline& g) {
  const auto xs = merged_breaks(f.knots(), g.knots());
  std::vector<LinearPiece> pieces;
  pieces.reserve(xs.size());
  double lo = 0.0, hi = 0.0;
  for (std::size_t i = 0; i + 1 < xs.size(); ++i) {
    const double a = xs[i], b = xs[i + 1];
    if (b <= a) continue;
    LinearPiece p{b - a, f.right(a) - g.right(a), f.left(b) - g.left(b)};
    lo = std::min({lo, p.start, p.end});
    hi = std::max({hi, p.start, p.end});
    pieces.push_back(p);
  }
  // the optimal offset is a median of F - G under Lebesgue measure
  for (int it = 0; it < 200 && hi - lo > 1e-15; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sublevel_measure(pieces, mid) < 0.5) lo = mid; else hi = mid;
  }
  const double level = 0.5 * (lo + hi);
  double total = 0.0;
  for (auto p : pieces) {
    p.start -= level;
    p.end -= level;
    total += abs_integral(p);
  }
  return total;
}

/// \int_0^1 |Q_F(s) - Q_G~(s + shift)|^2 ds, exact over linear pieces.
inline double quantile_cost(const CirclePolyline& qf, const CirclePolyline& qg, double shift) {
  std::vector<double> breaks(qf.knots().begin(), qf.knots().end());
  const int n_lo = static_cast<int>(std::floor(shift)) - 1;
  for (int n = n_lo; n <= n_lo + 3; ++n) {
    for (double s : qg.knots()) {
      const double x = s + n - shift;
      if (x > 0.0 && x < 1.0) breaks.push_back(x);
    }
  }
  std::sort(breaks.begin(), breaks.end());
  breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
  // Both quantiles are linear between breaks. Sampling at the quarter points
  // keeps a rounded break from landing on the wrong side of a jump.
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < breaks.size(); ++i) {
    const double a = breaks[i], b = breaks[i + 1];
    if (b <= a) continue;
    const double s1 = a + 0.25 * (b - a), s3 = a + 0.75 * (b - a);
    const double e1 = qf.right(s1) - qg.right_lifted(s1 + shift);
    const double e3 = qf.right(s3) - qg.right_lifted(s3 + shift);
    const double d0 = 1.5 * e1 - 0.5 * e3, d1 = 1.5 * e3 - 0.5 * e1;
    total += (b - a) * (d0 * d0 + d0 * d1 + d1 * d1) / 3.0;
  }
  return total;
}

inline double w2_from_cdfs(const CirclePolyline& f, const CirclePolyline& g) {
  const auto qf = f.swapped();
  const auto qg = g.swapped();
  auto cost = [&](double t) { return quantile_cost(qf, qg, t); };

  // the objective is convex in t, so a coarse scan only narrows the bracket
  const std::size_t candidates = 64;
  const double step = 2.0 / static_cast<double>(candidates);
  double best_t = -1.0, best = cost(-1.0);
  for (std::size_t i = 1; i <= candidates; ++i) {
    const double t = -1.0 + step * static_cast<double>(i);
    const double c = cost(t);
    if (c < best) {
      best = c;
      best_t = t;
    }
  }
  // golden-section refinement inside the bracketing cells
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = best_t - step, b = best_t + step;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = cost(c), fd = cost(d);
  for (int it = 0; it < 100 && b - a > 1e-14; ++it) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = cost(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = cost(d);
    }
  }
  best = std::min({best, fc, fd});
  return std::sqrt(std::max(best, 0.0));
}

inline double wasserstein_dispatch(const CirclePolyline& f, const CirclePolyline& g, int order) {
  detail::require(order == 1 || order == 2, "wasserstein: order must be 1 or 2");
  return order == 1 ? w1_from_cdfs(f, g) : w2_from_cdfs(f, g);
}

}  // namespace detail

inline double wasserstein_circle(const GridMeasure& p, const GridMeasure& q, int order) {
  return detail::wasserstein_dispatch(CirclePolyline::cdf(p), CirclePolyline::cdf(q), order);
}

inline double wasserstein_circle(const EmpiricalMeasure& p, const EmpiricalMeasure& q, int order) {
  return detail::wasserstein_dispatch(CirclePolyline::cdf(p), CirclePolyline::cdf(q), order);
}

/// Point cloud against a grid density, without binning the points.
inline double wasserstein_circle(const EmpiricalMeasure& p, const GridMeasure& q, int order) {
  return detail::wasserstein_dispatch(CirclePolyline::cdf(p), CirclePolyline::cdf(q), order);
}

}  // namespace mfc
