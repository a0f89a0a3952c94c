#pragma once

// Finite Fourier series on the unit torus and convolutions of such series
// against grid and empirical measures.
//
//   f(z) = sum_k  a_k cos(2 pi k z) + b_k sin(2 pi k z),   k >= 0
//
// Convolution against a measure only needs its Fourier moments
//   c_k = \int cos(2 pi k y) mu(dy),  s_k = \int sin(2 pi k y) mu(dy)
// which makes grid and particle evaluation exact and O(#modes) per point.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "mfc/errors.hpp"

namespace mfc {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

struct TrigTerm {
  int k = 0;
  double a = 0.0;  // cosine coefficient
  double b = 0.0;  // sine coefficient
};

class TrigSeries {
 public:
  TrigSeries() = default;

  explicit TrigSeries(std::vector<TrigTerm> terms) {
    for (const auto& t : terms) {
      detail::require(t.k >= 0, "trig series: negative wavenumber");
      detail::require(std::isfinite(t.a) && std::isfinite(t.b), "trig series: non-finite coefficient");
      add(t.k, t.a, t.k == 0 ? 0.0 : t.b);
    }
  }

  static TrigSeries constant(double c) { return TrigSeries({{0, c, 0.0}}); }
  static TrigSeries cosine(int k, double a) { return TrigSeries({{k, a, 0.0}}); }
  static TrigSeries sine(int k, double b) { return TrigSeries({{k, 0.0, b}}); }

  const std::vector<TrigTerm>& terms() const { return terms_; }
  bool is_zero() const { return terms_.empty(); }
  int max_k() const { return terms_.empty() ? 0 : terms_.back().k; }

  double constant_term() const {
    return (!terms_.empty() && terms_.front().k == 0) ? terms_.front().a : 0.0;
  }

  double cos_coefficient(int k) const {
    for (const auto& t : terms_)
      if (t.k == k) return t.a;
    return 0.0;
  }

  /// Sum of absolute coefficients; bounds sup |f|.
  double abs_sum() const {
    double s = 0.0;
    for (const auto& t : terms_) s += std::abs(t.a) + std::abs(t.b);
    return s;
  }

  double operator()(double x) const {
    double v = 0.0;
    for (const auto& t : terms_) {
      const double arg = two_pi * t.k * x;
      v += t.a * std::cos(arg) + t.b * std::sin(arg);
    }
    return v;
  }

  TrigSeries derivative() const {
    TrigSeries d;
    for (const auto& t : terms_) {
      if (t.k == 0) continue;
      const double w = two_pi * t.k;
      d.add(t.k, w * t.b, -w * t.a);
    }
    return d;
  }

  /// Zero-mean antiderivative; requires a vanishing constant term.
  TrigSeries antiderivative() const {
    detail::require(constant_term() == 0.0, "trig series: antiderivative needs zero mean");
    TrigSeries p;
    for (const auto& t : terms_) {
      const double w = two_pi * t.k;
      p.add(t.k, -t.b / w, t.a / w);
    }
    return p;
  }

  /// z -> f(-z)
  TrigSeries reflected() const {
    TrigSeries r;
    for (const auto& t : terms_) r.add(t.k, t.a, -t.b);
    return r;
  }

  TrigSeries scaled(double factor) const {
    TrigSeries r;
    for (const auto& t : terms_) r.add(t.k, factor * t.a, factor * t.b);
    return r;
  }

  friend TrigSeries operator+(const TrigSeries& lhs, const TrigSeries& rhs) {
    TrigSeries r = lhs;
    for (const auto& t : rhs.terms_) r.add(t.k, t.a, t.b);
    return r;
  }

 private:
  void add(int k, double a, double b) {
    auto it = std::lower_bound(terms_.begin(), terms_.end(), k,
                               [](const TrigTerm& t, int key) { return t.k < key; });
    if (it != terms_.end() && it->k == k) {
      it->a += a;
      it->b += b;
      if (it->a == 0.0 && it->b == 0.0) terms_.erase(it);
    } else if (a != 0.0 || b != 0.0) {
      terms_.insert(it, TrigTerm{k, a, b});
    }
  }

  std::vector<TrigTerm> terms_;  // sorted by k, unique, no all-zero terms
};

/// Fourier moments c_k, s_k for k = 0..max_k.
struct Moments {
  std::vector<double> c;
  std::vector<double> s;

  int max_k() const { return static_cast<int>(c.size()) - 1; }
};

/// Cos/sin of 2 pi k x_j at the cell centres x_j = (j + 1/2) h.
class TrigTable {
 public:
  TrigTable() = default;

  TrigTable(int cells, int max_k) : cells_(cells), max_k_(std::max(max_k, 0)) {
    detail::require(cells >= 1, "trig table: need at least one cell");
    const auto size = static_cast<std::size_t>((max_k_ + 1) * cells_);
    cos_.resize(size);
    sin_.resize(size);
    const double h = 1.0 / cells_;
    for (int k = 0; k <= max_k_; ++k) {
      for (int j = 0; j < cells_; ++j) {
        const double arg = two_pi * k * (j + 0.5) * h;
        cos_[index(k, j)] = std::cos(arg);
        sin_[index(k, j)] = std::sin(arg);
      }
    }
  }

  int cells() const { return cells_; }
  int max_k() const { return max_k_; }
  double cos(int k, int j) const { return cos_[index(k, j)]; }
  double sin(int k, int j) const { return sin_[index(k, j)]; }

  /// Moments of the grid measure with density rho (point masses h*rho_j at centres).
  Moments moments(std::span<const double> rho, int max_k) const {
    detail::require(max_k <= max_k_, "trig table: wavenumber beyond table");
    Moments m;
    m.c.assign(static_cast<std::size_t>(max_k + 1), 0.0);
    m.s.assign(static_cast<std::size_t>(max_k + 1), 0.0);
    const double h = 1.0 / cells_;
    for (int k = 0; k <= max_k; ++k) {
      double c = 0.0, s = 0.0;
      const double* ck = &cos_[index(k, 0)];
      const double* sk = &sin_[index(k, 0)];
      for (int j = 0; j < cells_; ++j) {
        c += ck[j] * rho[static_cast<std::size_t>(j)];
        s += sk[j] * rho[static_cast<std::size_t>(j)];
      }
      m.c[static_cast<std::size_t>(k)] = h * c;
      m.s[static_cast<std::size_t>(k)] = h * s;
    }
    return m;
  }

  /// out_j = f(x_j)
  void sample(const TrigSeries& f, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    for (const auto& t : f.terms()) {
      detail::require(t.k <= max_k_, "trig table: wavenumber beyond table");
      for (int j = 0; j < cells_; ++j) out[static_cast<std::size_t>(j)] += t.a * cos(t.k, j) + t.b * sin(t.k, j);
    }
  }

  std::vector<double> sample(const TrigSeries& f) const {
    std::vector<double> out(static_cast<std::size_t>(cells_));
    sample(f, out);
    return out;
  }

  /// out_j = (f * mu)(x_j) given the moments of mu.
  void convolve(const TrigSeries& f, const Moments& m, std::span<double> out, bool accumulate = false) const {
    if (!accumulate) std::fill(out.begin(), out.end(), 0.0);
    for (const auto& t : f.terms()) {
      detail::require(t.k <= m.max_k() && t.k <= max_k_, "convolve: moments too short");
      const double ck = m.c[static_cast<std::size_t>(t.k)];
      const double sk = m.s[static_cast<std::size_t>(t.k)];
      // a cos(k(x-y)) + b sin(k(x-y)) integrated against mu
      const double alpha = t.a * ck - t.b * sk;  // multiplies cos(2 pi k x)
      const double beta = t.a * sk + t.b * ck;   // multiplies sin(2 pi k x)
      for (int j = 0; j < cells_; ++j) out[static_cast<std::size_t>(j)] += alpha * cos(t.k, j) + beta * sin(t.k, j);
    }
  }

  /// out_j = h sum_i f(x_j - x_i) rho_i
  void convolve(const TrigSeries& f, std::span<const double> rho, std::span<double> out, bool accumulate = false) const {
    if (f.is_zero()) {
      if (!accumulate) std::fill(out.begin(), out.end(), 0.0);
      return;
    }
    convolve(f, moments(rho, f.max_k()), out, accumulate);
  }

  /// Transpose of the grid convolution operator: out_i = h sum_j f(x_j - x_i) y_j.
  void convolve_transpose(const TrigSeries& f, std::span<const double> y, std::span<double> out,
                          bool accumulate = false) const {
    convolve(f.reflected(), y, out, accumulate);
  }

 private:
  std::size_t index(int k, int j) const { return static_cast<std::size_t>(k * cells_ + j); }

  int cells_ = 0;
  int max_k_ = 0;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

/// Evaluates (f * mu)(x) from moments.
inline double convolve_at(const TrigSeries& f, const Moments& m, double x) {
  double v = 0.0;
  for (const auto& t : f.terms()) {
    detail::require(t.k <= m.max_k(), "convolve_at: moments too short");
    const double ck = m.c[static_cast<std::size_t>(t.k)];
    const double sk = m.s[static_cast<std::size_t>(t.k)];
    const double arg = two_pi * t.k * x;
    v += (t.a * ck - t.b * sk) * std::cos(arg) + (t.a * sk + t.b * ck) * std::sin(arg);
  }
  return v;
}

/// Per-point cos/sin(2 pi k x_i), k = 0..max_k, filled by angle-addition recurrence.
class PointTrig {
 public:
  PointTrig() = default;

  void reset(std::span<const double> points, int max_k) {
    n_ = points.size();
    max_k_ = std::max(max_k, 0);
    cos_.resize(n_ * static_cast<std::size_t>(max_k_ + 1));
    sin_.resize(cos_.size());
    for (std::size_t i = 0; i < n_; ++i) {
      const double arg = two_pi * points[i];
      const double c1 = std::cos(arg), s1 = std::sin(arg);
      double c = 1.0, s = 0.0;
      for (int k = 0; k <= max_k_; ++k) {
        cos_[idx(k, i)] = c;
        sin_[idx(k, i)] = s;
        const double cn = c * c1 - s * s1;
        s = s * c1 + c * s1;
        c = cn;
      }
    }
  }

  std::size_t size() const { return n_; }
  double cos(int k, std::size_t i) const { return cos_[idx(k, i)]; }
  double sin(int k, std::size_t i) const { return sin_[idx(k, i)]; }

  /// Moments of the empirical measure (1/N) sum delta_{x_i}.
  Moments moments(int max_k) const {
    detail::require(max_k <= max_k_, "point trig: wavenumber beyond table");
    Moments m;
    m.c.assign(static_cast<std::size_t>(max_k + 1), 0.0);
    m.s.assign(static_cast<std::size_t>(max_k + 1), 0.0);
    const double inv = n_ == 0 ? 0.0 : 1.0 / static_cast<double>(n_);
    for (int k = 0; k <= max_k; ++k) {
      double c = 0.0, s = 0.0;
      for (std::size_t i = 0; i < n_; ++i) {
        c += cos_[idx(k, i)];
        s += sin_[idx(k, i)];
      }
      m.c[static_cast<std::size_t>(k)] = c * inv;
      m.s[static_cast<std::size_t>(k)] = s * inv;
    }
    return m;
  }

  /// f(x_i)
  double sample(const TrigSeries& f, std::size_t i) const {
    double v = 0.0;
    for (const auto& t : f.terms()) v += t.a * cos(t.k, i) + t.b * sin(t.k, i);
    return v;
  }

  /// (f * mu)(x_i) given moments of mu.
  double convolve(const TrigSeries& f, const Moments& m, std::size_t i) const {
    double v = 0.0;
    for (const auto& t : f.terms()) {
      const double ck = m.c[static_cast<std::size_t>(t.k)];
      const double sk = m.s[static_cast<std::size_t>(t.k)];
      v += (t.a * ck - t.b * sk) * cos(t.k, i) + (t.a * sk + t.b * ck) * sin(t.k, i);
    }
    return v;
  }

 private:
  std::size_t idx(int k, std::size_t i) const { return static_cast<std::size_t>(k) * n_ + i; }

  std::size_t n_ = 0;
  int max_k_ = 0;
  std::vector<double> cos_;
  std::vector<double> sin_;
};

}  // namespace mfc
