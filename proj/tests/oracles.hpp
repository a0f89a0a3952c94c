#pragma once

// Reference computations used by the tests. Each one is written from the
// defining formula and shares no code with the library beyond its data types.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

/// h * sum rho ln rho from cell masses.
inline double entropy_from_masses(const std::vector<double>& masses) {
  const double h = 1.0 / static_cast<double>(masses.size());
  double s = 0.0;
  for (double m : masses) {
    const double rho = m / h;
    if (rho > 0.0) s += h * rho * std::log(rho);
  }
  return s;
}

inline double gaussian_entropy(double sd) { return -0.5 * std::log(2.0 * pi * std::numbers::e * sd * sd); }

inline double gaussian_kl(double sd_p, double sd_q) {
  return std::log(sd_q / sd_p) + sd_p * sd_p / (2.0 * sd_q * sd_q) - 0.5;
}

inline double arc(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

/// Circular W_p between equal-size point sets: every cyclic assignment of the
/// sorted points, in both orientations.
inline double circle_wasserstein_brute(std::vector<double> a, std::vector<double> b, int order) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const std::size_t n = a.size();
  double best = INFINITY;
  for (int orient = 0; orient < 2; ++orient) {
    for (std::size_t s = 0; s < n; ++s) {
      double cost = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = orient == 0 ? (i + s) % n : (s + n - i) % n;
        cost += std::pow(arc(a[i], b[j]), order);
      }
      best = std::min(best, cost / static_cast<double>(n));
    }
  }
  return std::pow(best, 1.0 / order);
}

/// \int cos(2 pi k x) dmu_t along the heat flow d_t rho = rho_xx started at a
/// wrapped normal (mean m, sd s): exp(-2 pi^2 k^2 (s^2 + 2t)) cos(2 pi k m).
inline double heat_cos_moment(int k, double mean, double sd, double t) {
  const double w = 2.0 * pi * k;
  return std::exp(-0.5 * w * w * (sd * sd + 2.0 * t)) * std::cos(w * mean);
}

/// \int_0^T \int a cos(2 pi k x) mu_t(dx) dt by Gauss-Legendre on [0, T].
inline double heat_potential_integral(double a, int k, double mean, double sd, double horizon) {
  static constexpr double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                      0.9061798459386640};
  static constexpr double weights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                        0.4786286704993665, 0.2369268850561891};
  constexpr int panels = 64;
  const double width = horizon / panels;
  double s = 0.0;
  for (int p = 0; p < panels; ++p)
    for (int q = 0; q < 5; ++q) {
      const double t = width * (p + 0.5 * (nodes[q] + 1.0));
      s += 0.5 * width * weights[q] * a * heat_cos_moment(k, mean, sd, t);
    }
  return s;
}

/// Circular variance proxy -ln|E e^{2 pi i x}| / (2 pi^2), exact for wrapped normals.
inline double circular_variance(const std::vector<double>& density) {
  const double h = 1.0 / static_cast<double>(density.size());
  double c = 0.0, s = 0.0;
  for (std::size_t j = 0; j < density.size(); ++j) {
    // cell average of cos and sin for an exact wrapped-normal moment
    const double a = 2.0 * pi * j * h, b = 2.0 * pi * (j + 1) * h;
    c += density[j] * (std::sin(b) - std::sin(a)) / (2.0 * pi);
    s += density[j] * (std::cos(a) - std::cos(b)) / (2.0 * pi);
  }
  return -std::log(std::hypot(c, s)) / (2.0 * pi * pi);
}

/// Index shift maximizing the cyclic cross-correlation sum_j f[j] g[j + s].
inline int correlation_peak(const std::vector<double>& f, const std::vector<double>& g) {
  const int m = static_cast<int>(f.size());
  int best = 0;
  double top = -INFINITY;
  for (int s = 0; s < m; ++s) {
    double c = 0.0;
    for (int j = 0; j < m; ++j) c += f[static_cast<std::size_t>(j)] * g[static_cast<std::size_t>((j + s) % m)];
    if (c > top) {
      top = c;
      best = s;
    }
  }
  return best;
}

/// Smooth strictly positive random density on M cells (3 Fourier modes).
inline std::vector<double> smooth_density(int cells, std::uint64_t seed, double depth = 0.6) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  double c[3], s[3];
  for (int q = 0; q < 3; ++q) {
    c[q] = u(rng);
    s[q] = u(rng);
  }
  std::vector<double> d(static_cast<std::size_t>(cells));
  double lo = INFINITY;
  for (int j = 0; j < cells; ++j) {
    const double x = (j + 0.5) / cells;
    double v = 0.0;
    for (int q = 0; q < 3; ++q) v += (c[q] * std::cos(2 * pi * (q + 1) * x) + s[q] * std::sin(2 * pi * (q + 1) * x)) / (q + 1);
    d[static_cast<std::size_t>(j)] = v;
    lo = std::min(lo, v);
  }
  double hi = -INFINITY;
  for (double v : d) hi = std::max(hi, v - lo);
  double total = 0.0;
  for (double& v : d) {
    v = (1.0 - depth) + depth * (v - lo) / std::max(hi, 1e-12);
    total += v;
  }
  for (double& v : d) v *= cells / total;
  return d;
}

/// Smooth positive 2-D density (not a product) on an M x M grid, row-major.
inline std::vector<double> smooth_density2(int cells, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.3, 0.3);
  const double a = u(rng), b = u(rng), c = u(rng), d = u(rng), e = u(rng);
  std::vector<double> out(static_cast<std::size_t>(cells * cells));
  double total = 0.0;
  for (int i = 0; i < cells; ++i)
    for (int j = 0; j < cells; ++j) {
      const double x = (i + 0.5) / cells, y = (j + 0.5) / cells;
      const double v = 1.0 + a * std::cos(2 * pi * x) + b * std::sin(2 * pi * y) + c * std::cos(2 * pi * (x - y)) +
                       d * std::sin(2 * pi * (x + 2 * y)) + e * std::cos(4 * pi * x);
      out[static_cast<std::size_t>(i * cells + j)] = v;
      total += v;
    }
  for (double& v : out) v *= cells * cells / total;
  return out;
}

/// U(rho) = h^2 sum_ij v(x_i - x_j) rho_i rho_j by direct double sum.
inline double pair_energy(const std::function<double(double)>& v, const std::vector<double>& rho) {
  const int m = static_cast<int>(rho.size());
  const double h = 1.0 / m;
  double s = 0.0;
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) s += v((i - j) * h) * rho[static_cast<std::size_t>(i)] * rho[static_cast<std::size_t>(j)];
  return h * h * s;
}

/// Gradient in x of the first variation of U at the cell centres, from
/// central differences of U along cell-localized perturbations.
inline std::vector<double> first_variation_gradient(const std::function<double(double)>& v,
                                                    const std::vector<double>& rho, double eps = 1e-4) {
  const int m = static_cast<int>(rho.size());
  const double h = 1.0 / m;
  std::vector<double> dU(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) {
    std::vector<double> plus = rho, minus = rho;
    // unit mass bump at cell j (density 1/h) against a uniform background
    for (int i = 0; i < m; ++i) {
      const double phi = (i == j ? 1.0 / h : 0.0) - 1.0;
      plus[static_cast<std::size_t>(i)] += eps * phi;
      minus[static_cast<std::size_t>(i)] -= eps * phi;
    }
    dU[static_cast<std::size_t>(j)] = (pair_energy(v, plus) - pair_energy(v, minus)) / (2.0 * eps);
  }
  std::vector<double> grad(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j)
    grad[static_cast<std::size_t>(j)] =
        (dU[static_cast<std::size_t>((j + 1) % m)] - dU[static_cast<std::size_t>((j + m - 1) % m)]) / (2.0 * h);
  return grad;
}

}  // namespace oracle
