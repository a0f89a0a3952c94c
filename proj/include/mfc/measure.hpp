#pragma once

// Probability measures on the unit torus [0,1): densities on a uniform cell
// grid, products of two such grids, and finite point clouds.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/parallel.hpp"

namespace mfc {

inline constexpr double default_density_floor = 1e-12;

/// Wraps a coordinate into [0, 1).
inline double wrap_unit(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0) y = 0.0;  // guards x = -tiny, where 1 - tiny rounds to 1
  return y;
}

/// Signed shortest displacement from b to a on the unit circle, in [-1/2, 1/2).
inline double circle_displacement(double a, double b) {
  double d = a - b;
  d -= std::floor(d + 0.5);
  return d;
}

class GridMeasure {
 public:
  GridMeasure() = default;

  /// Takes a nonnegative density and rescales it so that h * sum = 1.
  explicit GridMeasure(std::vector<double> density) : density_(std::move(density)) {
    detail::require(!density_.empty(), "grid measure: no cells");
    double total = 0.0;
    for (double v : density_) {
      detail::require(std::isfinite(v) && v >= 0.0, "grid measure: density must be finite and nonnegative");
      total += v;
    }
    detail::require(total > 0.0, "grid measure: zero mass");
    const double scale = static_cast<double>(density_.size()) / total;
    for (double& v : density_) v *= scale;
  }

  static GridMeasure uniform(int cells) {
    detail::require(cells >= 1, "grid measure: no cells");
    return GridMeasure(std::vector<double>(static_cast<std::size_t>(cells), 1.0));
  }

  int cells() const { return static_cast<int>(density_.size()); }
  double cell_width() const { return 1.0 / static_cast<double>(density_.size()); }
  double center(int j) const { return (j + 0.5) * cell_width(); }
  std::span<const double> density() const { return density_; }
  double operator[](std::size_t j) const { return density_[j]; }

  double mass() const { return cell_width() * pairwise_sum(density_); }

 private:
  std::vector<double> density_;
};

/// Density on the M x M product torus, row-major: index = i * M + j with i
/// the first coordinate and j the second.
class GridMeasure2 {
 public:
  GridMeasure2() = default;

  GridMeasure2(int cells, std::vector<double> density) : cells_(cells), density_(std::move(density)) {
    detail::require(cells >= 1, "grid measure: no cells");
    detail::require(density_.size() == static_cast<std::size_t>(cells) * static_cast<std::size_t>(cells),
                    "grid measure 2: density must have M*M entries");
    double total = 0.0;
    for (double v : density_) {
      detail::require(std::isfinite(v) && v >= 0.0, "grid measure 2: density must be finite and nonnegative");
      total += v;
    }
    detail::require(total > 0.0, "grid measure 2: zero mass");
    const double scale = static_cast<double>(density_.size()) / total;
    for (double& v : density_) v *= scale;
  }

  static GridMeasure2 product(const GridMeasure& a, const GridMeasure& b) {
    detail::require(a.cells() == b.cells(), "product: cell counts differ");
    const int m = a.cells();
    std::vector<double> d(static_cast<std::size_t>(m) * static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) d[static_cast<std::size_t>(i * m + j)] = a[static_cast<std::size_t>(i)] * b[static_cast<std::size_t>(j)];
    return GridMeasure2(m, std::move(d));
  }

  int cells() const { return cells_; }
  double cell_width() const { return 1.0 / cells_; }
  std::span<const double> density() const { return density_; }
  double at(int i, int j) const { return density_[static_cast<std::size_t>(i * cells_ + j)]; }

 private:
  int cells_ = 0;
  std::vector<double> density_;
};

class EmpiricalMeasure {
 public:
  EmpiricalMeasure() = default;

  explicit EmpiricalMeasure(std::vector<double> points) : points_(std::move(points)) {
    detail::require(!points_.empty(), "empirical measure: needs at least one point");
    for (double x : points_) detail::require(x >= 0.0 && x < 1.0, "empirical measure: points must lie in [0,1)");
  }

  std::size_t size() const { return points_.size(); }
  std::span<const double> points() const { return points_; }

 private:
  std::vector<double> points_;
};

namespace detail {

inline double xlogx(double v) { return v > 0.0 ? v * std::log(v) : 0.0; }

}  // namespace detail

// ---------------------------------------------------------------- functionals

inline double entropy(std::span<const double> density, double h) {
  std::vector<double> terms(density.size());
  for (std::size_t j = 0; j < density.size(); ++j) terms[j] = detail::xlogx(density[j]);
  return h * pairwise_sum(terms);
}

inline double entropy(const GridMeasure& mu) { return entropy(mu.density(), mu.cell_width()); }

/// Periodic central difference (rho_{j+1} - rho_{j-1}) / 2h.
inline void central_difference(std::span<const double> f, double h, std::span<double> out) {
  const std::size_t m = f.size();
  const double inv = 0.5 / h;
  for (std::size_t j = 0; j < m; ++j) out[j] = (f[(j + 1) % m] - f[(j + m - 1) % m]) * inv;
}

inline std::vector<double> central_difference(std::span<const double> f, double h) {
  std::vector<double> out(f.size());
  central_difference(f, h, out);
  return out;
}

inline double fisher_information(std::span<const double> density, double h, double floor = default_density_floor) {
  detail::require(floor > 0.0, "fisher information: floor must be positive");
  const auto d = central_difference(density, h);
  std::vector<double> terms(density.size());
  for (std::size_t j = 0; j < density.size(); ++j) terms[j] = d[j] * d[j] / std::max(density[j], floor);
  return h * pairwise_sum(terms);
}

inline double fisher_information(const GridMeasure& mu, double floor = default_density_floor) {
  return fisher_information(mu.density(), mu.cell_width(), floor);
}

/// KL(p | q); +infinity when p charges a cell that q does not.
inline double kl_grid(std::span<const double> p, std::span<const double> q, double h) {
  detail::require(p.size() == q.size(), "kl: cell counts differ");
  std::vector<double> terms(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    if (p[j] <= 0.0) {
      terms[j] = 0.0;
    } else if (q[j] <= 0.0) {
      return std::numeric_limits<double>::infinity();
    } else {
      terms[j] = p[j] * std::log(p[j] / q[j]);
    }
  }
  return h * pairwise_sum(terms);
}

inline double kl_grid(const GridMeasure& p, const GridMeasure& q) {
  detail::require(p.cells() == q.cells(), "kl: cell counts differ");
  return kl_grid(p.density(), q.density(), p.cell_width());
}

inline double entropy(const GridMeasure2& mu) { return entropy(mu.density(), mu.cell_width() * mu.cell_width()); }

/// Fisher information on the product torus: sum over both axes.
inline double fisher_information(const GridMeasure2& mu, double floor = default_density_floor) {
  detail::require(floor > 0.0, "fisher information: floor must be positive");
  const int m = mu.cells();
  const double h = mu.cell_width();
  const double inv = 0.5 / h;
  std::vector<double> terms(mu.density().size());
  for (int i = 0; i < m; ++i) {
    const int ip = (i + 1) % m, im = (i + m - 1) % m;
    for (int j = 0; j < m; ++j) {
      const int jp = (j + 1) % m, jm = (j + m - 1) % m;
      const double d1 = (mu.at(ip, j) - mu.at(im, j)) * inv;
      const double d2 = (mu.at(i, jp) - mu.at(i, jm)) * inv;
      terms[static_cast<std::size_t>(i * m + j)] = (d1 * d1 + d2 * d2) / std::max(mu.at(i, j), floor);
    }
  }
  return h * h * pairwise_sum(terms);
}

/// Marginal along axis 0 (first coordinate) or 1 (second coordinate).
inline GridMeasure marginal(const GridMeasure2& mu, int axis) {
  detail::require(axis == 0 || axis == 1, "marginal: axis must be 0 or 1");
  const int m = mu.cells();
  std::vector<double> out(static_cast<std::size_t>(m), 0.0);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(axis == 0 ? i : j)] += mu.at(i, j);
  for (double& v : out) v *= mu.cell_width();
  return GridMeasure(std::move(out));
}

/// Average of the density and its image under the coordinate swap.
inline GridMeasure2 symmetrize_pair(const GridMeasure2& mu) {
  const int m = mu.cells();
  std::vector<double> out(mu.density().size());
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(i * m + j)] = 0.5 * (mu.at(i, j) + mu.at(j, i));
  return GridMeasure2(m, std::move(out));
}

inline int cell_of(double x, int cells) {
  const int j = static_cast<int>(std::floor(x * cells));
  return std::clamp(j, 0, cells - 1);
}

/// Histogram density of a point cloud.
inline GridMeasure bin_empirical(const EmpiricalMeasure& emp, int cells) {
  detail::require(cells >= 2, "bin_empirical: need at least two cells");
  std::vector<double> counts(static_cast<std::size_t>(cells), 0.0);
  for (double x : emp.points()) counts[static_cast<std::size_t>(cell_of(x, cells))] += 1.0;
  return GridMeasure(std::move(counts));
}

// ---------------------------------------------------------------- initial data

/// Closed-form initial and target densities.
struct DensitySpec {
  enum class Kind { uniform, wrapped_gaussian, cosine_bump, tabulated };
  Kind kind = Kind::uniform;
  double mean = 0.5;
  double sd = 0.1;         // wrapped_gaussian
  double amplitude = 0.0;  // cosine_bump: 1 + amplitude * cos(2 pi (x - mean)), |amplitude| < 1
  std::vector<double> values;  // tabulated: cell densities, used only at matching resolution

  static DensitySpec gaussian(double mean, double sd) { return {Kind::wrapped_gaussian, mean, sd, 0.0, {}}; }
  static DensitySpec table(const GridMeasure& mu) {
    return {Kind::tabulated, 0.5, 0.1, 0.0, std::vector<double>(mu.density().begin(), mu.density().end())};
  }
};

/// Cell averages of the wrapped normal density.
inline GridMeasure wrapped_gaussian(int cells, double mean, double sd) {
  detail::require(cells >= 1 && sd > 0.0, "wrapped gaussian: invalid parameters");
  const double h = 1.0 / cells;
  const int images = static_cast<int>(std::ceil(10.0 * sd)) + 2;
  auto cdf = [&](double x) {
    double s = 0.0;
    for (int k = -images; k <= images; ++k) s += 0.5 * std::erfc(-(x - mean + k) / (sd * std::numbers::sqrt2));
    return s;
  };
  std::vector<double> d(static_cast<std::size_t>(cells));
  double left = cdf(0.0);
  for (int j = 0; j < cells; ++j) {
    const double right = cdf((j + 1) * h);
    d[static_cast<std::size_t>(j)] = std::max(right - left, 0.0) / h;
    left = right;
  }
  return GridMeasure(std::move(d));
}

inline GridMeasure discretize(const DensitySpec& spec, int cells) {
  switch (spec.kind) {
    case DensitySpec::Kind::uniform:
      return GridMeasure::uniform(cells);
    case DensitySpec::Kind::wrapped_gaussian:
      return wrapped_gaussian(cells, spec.mean, spec.sd);
    case DensitySpec::Kind::cosine_bump: {
      detail::require(std::abs(spec.amplitude) < 1.0, "cosine bump: amplitude must be below 1 in magnitude");
      const double h = 1.0 / cells;
      const double w = 2.0 * std::numbers::pi;
      std::vector<double> d(static_cast<std::size_t>(cells));
      for (int j = 0; j < cells; ++j) {
        // exact cell average of the cosine
        const double a = j * h - spec.mean, b = (j + 1) * h - spec.mean;
        d[static_cast<std::size_t>(j)] = 1.0 + spec.amplitude * (std::sin(w * b) - std::sin(w * a)) / (w * h);
      }
      return GridMeasure(std::move(d));
    }
    case DensitySpec::Kind::tabulated:
      detail::require(static_cast<int>(spec.values.size()) == cells, "tabulated density: resolution mismatch");
      return GridMeasure(spec.values);
  }
  throw Error(ErrorCode::invalid_argument, "unknown density kind");
}

}  // namespace mfc
