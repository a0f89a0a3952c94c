#pragma once

// Time-indexed grid data: K+1 snapshots t_k = k * dt on [0, T], each holding
// M cell values. Stored as one contiguous row-major block.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mfc/errors.hpp"
#include "mfc/measure.hpp"

namespace mfc {

struct TimeGrid {
  int steps = 0;  // K
  double horizon = 0.0;

  double dt() const { return horizon / steps; }
  double time(int k) const { return horizon * k / steps; }

  /// Trapezoid weight of node k.
  double weight(int k) const { return (k == 0 || k == steps) ? 0.5 * dt() : dt(); }
};

class GridSeries {
 public:
  GridSeries() = default;
  GridSeries(TimeGrid grid, int cells, double fill = 0.0)
      : grid_(grid), cells_(cells),
        values_(static_cast<std::size_t>(grid.steps + 1) * static_cast<std::size_t>(cells), fill) {
    detail::require(grid.steps >= 1 && grid.horizon > 0.0, "flow: need K >= 1 and T > 0");
    detail::require(cells >= 1, "flow: need at least one cell");
  }

  const TimeGrid& time_grid() const { return grid_; }
  int steps() const { return grid_.steps; }
  int cells() const { return cells_; }
  double horizon() const { return grid_.horizon; }
  double dt() const { return grid_.dt(); }
  double cell_width() const { return 1.0 / cells_; }

  std::span<double> row(int k) { return {values_.data() + offset(k), static_cast<std::size_t>(cells_)}; }
  std::span<const double> row(int k) const { return {values_.data() + offset(k), static_cast<std::size_t>(cells_)}; }

  double& at(int k, int j) { return values_[offset(k) + static_cast<std::size_t>(j)]; }
  double at(int k, int j) const { return values_[offset(k) + static_cast<std::size_t>(j)]; }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  bool same_shape(const GridSeries& other) const {
    return grid_.steps == other.grid_.steps && cells_ == other.cells_ && grid_.horizon == other.grid_.horizon;
  }

  /// Linear interpolation in t and periodic linear interpolation in x
  /// between cell centres.
  double interpolate(double t, double x) const {
    const double s = std::clamp(t / grid_.dt(), 0.0, static_cast<double>(grid_.steps));
    const int k0 = std::min(static_cast<int>(s), grid_.steps - 1);
    const double ft = s - k0;
    const double a = interpolate_row(k0, x);
    if (ft == 0.0) return a;
    return (1.0 - ft) * a + ft * interpolate_row(k0 + 1, x);
  }

  double interpolate_row(int k, double x) const {
    const double u = wrap_unit(x) * cells_ - 0.5;
    const double fl = std::floor(u);
    const double fx = u - fl;
    int j0 = static_cast<int>(fl);
    j0 = ((j0 % cells_) + cells_) % cells_;
    const int j1 = (j0 + 1) % cells_;
    return (1.0 - fx) * at(k, j0) + fx * at(k, j1);
  }

 private:
  std::size_t offset(int k) const { return static_cast<std::size_t>(k) * static_cast<std::size_t>(cells_); }

  TimeGrid grid_;
  int cells_ = 0;
  std::vector<double> values_;
};

/// Densities rho(t_k, x_j); every row is a normalized grid density.
class MeasureFlow : public GridSeries {
 public:
  using GridSeries::GridSeries;

  GridMeasure measure(int k) const { return GridMeasure(std::vector<double>(row(k).begin(), row(k).end())); }
};

enum class FieldKind { control, velocity };

/// Scalar field on the space-time grid, tagged by meaning.
class FieldFlow : public GridSeries {
 public:
  FieldFlow() = default;
  FieldFlow(TimeGrid grid, int cells, FieldKind kind, double fill = 0.0)
      : GridSeries(grid, cells, fill), kind_(kind) {}

  FieldKind kind() const { return kind_; }

 private:
  FieldKind kind_ = FieldKind::control;
};

/// Writes "t,x,value" rows, t outer, 17 significant digits.
inline void write_csv(std::ostream& out, const GridSeries& series) {
  out << "t,x,value\n";
  char buf[96];
  for (int k = 0; k <= series.steps(); ++k) {
    const double t = series.time_grid().time(k);
    for (int j = 0; j < series.cells(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", t, (j + 0.5) * series.cell_width(), series.at(k, j));
      out << buf;
    }
  }
}

}  // namespace mfc
