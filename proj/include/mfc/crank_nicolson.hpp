#pragma once

// Flux-form theta-scheme for  d_t rho = rho_xx - (u rho)_x  on a periodic
// grid, and its exact transpose.
//
//   L(u) rho_j = (rho_{j+1} - 2 rho_j + rho_{j-1}) / h^2
//              - (u_{j+1} rho_{j+1} - u_{j-1} rho_{j-1}) / 2h
//
//   (I - theta dt L(u_new)) rho_new = (I + (1 - theta) dt L(u_old)) rho_old
//
// Column sums of both sides equal one, so mass is conserved exactly.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "mfc/errors.hpp"

namespace mfc {

/// Solves periodic tridiagonal systems
///   sub_j x_{j-1} + diag_j x_j + sup_j x_{j+1} = r_j   (indices mod n)
/// by the Thomas algorithm with a Sherman-Morrison correction for the corners.
class CyclicTridiagonal {
 public:
  void solve(std::span<const double> sub, std::span<const double> diag, std::span<const double> sup,
             std::span<const double> rhs, std::span<double> x) {
    const std::size_t n = diag.size();
    detail::require(n >= 3, "cyclic tridiagonal: need at least three unknowns");
    bb_.resize(n);
    u_.resize(n);
    z_.resize(n);
    cp_.resize(n);
    const double alpha = sub[0];      // row 0, column n-1
    const double beta = sup[n - 1];   // row n-1, column 0
    const double gamma = -diag[0];
    for (std::size_t i = 0; i < n; ++i) bb_[i] = diag[i];
    bb_[0] = diag[0] - gamma;
    bb_[n - 1] = diag[n - 1] - alpha * beta / gamma;

    thomas(sub, sup, rhs, x);
    std::fill(u_.begin(), u_.end(), 0.0);
    u_[0] = gamma;
    u_[n - 1] = beta;
    thomas(sub, sup, u_, z_);
    const double fact = (x[0] + alpha * x[n - 1] / gamma) / (1.0 + z_[0] + alpha * z_[n - 1] / gamma);
    for (std::size_t i = 0; i < n; ++i) x[i] -= fact * z_[i];
  }

 private:
  // Non-periodic solve with the modified diagonal bb_.
  void thomas(std::span<const double> sub, std::span<const double> sup, std::span<const double> r, std::span<double> x) {
    const std::size_t n = bb_.size();
    double denom = bb_[0];
    x[0] = r[0] / denom;
    for (std::size_t i = 1; i < n; ++i) {
      cp_[i - 1] = sup[i - 1] / denom;
      denom = bb_[i] - sub[i] * cp_[i - 1];
      x[i] = (r[i] - sub[i] * x[i - 1]) / denom;
    }
    for (std::size_t i = n - 1; i-- > 0;) x[i] -= cp_[i] * x[i + 1];
  }

  std::vector<double> bb_, u_, z_, cp_;
};

/// One theta-step of the linear advection-diffusion operator on M cells.
class CrankNicolsonStep {
 public:
  CrankNicolsonStep() = default;
  CrankNicolsonStep(int cells, double dt, double theta = 0.5)
      : m_(static_cast<std::size_t>(cells)), h_(1.0 / cells), dt_(dt), theta_(theta),
        sub_(m_), diag_(m_), sup_(m_), rhs_(m_), work_(m_) {
    detail::require(cells >= 3, "theta scheme: need at least three cells");
    detail::require(dt > 0.0 && theta >= 0.5 && theta <= 1.0, "theta scheme: need dt > 0 and theta in [1/2, 1]");
  }

  int cells() const { return static_cast<int>(m_); }
  double dt() const { return dt_; }
  double theta() const { return theta_; }
  double cell_width() const { return h_; }

  /// out = L(u) rho
  void apply(std::span<const double> u, std::span<const double> rho, std::span<double> out) const {
    const double ih2 = 1.0 / (h_ * h_), i2h = 0.5 / h_;
    for (std::size_t j = 0; j < m_; ++j) {
      const std::size_t p = next(j), q = prev(j);
      out[j] = (rho[p] - 2.0 * rho[j] + rho[q]) * ih2 - (u[p] * rho[p] - u[q] * rho[q]) * i2h;
    }
  }

  /// out = L(u)^T lam = lam_xx + u * D_c lam
  void apply_transpose(std::span<const double> u, std::span<const double> lam, std::span<double> out) const {
    const double ih2 = 1.0 / (h_ * h_), i2h = 0.5 / h_;
    for (std::size_t j = 0; j < m_; ++j) {
      const std::size_t p = next(j), q = prev(j);
      out[j] = (lam[p] - 2.0 * lam[j] + lam[q]) * ih2 + u[j] * (lam[p] - lam[q]) * i2h;
    }
  }

  /// out = D_c lam
  void central_difference(std::span<const double> lam, std::span<double> out) const {
    const double i2h = 0.5 / h_;
    for (std::size_t j = 0; j < m_; ++j) out[j] = (lam[next(j)] - lam[prev(j)]) * i2h;
  }

  /// rho_new = P(u_new)^{-1} E(u_old) rho_old
  void advance(std::span<const double> u_old, std::span<const double> u_new, std::span<const double> rho_old,
               std::span<double> rho_new) {
    apply(u_old, rho_old, work_);
    const double ce = (1.0 - theta_) * dt_;
    for (std::size_t j = 0; j < m_; ++j) rhs_[j] = rho_old[j] + ce * work_[j];
    solve_implicit(u_new, rhs_, rho_new);
  }

  /// x = P(u)^{-1} r
  void solve_implicit(std::span<const double> u, std::span<const double> r, std::span<double> x) {
    const double ci = theta_ * dt_, ih2 = 1.0 / (h_ * h_), i2h = 0.5 / h_;
    for (std::size_t j = 0; j < m_; ++j) {
      diag_[j] = 1.0 + 2.0 * ci * ih2;
      sub_[j] = -ci * (ih2 + u[prev(j)] * i2h);
      sup_[j] = -ci * (ih2 - u[next(j)] * i2h);
    }
    solver_.solve(sub_, diag_, sup_, r, x);
  }

  /// x = P(u)^{-T} r
  void solve_implicit_transpose(std::span<const double> u, std::span<const double> r, std::span<double> x) {
    const double ci = theta_ * dt_, ih2 = 1.0 / (h_ * h_), i2h = 0.5 / h_;
    for (std::size_t j = 0; j < m_; ++j) {
      diag_[j] = 1.0 + 2.0 * ci * ih2;
      sub_[j] = -ci * (ih2 - u[j] * i2h);  // P_{j-1, j}
      sup_[j] = -ci * (ih2 + u[j] * i2h);  // P_{j+1, j}
    }
    solver_.solve(sub_, diag_, sup_, r, x);
  }

  /// Reverse-mode step for fixed velocities. Given rho_bar_new = dJ/drho_new,
  /// returns lam = P^{-T} rho_bar_new and accumulates
  ///   u_new_bar += theta dt rho_new * D_c lam
  ///   u_old_bar += (1 - theta) dt rho_old * D_c lam
  ///   rho_old_bar += E(u_old)^T lam
  void reverse(std::span<const double> u_old, std::span<const double> u_new, std::span<const double> rho_old,
               std::span<const double> rho_new, std::span<const double> rho_bar_new, std::span<double> lam,
               std::span<double> u_old_bar, std::span<double> u_new_bar, std::span<double> rho_old_bar) {
    solve_implicit_transpose(u_new, rho_bar_new, lam);
    central_difference(lam, work_);
    const double ci = theta_ * dt_, ce = (1.0 - theta_) * dt_;
    for (std::size_t j = 0; j < m_; ++j) {
      u_new_bar[j] += ci * rho_new[j] * work_[j];
      u_old_bar[j] += ce * rho_old[j] * work_[j];
    }
    apply_transpose(u_old, lam, work_);
    for (std::size_t j = 0; j < m_; ++j) rho_old_bar[j] += lam[j] + ce * work_[j];
  }

 private:
  std::size_t next(std::size_t j) const { return j + 1 == m_ ? 0 : j + 1; }
  std::size_t prev(std::size_t j) const { return j == 0 ? m_ - 1 : j - 1; }

  std::size_t m_ = 0;
  double h_ = 0.0, dt_ = 0.0, theta_ = 0.5;
  std::vector<double> sub_, diag_, sup_, rhs_, work_;
  CyclicTridiagonal solver_;
};

}  // namespace mfc
