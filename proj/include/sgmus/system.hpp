#pragma once

// Two-timescale benchmark SDE systems.
//
// Both systems have a slowly drifting coordinate x1 and a fast coordinate x2
// relaxing in a double-well potential:
//
//   MovingWell:  dz1 = a1 dt + a2 dB1
//                dz2 = -(-1 + 0.2 z1 + 4 z2 (-1 + z2^2)) dt + a3 dB2
//                so V(z2; z1) = z2^4 - 2 z2^2 + (0.2 z1 - 1) z2
//                (well depths tilt with z1; equal depth at z1 = 5)
//
//   FixedWell:   dx1 = a1 dt + a2 dB1
//                dx2 = -V'(x2) dt + a3 dB2 with
//                V(x2) = (1+x2)^2 (x2^4 + (3k/4 - 2) x2^3 + (1+h-k) x2^2
//                                  - 2 h x2 + h)
//                (wells at -1 and +1 independent of x1; barrier height h,
//                 depth asymmetry k)
//
// The fast coordinate's stationary conditional density for a fixed slow
// value is exp(-2 V / a3^2), normalized.

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"
#include "sgmus/empirical_pdf.hpp"

namespace sgmus {

using State2 = Eigen::Vector2d;

enum class SystemId { MovingWell, FixedWell };

inline const char* system_name(SystemId id) {
  return id == SystemId::MovingWell ? "moving_well" : "fixed_well";
}

// Harmonic restraint on the slow coordinate: adds -kappa (x1 - center) to
// the slow drift, i.e. the bias potential (kappa/2)(x1 - center)^2.
struct HarmonicBias {
  double kappa = 0.0;
  double center = 0.0;
};

struct FastSlowSystem {
  SystemId id = SystemId::MovingWell;
  double a1 = 1e-4;  // slow drift rate
  double a2 = 1e-4;  // slow noise amplitude
  double a3 = 1.0;   // fast noise amplitude
  double h = 0.0;    // FixedWell barrier height
  double k = 0.0;    // FixedWell depth asymmetry

  // Benchmark defaults. The fast noise amplitudes are calibrated so that
  // long unbiased ensembles populate both wells with the correct Boltzmann
  // weights while 1000-step umbrella windows cannot cross the barrier; see
  // README for the calibration.
  static FastSlowSystem moving_well(double a1 = 1e-4, double a2 = 1e-4,
                                    double a3 = 0.8) {
    FastSlowSystem s;
    s.id = SystemId::MovingWell;
    s.a1 = a1;
    s.a2 = a2;
    s.a3 = a3;
    s.validate();
    return s;
  }

  static FastSlowSystem fixed_well(double h, double k = 0.0, double a1 = 1e-4,
                                   double a2 = 1e-4, double a3 = 1.0) {
    FastSlowSystem s;
    s.id = SystemId::FixedWell;
    s.h = h;
    s.k = k;
    s.a1 = a1;
    s.a2 = a2;
    s.a3 = a3;
    s.validate();
    return s;
  }

  // Timescale separation between the fast and slow noise amplitudes.
  double epsilon() const { return a3 / a1; }

  // Effective inverse temperature of the fast coordinate: the stationary
  // density is exp(-beta_eff V) with beta_eff = 2 / a3^2.
  double beta_eff() const { return 2.0 / (a3 * a3); }

  void validate() const {
    if (!(a1 > 0.0) || !std::isfinite(a1))
      throw std::invalid_argument("system.a1: must be positive and finite");
    if (!(a2 > 0.0) || !std::isfinite(a2))
      throw std::invalid_argument("system.a2: must be positive and finite");
    if (!(a3 > 0.0) || !std::isfinite(a3))
      throw std::invalid_argument("system.a3: must be positive and finite");
    if (id == SystemId::MovingWell && (h != 0.0 || k != 0.0))
      throw std::invalid_argument("system.h/k: only meaningful for fixed_well");
    if (!std::isfinite(h) || !std::isfinite(k))
      throw std::invalid_argument("system.h/k: must be finite");
  }
};

// Fast-coordinate potential V(x2) at a fixed slow value.
inline double fast_potential(const FastSlowSystem& sys, double x2, double slow_value) {
  if (sys.id == SystemId::MovingWell) {
    return x2 * x2 * x2 * x2 - 2.0 * x2 * x2 + (0.2 * slow_value - 1.0) * x2;
  }
  const double h = sys.h, k = sys.k;
  const double p = h - 2.0 * h * x2 + (1.0 + h - k) * x2 * x2 +
                   (0.75 * k - 2.0) * x2 * x2 * x2 + x2 * x2 * x2 * x2;
  const double w = 1.0 + x2;
  return w * w * p;
}

// Drift vector (slow, fast) at a state, with an optional harmonic restraint
// on the slow coordinate.
inline State2 drift(const FastSlowSystem& sys, const State2& state,
                    const HarmonicBias* bias = nullptr) {
  if (!state.allFinite())
    throw std::invalid_argument("drift: non-finite state");
  const double x1 = state[0], x2 = state[1];
  double slow = sys.a1;
  if (bias != nullptr) {
    if (bias->kappa < 0.0 || !std::isfinite(bias->kappa) || !std::isfinite(bias->center))
      throw std::invalid_argument("bias: kappa must be >= 0 and finite");
    slow -= bias->kappa * (x1 - bias->center);
  }
  double fast;
  if (sys.id == SystemId::MovingWell) {
    fast = -(-1.0 + 0.2 * x1 + 4.0 * x2 * (-1.0 + x2 * x2));
  } else {
    // -d/dx2 of the FixedWell potential, kept in the factored product form.
    const double h = sys.h, k = sys.k;
    const double w = 1.0 + x2;
    const double p = h - 2.0 * h * x2 + (1.0 + h - k) * x2 * x2 +
                     (0.75 * k - 2.0) * x2 * x2 * x2 + x2 * x2 * x2 * x2;
    const double dp = -2.0 * h + 2.0 * (1.0 + h - k) * x2 +
                      3.0 * (0.75 * k - 2.0) * x2 * x2 + 4.0 * x2 * x2 * x2;
    fast = -(w * w * dp + 2.0 * w * p);
  }
  return State2(slow, fast);
}

// Noise amplitudes per coordinate.
inline State2 noise_scales(const FastSlowSystem& sys) {
  return State2(sys.a2, sys.a3);
}

// Analytic stationary conditional density of the fast coordinate at a fixed
// slow value, evaluated on the given grid (treated as bin edges) and
// normalized by trapezoidal quadrature so the result is directly comparable
// to histograms on the same edges. If the potential has two wells inside
// [-2.5, 2.5] but the grid misses one that carries visible mass, a warning
// string is appended (not an error).
inline EmpiricalPdf stationary_conditional_pdf(const FastSlowSystem& sys,
                                               double slow_value,
                                               const std::vector<double>& grid,
                                               std::vector<std::string>* warnings = nullptr) {
  check_edges(grid);
  if (!std::isfinite(slow_value))
    throw std::invalid_argument("stationary_conditional_pdf: non-finite slow value");
  const double beta = sys.beta_eff();

  // Evaluate exp(-beta V) on the edges, shifting by the minimum V for
  // numerical range before normalizing.
  double vmin = fast_potential(sys, grid[0], slow_value);
  for (double x : grid) vmin = std::min(vmin, fast_potential(sys, x, slow_value));
  std::vector<double> f(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i)
    f[i] = std::exp(-beta * (fast_potential(sys, grid[i], slow_value) - vmin));

  EmpiricalPdf pdf;
  pdf.bin_edges = grid;
  pdf.densities.resize(grid.size() - 1);
  double z = 0.0;
  for (std::size_t j = 0; j + 1 < grid.size(); ++j) {
    const double mass = 0.5 * (f[j] + f[j + 1]) * (grid[j + 1] - grid[j]);
    pdf.densities[j] = mass;
    z += mass;
  }
  if (!(z > 0.0) || !std::isfinite(z))
    throw std::invalid_argument("stationary_conditional_pdf: density vanishes on grid");
  for (std::size_t j = 0; j + 1 < grid.size(); ++j)
    pdf.densities[j] /= z * (grid[j + 1] - grid[j]);

  if (warnings != nullptr) {
    // Scan a wide reference interval for local density maxima with
    // non-negligible mass that fall outside the grid.
    const double beta_v = beta;
    auto dens = [&](double x) {
      return std::exp(-beta_v * (fast_potential(sys, x, slow_value) - vmin));
    };
    const int n_scan = 2000;
    double peak = 0.0;
    for (int i = 0; i <= n_scan; ++i)
      peak = std::max(peak, dens(-2.5 + 5.0 * i / n_scan));
    for (int i = 1; i < n_scan; ++i) {
      const double x = -2.5 + 5.0 * i / n_scan;
      const double d0 = dens(x);
      if (d0 > 0.01 * peak && d0 > dens(x - 5.0 / n_scan) && d0 > dens(x + 5.0 / n_scan) &&
          (x < grid.front() || x > grid.back())) {
        warnings->push_back(strfmt(
            "stationary pdf: mode near x2=%.3f lies outside the grid [%g, %g]", x,
            grid.front(), grid.back()));
      }
    }
  }
  return pdf;
}

}  // namespace sgmus
