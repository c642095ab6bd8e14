#pragma once

// Umbrella sampling driven by generated initial conditions: run biased windows,
// pool fast-variable histograms, and (when fast-direction biases are present)
// reweight with WHAM.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"
#include "sgmus/empirical_pdf.hpp"
#include "sgmus/network.hpp"
#include "sgmus/parallel.hpp"
#include "sgmus/rng.hpp"
#include "sgmus/sample.hpp"
#include "sgmus/simulate.hpp"
#include "sgmus/system.hpp"
#include "sgmus/wham.hpp"

namespace sgmus {

struct UmbrellaWindow {
  HarmonicBias bias;                        // slow-direction restraint
  std::size_t n_steps = 1000;
  double dt = 1e-2;
  State2 initial_state = State2::Zero();
  std::uint64_t seed = 0;
  std::optional<HarmonicBias> fast_bias;    // optional fast-direction restraint (enables WHAM)

  void validate() const {
    if (n_steps < 1) throw ConfigError("n_steps", "must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "must be positive and finite");
    if (!initial_state.allFinite()) throw ConfigError("initial_state", "must be finite");
    if (bias.kappa < 0.0) throw ConfigError("bias.kappa", "must be >= 0");
  }
};

// One trajectory per window; windows are independent, so permuting them
// permutes the result identically.
inline std::vector<Trajectory> run_windows(const FastSlowSystem& sys, const std::vector<UmbrellaWindow>& windows) {
  if (windows.empty()) throw std::invalid_argument("run_windows: need at least one window");
  for (const auto& w : windows) w.validate();
  std::vector<Trajectory> trajectories(windows.size());
  parallel_for(windows.size(), [&](std::size_t i) {
    const auto& w = windows[i];
    try {
      trajectories[i] = simulate(sys, w.initial_state, w.dt, w.n_steps, w.seed, &w.bias,
                                 w.fast_bias ? &*w.fast_bias : nullptr);
    } catch (const DivergenceError& e) {
      throw DivergenceError(e.step(), strfmt("window %zu: %s", i, e.what()));
    }
  });
  return trajectories;
}

// Concatenate all fast-variable samples and bin them on the grid.
inline EmpiricalPdf pool_histograms(const std::vector<Trajectory>& trajectories, const std::vector<double>& grid) {
  if (trajectories.empty()) throw std::invalid_argument("pool_histograms: empty pool");
  std::vector<double> pooled;
  for (const auto& t : trajectories) {
    const auto v = t.fast_values();
    pooled.insert(pooled.end(), v.begin(), v.end());
  }
  return estimate_pdf(pooled, grid);
}

enum class CenterMode {
  AtLabel,        // every window restrained to the conditioning label
  AtInitialSlow,  // each window restrained to its own initial slow coordinate
};

struct WindowConfig {
  std::size_t n_windows = 10;
  std::size_t n_steps = 1000;
  double dt = 1e-2;
  double kappa = 10.0;
  CenterMode center_mode = CenterMode::AtLabel;
  Eigen::Index generate_steps = 500;
  std::vector<double> grid = default_fast_grid();
  std::uint64_t seed = 0;
  // Optional fast-direction restraint centers; when non-empty a WHAM pass runs
  // over the windows (one center per window, kappa_fast for all).
  std::vector<double> fast_bias_centers;
  double kappa_fast = 0.0;

  void validate() const {
    if (n_windows < 1) throw ConfigError("n_windows", "must be >= 1");
    if (n_steps < 1) throw ConfigError("n_steps", "must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "must be positive and finite");
    if (kappa < 0.0) throw ConfigError("kappa", "must be >= 0");
    if (generate_steps < 2) throw ConfigError("generate_steps", "must be >= 2");
    check_edges(grid);
    if (!fast_bias_centers.empty()) {
      if (fast_bias_centers.size() != n_windows) {
        throw ConfigError("fast_bias_centers", "must have one center per window");
      }
      if (!(kappa_fast > 0.0)) throw ConfigError("kappa_fast", "must be positive with fast biases");
    }
  }
};

struct CoupledResult {
  EmpiricalPdf pooled;                   // pooled-histogram estimate
  std::optional<WhamResult> wham;        // present when fast biases were configured
  Eigen::MatrixXd initial_states;        // n_windows x 2, generated microstates
  std::vector<UmbrellaWindow> windows;   // full window specs (seeds, biases)
  double label = 0.0;
  bool extrapolated = false;             // label outside the training range
};

// Algorithm: generate n_windows microstates at the label, run one biased
// window from each, pool (and WHAM when configured).
inline CoupledResult coupled_pipeline(const ScoreNetwork& net, const FastSlowSystem& sys, double label,
                                      const WindowConfig& cfg) {
  cfg.validate();
  sys.validate();
  CoupledResult result;
  result.label = label;
  result.extrapolated = is_extrapolating(net, label);
  result.initial_states =
      generate(net, label, static_cast<Eigen::Index>(cfg.n_windows), cfg.generate_steps,
               derive_seed(cfg.seed, 0, stream_purpose::kGeneration));

  result.windows.resize(cfg.n_windows);
  for (std::size_t i = 0; i < cfg.n_windows; ++i) {
    auto& w = result.windows[i];
    w.initial_state = result.initial_states.row(static_cast<Eigen::Index>(i)).transpose();
    w.bias.kappa = cfg.kappa;
    w.bias.center = cfg.center_mode == CenterMode::AtLabel ? label : w.initial_state[0];
    w.n_steps = cfg.n_steps;
    w.dt = cfg.dt;
    w.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(i), stream_purpose::kWindow);
    if (!cfg.fast_bias_centers.empty()) {
      w.fast_bias = HarmonicBias{cfg.kappa_fast, cfg.fast_bias_centers[i]};
    }
  }

  const auto trajectories = run_windows(sys, result.windows);
  result.pooled = pool_histograms(trajectories, cfg.grid);

  if (!cfg.fast_bias_centers.empty()) {
    WhamInput in;
    in.bin_edges = cfg.grid;
    const auto n_bins = static_cast<Eigen::Index>(cfg.grid.size()) - 1;
    in.counts.resize(static_cast<Eigen::Index>(cfg.n_windows), n_bins);
    in.bias.resize(static_cast<Eigen::Index>(cfg.n_windows), n_bins);
    in.window_counts.resize(static_cast<Eigen::Index>(cfg.n_windows));
    const auto centers = bin_centers(cfg.grid);
    for (std::size_t i = 0; i < cfg.n_windows; ++i) {
      const auto row = static_cast<Eigen::Index>(i);
      in.counts.row(row) = bin_counts(trajectories[i].fast_values(), cfg.grid).transpose();
      in.window_counts(row) = in.counts.row(row).sum();
      const auto& fb = *result.windows[i].fast_bias;
      for (Eigen::Index j = 0; j < n_bins; ++j) {
        const double d = centers[static_cast<std::size_t>(j)] - fb.center;
        in.bias(row, j) = 0.5 * fb.kappa * d * d;
      }
    }
    in.beta = sys.beta_eff();
    result.wham = wham(in);
  }
  return result;
}

}  // namespace sgmus
