#pragma once

// Euler-Maruyama integration of the benchmark SDEs and the ensemble builder
// that turns simulations into training datasets.

#include <cstdint>
#include <optional>
#include <vector>

#include "sgmus/common.hpp"
#include "sgmus/dataset.hpp"
#include "sgmus/parallel.hpp"
#include "sgmus/rng.hpp"
#include "sgmus/system.hpp"

namespace sgmus {

// One Euler-Maruyama step per coordinate:
//   x' = x + f dt + s sqrt(dt) xi
inline double euler_maruyama_step(double x, double drift, double noise_scale,
                                  double dt, double draw) {
  return x + drift * dt + noise_scale * std::sqrt(dt) * draw;
}

inline State2 euler_maruyama_step(const State2& state, const State2& drift,
                                  const State2& noise_scales, double dt,
                                  const State2& draw) {
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("euler_maruyama_step: dt must be positive and finite");
  const double sq = std::sqrt(dt);
  return State2(state[0] + drift[0] * dt + noise_scales[0] * sq * draw[0],
                state[1] + drift[1] * dt + noise_scales[1] * sq * draw[1]);
}

struct Trajectory {
  std::vector<State2> states;  // n_steps + 1 entries including the initial state
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::optional<HarmonicBias> bias;

  std::vector<double> fast_values() const {
    std::vector<double> v(states.size());
    for (std::size_t i = 0; i < states.size(); ++i) v[i] = states[i][1];
    return v;
  }
};

namespace detail {

inline void check_state(const State2& s, std::size_t step) {
  if (!s.allFinite() || s.cwiseAbs().maxCoeff() > divergence_bound())
    throw DivergenceError(
        step, strfmt("trajectory diverged at step %zu (state %.3e, %.3e)",
                     step, s[0], s[1]));
}

}  // namespace detail

// Integrates n_steps of the system from `initial`, with optional harmonic
// restraints on the slow and fast coordinates. Noise is drawn from the
// stream seeded by `seed` alone, so identical arguments give identical
// trajectories regardless of the calling context.
inline Trajectory simulate(const FastSlowSystem& sys, const State2& initial,
                           double dt, std::size_t n_steps, std::uint64_t seed,
                           const HarmonicBias* bias = nullptr,
                           const HarmonicBias* fast_bias = nullptr) {
  sys.validate();
  if (!(dt > 0.0) || !std::isfinite(dt))
    throw std::invalid_argument("simulate: dt must be positive and finite");
  if (!initial.allFinite())
    throw std::invalid_argument("simulate: non-finite initial state");
  Trajectory traj;
  traj.dt = dt;
  traj.seed = seed;
  if (bias != nullptr) traj.bias = *bias;
  traj.states.reserve(n_steps + 1);
  traj.states.push_back(initial);
  detail::check_state(initial, 0);

  GaussianStream rng(seed);
  const State2 scales = noise_scales(sys);
  State2 x = initial;
  for (std::size_t s = 1; s <= n_steps; ++s) {
    State2 f = drift(sys, x, bias);
    if (fast_bias != nullptr) f[1] -= fast_bias->kappa * (x[1] - fast_bias->center);
    // Draw order (slow, fast) is fixed by separate statements; argument
    // evaluation order inside a call is unspecified.
    const double d1 = rng.normal();
    const double d2 = rng.normal();
    x = euler_maruyama_step(x, f, scales, dt, State2(d1, d2));
    detail::check_state(x, s);
    traj.states.push_back(x);
  }
  return traj;
}

// Ensemble protocol for training data: n_trajectories independent runs whose
// initial slow values sit at the centers of equal slices of
// [slow_min, slow_max] and whose initial fast values alternate between +1
// and -1, each run keeping every stride-th state. Labels are the slow
// coordinate. Per-trajectory streams derive from (master seed, index), so
// the result is independent of scheduling order.
struct EnsembleConfig {
  int n_trajectories = 20;
  std::size_t steps_per_trajectory = 500000;
  std::size_t stride = 100;
  double dt = 1e-2;
  double slow_min = 0.0;
  double slow_max = 10.0;

  void validate() const {
    if (n_trajectories < 1)
      throw ConfigError("dataset.n_trajectories", "must be >= 1");
    if (steps_per_trajectory < 1)
      throw ConfigError("dataset.steps_per_trajectory", "must be >= 1");
    if (stride < 1 || stride > steps_per_trajectory)
      throw ConfigError("dataset.stride", "must be in [1, steps_per_trajectory]");
    if (!(slow_min < slow_max))
      throw ConfigError("dataset.slow_range", "need slow_min < slow_max");
    if (!(dt > 0.0)) throw ConfigError("dataset.dt", "must be positive");
  }
};

inline LabeledDataset build_training_dataset(const FastSlowSystem& sys,
                                             const EnsembleConfig& cfg,
                                             std::uint64_t master_seed) {
  sys.validate();
  cfg.validate();
  const std::size_t kept_per_traj = cfg.steps_per_trajectory / cfg.stride;
  const std::size_t n_traj = static_cast<std::size_t>(cfg.n_trajectories);
  const std::size_t total = kept_per_traj * n_traj;
  if (total == 0)
    throw ConfigError("dataset.stride", "no samples retained");

  LabeledDataset ds;
  ds.points.resize(static_cast<Eigen::Index>(total), 2);
  ds.labels.resize(static_cast<Eigen::Index>(total));
  ds.dt = cfg.dt;
  ds.seed = master_seed;

  parallel_for(n_traj, [&](std::size_t m) {
    const double frac = (static_cast<double>(m) + 0.5) / static_cast<double>(n_traj);
    State2 x(cfg.slow_min + frac * (cfg.slow_max - cfg.slow_min),
             (m % 2 == 0) ? 1.0 : -1.0);
    GaussianStream rng(derive_seed(master_seed, m, stream_purpose::kTrajectory));
    const State2 scales = noise_scales(sys);
    const double sq = std::sqrt(cfg.dt);
    std::size_t out = m * kept_per_traj;
    for (std::size_t s = 1; s <= cfg.steps_per_trajectory; ++s) {
      const State2 f = drift(sys, x);
      x[0] += f[0] * cfg.dt + scales[0] * sq * rng.normal();
      x[1] += f[1] * cfg.dt + scales[1] * sq * rng.normal();
      detail::check_state(x, s);
      if (s % cfg.stride == 0 && out < (m + 1) * kept_per_traj) {
        ds.points(static_cast<Eigen::Index>(out), 0) = x[0];
        ds.points(static_cast<Eigen::Index>(out), 1) = x[1];
        ds.labels[static_cast<Eigen::Index>(out)] = x[0];
        ++out;
      }
    }
  });
  return ds;
}

}  // namespace sgmus
