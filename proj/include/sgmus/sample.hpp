#pragma once

// Reverse-SDE sampling: integrate dx = g(t)^2 s_theta(x,t,y) dt(backward) + g(t) dB
// from t=T down to t=t_min on a uniform grid, starting x(T) ~ Normal(0, sigma_max^2 I)
// in normalized coordinates; denormalize at the end.
//
// Each sample owns an RNG stream derived from (seed, sample index), so sample j
// is identical no matter how many samples are requested or how blocks are
// scheduled across threads.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"
#include "sgmus/network.hpp"
#include "sgmus/parallel.hpp"
#include "sgmus/rng.hpp"

namespace sgmus {

inline bool is_extrapolating(const ScoreNetwork& net, double label) {
  return label < net.norm_stats.y_min || label > net.norm_stats.y_max;
}

// Returns samples as rows (n_samples x data_dim), in raw data coordinates.
inline Eigen::MatrixXd generate(const ScoreNetwork& net, double label, Eigen::Index n_samples,
                                Eigen::Index n_steps, std::uint64_t seed) {
  net.validate();
  if (n_samples < 1) throw std::invalid_argument("generate: n_samples must be >= 1");
  if (n_steps < 2) throw std::invalid_argument("generate: n_steps must be >= 2");
  if (!std::isfinite(label)) throw std::invalid_argument("generate: non-finite label");

  const auto& sch = net.schedule;
  const Eigen::Index dim = net.data_dim;
  const double yn = net.norm_stats.normalize_y(label);
  const double dt = (sch.T - sch.t_min) / static_cast<double>(n_steps);
  const double g_const = std::sqrt(2.0 * sch.log_ratio());

  Eigen::MatrixXd samples(n_samples, dim);
  const Eigen::Index block = 512;
  const std::size_t n_blocks = static_cast<std::size_t>((n_samples + block - 1) / block);

  parallel_for(n_blocks, [&](std::size_t bi) {
    const Eigen::Index j0 = static_cast<Eigen::Index>(bi) * block;
    const Eigen::Index bw = std::min<Eigen::Index>(block, n_samples - j0);
    std::vector<GaussianStream> streams;
    streams.reserve(static_cast<std::size_t>(bw));
    for (Eigen::Index j = 0; j < bw; ++j) {
      streams.emplace_back(derive_seed(seed, static_cast<std::uint64_t>(j0 + j), stream_purpose::kGeneration));
    }
    Eigen::MatrixXd X(dim, bw);
    for (Eigen::Index j = 0; j < bw; ++j) {
      for (Eigen::Index r = 0; r < dim; ++r) X(r, j) = sch.sigma_max * streams[static_cast<std::size_t>(j)].normal();
    }
    Eigen::VectorXd ts(bw), ylab = Eigen::VectorXd::Constant(bw, yn);
    const double sqrt_dt = std::sqrt(dt);
    for (Eigen::Index k = 0; k < n_steps; ++k) {
      const double t = sch.T - static_cast<double>(k) * dt;
      const double g = sch.sigma(t) * g_const;
      ts.setConstant(t);
      Eigen::MatrixXd score = net.forward_normalized(X, ts, ylab);
      X += (g * g * dt) * score;
      for (Eigen::Index j = 0; j < bw; ++j) {
        auto& st = streams[static_cast<std::size_t>(j)];
        for (Eigen::Index r = 0; r < dim; ++r) X(r, j) += g * sqrt_dt * st.normal();
      }
      if (!X.allFinite()) {
        throw DivergenceError(static_cast<std::size_t>(k),
                              strfmt("generate: non-finite state at reverse step %ld", static_cast<long>(k)));
      }
    }
    samples.middleRows(j0, bw) = net.norm_stats.denormalize_x_cols(X).transpose();
  });
  return samples;
}

}  // namespace sgmus
