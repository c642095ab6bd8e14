#pragma once

// Denoising score matching: loss = E[ lambda(t) * ||target_score - s_theta(x(t), t, y)||^2 ]
// with t ~ Uniform(t_min, T), lambda(t) = sigma(t)^2, perturbations drawn in
// normalized coordinates.

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"
#include "sgmus/dataset.hpp"
#include "sgmus/network.hpp"
#include "sgmus/rng.hpp"
#include "sgmus/schedule.hpp"

namespace sgmus {

enum class lambda_weighting { sigma_squared };

struct TrainConfig {
  Eigen::Index batch_size = 512;
  long n_iterations = 50000;
  double lr_start = 1e-4;   // cosine-decayed
  double lr_end = 1e-6;
  std::uint64_t seed = 0;
  std::vector<Eigen::Index> hidden_widths{64, 128, 256, 512, 512, 256, 128, 64};
  Eigen::Index n_fourier = 16;
  double sigma_min = 0.002;
  double sigma_max_factor = 1.5;  // times the normalized-data diameter
  double T = 1.0;
  double t_min = 1e-3;
  lambda_weighting weighting = lambda_weighting::sigma_squared;
  long log_every = 100;

  void validate() const {
    if (batch_size < 1) throw ConfigError("batch_size", "must be >= 1");
    if (n_iterations < 1) throw ConfigError("n_iterations", "must be >= 1");
    if (!(lr_start > 0.0) || !(lr_end > 0.0)) throw ConfigError("lr_start/lr_end", "must be positive");
    if (hidden_widths.empty()) throw ConfigError("hidden_widths", "must be non-empty");
    for (auto w : hidden_widths) {
      if (w < 1) throw ConfigError("hidden_widths", "entries must be >= 1");
    }
    if (n_fourier < 1) throw ConfigError("n_fourier", "must be >= 1");
    if (!(sigma_min > 0.0)) throw ConfigError("sigma_min", "must be positive");
    if (!(sigma_max_factor > 0.0)) throw ConfigError("sigma_max_factor", "must be positive");
    if (!(t_min > 0.0) || !(t_min < T)) throw ConfigError("t_min", "must lie in (0, T)");
    if (log_every < 1) throw ConfigError("log_every", "must be >= 1");
  }
};

struct TrainLogEntry {
  long iteration;
  double loss;
  double learning_rate;
};

struct TrainResult {
  ScoreNetwork net;
  std::vector<TrainLogEntry> log;
};

inline double cosine_lr(long iteration, long n_iterations, double lr_start, double lr_end) {
  const double frac = static_cast<double>(iteration) / static_cast<double>(n_iterations);
  return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + std::cos(M_PI * frac));
}

// One Monte-Carlo DSM estimate on a normalized batch (columns = samples).
// Draw order per call: all t's, then the noise matrix column by column.
inline std::pair<double, GradientBundle> dsm_loss_normalized(const ScoreNetwork& net, const Eigen::MatrixXd& Xn,
                                                             const Eigen::VectorXd& yn, GaussianStream& rng) {
  const Eigen::Index B = Xn.cols();
  if (B == 0) throw std::invalid_argument("dsm_loss: empty batch");
  if (yn.size() != B) throw std::invalid_argument("dsm_loss: label count mismatch");
  const auto& sch = net.schedule;

  Eigen::VectorXd ts(B), sig(B);
  for (Eigen::Index j = 0; j < B; ++j) {
    ts(j) = rng.uniform(sch.t_min, sch.T);
    sig(j) = sch.sigma(ts(j));
  }
  Eigen::MatrixXd Z(net.data_dim, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    for (Eigen::Index r = 0; r < net.data_dim; ++r) Z(r, j) = rng.normal();
  }
  // xt = x0 + sigma z ; target = -z/sigma ; lambda = sigma^2
  Eigen::MatrixXd Xt = Xn + (Z.array().rowwise() * sig.transpose().array()).matrix();
  Eigen::MatrixXd target = -(Z.array().rowwise() / sig.transpose().array()).matrix();

  ForwardCache cache;
  Eigen::MatrixXd out = net.forward_normalized(Xt, ts, yn, &cache);
  Eigen::MatrixXd diff = out - target;
  Eigen::ArrayXd lam = sig.array().square();
  const double loss = (diff.array().square().colwise().sum().transpose() * lam).sum() / static_cast<double>(B);
  // dLoss/dout = 2 lambda (out - target) / B
  Eigen::MatrixXd G = (2.0 / static_cast<double>(B)) * (diff.array().rowwise() * lam.transpose()).matrix();
  return {loss, backward(net, cache, G)};
}

// Raw-space batch entry point: normalizes via the network's stats first.
inline std::pair<double, GradientBundle> dsm_loss(const ScoreNetwork& net, const Eigen::MatrixXd& points,
                                                  const Eigen::VectorXd& labels, GaussianStream& rng) {
  if (points.rows() == 0) throw std::invalid_argument("dsm_loss: empty batch");
  Eigen::MatrixXd Xn = net.norm_stats.normalize_x_cols(points.transpose());
  Eigen::VectorXd yn(labels.size());
  for (Eigen::Index i = 0; i < labels.size(); ++i) yn(i) = net.norm_stats.normalize_y(labels(i));
  return dsm_loss_normalized(net, Xn, yn, rng);
}

inline TrainResult train(const LabeledDataset& dataset, const TrainConfig& cfg) {
  cfg.validate();
  if (!dataset.has_labels()) throw std::invalid_argument("train: dataset has no labels");
  if (dataset.size() < 2) throw std::invalid_argument("train: dataset too small");
  if (!dataset.points.allFinite() || !dataset.labels.allFinite()) {
    throw std::invalid_argument("train: non-finite dataset");
  }

  NormStats stats = compute_norm_stats(dataset.points, dataset.labels);
  Eigen::MatrixXd Xn = stats.normalize_x_cols(dataset.points.transpose());  // dim x n
  Eigen::VectorXd yn(dataset.size());
  for (Eigen::Index i = 0; i < dataset.size(); ++i) yn(i) = stats.normalize_y(dataset.labels(i));

  NoiseSchedule sch;
  sch.sigma_min = cfg.sigma_min;
  sch.sigma_max = suggested_sigma_max(Xn.transpose(), cfg.sigma_max_factor);
  sch.T = cfg.T;
  sch.t_min = cfg.t_min;
  sch.validate();

  ScoreNetwork net = make_score_network(dataset.dim(), cfg.hidden_widths, cfg.n_fourier, cfg.seed, sch, stats);
  AdamState adam = AdamState::zeros_like(net);
  GaussianStream rng(derive_seed(cfg.seed, 0, stream_purpose::kTraining));

  const Eigen::Index n = dataset.size();
  const Eigen::Index B = std::min<Eigen::Index>(cfg.batch_size, n);
  Eigen::MatrixXd xb(net.data_dim, B);
  Eigen::VectorXd yb(B);

  TrainResult result;
  for (long it = 0; it < cfg.n_iterations; ++it) {
    for (Eigen::Index j = 0; j < B; ++j) {
      const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n)));
      xb.col(j) = Xn.col(idx);
      yb(j) = yn(idx);
    }
    auto [loss, grads] = dsm_loss_normalized(net, xb, yb, rng);
    if (!std::isfinite(loss)) {
      throw DivergenceError(static_cast<std::size_t>(it), strfmt("train: non-finite loss at iteration %ld", it));
    }
    const double lr = cosine_lr(it, cfg.n_iterations, cfg.lr_start, cfg.lr_end);
    adam_step(net, grads, adam, lr);
    if (it % cfg.log_every == 0 || it + 1 == cfg.n_iterations) {
      result.log.push_back({it, loss, lr});
    }
  }
  result.net = std::move(net);
  return result;
}

inline void save_training_log(const std::vector<TrainLogEntry>& log, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(strfmt("save_training_log: cannot open %s", path.c_str()));
  os << "iteration,loss,learning_rate\n";
  for (const auto& e : log) os << strfmt("%ld,%.17g,%.17g\n", e.iteration, e.loss, e.learning_rate);
}

}  // namespace sgmus
