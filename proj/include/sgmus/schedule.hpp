#pragma once

// Variance-exploding noise schedule: sigma(t) = sigma_min * (sigma_max/sigma_min)^t,
// f(x,t) = 0, g(t) = sigma(t) * sqrt(2 * ln(sigma_max/sigma_min)), t in [0, T].

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"

namespace sgmus {

enum class schedule_kind { variance_exploding };

struct NoiseSchedule {
  schedule_kind kind = schedule_kind::variance_exploding;
  double sigma_min = 0.002;
  double sigma_max = 1.0;
  double T = 1.0;
  double t_min = 1e-3;

  void validate() const {
    if (!(sigma_min > 0.0) || !std::isfinite(sigma_min)) throw ConfigError("sigma_min", "must be positive and finite");
    if (!(sigma_max > sigma_min) || !std::isfinite(sigma_max)) throw ConfigError("sigma_max", "must exceed sigma_min and be finite");
    if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T", "must be positive and finite");
    if (!(t_min > 0.0) || !(t_min < T)) throw ConfigError("t_min", "must lie in (0, T)");
  }

  double log_ratio() const { return std::log(sigma_max / sigma_min); }

  double sigma(double t) const {
    if (!std::isfinite(t) || t < 0.0 || t > T) {
      throw std::invalid_argument(strfmt("sigma: t=%g outside [0, %g]", t, T));
    }
    return sigma_min * std::exp(t * log_ratio());
  }

  double diffusion_g(double t) const { return sigma(t) * std::sqrt(2.0 * log_ratio()); }
};

struct Perturbation {
  Eigen::VectorXd xt;
  Eigen::VectorXd target_score;
};

// xt = x0 + sigma(t)*draw; target = -(xt - x0)/sigma(t)^2, the score of the
// VE transition kernel p(x(t) | x(0)) = Normal(x(0), sigma(t)^2 I).
inline Perturbation perturb(const Eigen::VectorXd& x0, double t, const NoiseSchedule& schedule,
                            const Eigen::VectorXd& draw) {
  if (draw.size() != x0.size()) throw std::invalid_argument("perturb: draw/x0 size mismatch");
  if (t < schedule.t_min || t > schedule.T) {
    throw std::invalid_argument(strfmt("perturb: t=%g outside [t_min=%g, T=%g]", t, schedule.t_min, schedule.T));
  }
  const double s = schedule.sigma(t);
  Perturbation p;
  p.xt = x0 + s * draw;
  p.target_score = -(p.xt - x0) / (s * s);
  return p;
}

namespace detail {

// Andrew's monotone-chain convex hull; input rows = 2-D points.
inline std::vector<Eigen::Vector2d> convex_hull(const Eigen::MatrixXd& pts) {
  std::vector<Eigen::Vector2d> p(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) p[static_cast<std::size_t>(i)] = pts.row(i).transpose();
  std::sort(p.begin(), p.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return a.x() < b.x() || (a.x() == b.x() && a.y() < b.y());
  });
  p.erase(std::unique(p.begin(), p.end(), [](const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
            return a.x() == b.x() && a.y() == b.y();
          }),
          p.end());
  const std::size_t n = p.size();
  if (n <= 2) return p;
  auto cross = [](const Eigen::Vector2d& o, const Eigen::Vector2d& a, const Eigen::Vector2d& b) {
    return (a.x() - o.x()) * (b.y() - o.y()) - (a.y() - o.y()) * (b.x() - o.x());
  };
  std::vector<Eigen::Vector2d> hull(2 * n);
  std::size_t k = 0;
  for (std::size_t i = 0; i < n; ++i) {
    while (k >= 2 && cross(hull[k - 2], hull[k - 1], p[i]) <= 0.0) --k;
    hull[k++] = p[i];
  }
  for (std::size_t i = n - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 2], hull[k - 1], p[i]) <= 0.0) --k;
    hull[k++] = p[i];
  }
  hull.resize(k - 1);
  return hull;
}

}  // namespace detail

// Exact diameter of a point set (rows = points). O(n log n) via convex hull in
// 2-D, trivial in 1-D; higher dimensions are not needed by the benchmark systems.
inline double max_pairwise_distance(const Eigen::MatrixXd& points) {
  if (points.rows() < 2) throw std::invalid_argument("max_pairwise_distance: need at least 2 points");
  if (!points.allFinite()) throw std::invalid_argument("max_pairwise_distance: non-finite input");
  if (points.cols() == 1) {
    return points.col(0).maxCoeff() - points.col(0).minCoeff();
  }
  if (points.cols() != 2) throw std::invalid_argument("max_pairwise_distance: only 1-D and 2-D supported");
  const auto hull = detail::convex_hull(points);
  double best = 0.0;
  for (std::size_t i = 0; i < hull.size(); ++i) {
    for (std::size_t j = i + 1; j < hull.size(); ++j) {
      best = std::max(best, (hull[i] - hull[j]).norm());
    }
  }
  return best;
}

inline double suggested_sigma_max(const Eigen::MatrixXd& normalized_points, double factor = 1.5) {
  return factor * max_pairwise_distance(normalized_points);
}

}  // namespace sgmus
