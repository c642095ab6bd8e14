#pragma once

// Diffusion maps: Gaussian kernel K_ij = exp(-||p_i - p_j||^2 / eps),
// density normalization K~ = D^-a K D^-a, row-stochastic M = D~^-1 K~.
// Eigenpairs of M are computed through the symmetric conjugate
// S = D~^-1/2 K~ D~^-1/2 (dense solve for small inputs, Lanczos with full
// reorthogonalization above that). The first nontrivial right eigenvector of
// M is the label coordinate Phi_1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"
#include "sgmus/dataset.hpp"
#include "sgmus/parallel.hpp"

namespace sgmus {

struct DiffusionMapResult {
  Eigen::VectorXd eigenvalues;   // descending; leading = 1 up to solver precision
  Eigen::MatrixXd eigenvectors;  // n_points x n_eigenpairs, right eigenvectors of M
  double bandwidth = 0.0;
  double alpha = 1.0;

  Eigen::VectorXd phi1() const {
    if (eigenvectors.cols() < 2) throw std::invalid_argument("DiffusionMapResult: no nontrivial eigenvector");
    return eigenvectors.col(1);
  }
};

inline constexpr Eigen::Index diffusion_maps_max_points() { return 10000; }

namespace detail {

// Median (lower median for even counts) of the n(n-1)/2 pairwise squared distances.
inline double median_pairwise_sq(const Eigen::MatrixXd& pts) {
  const Eigen::Index n = pts.rows();
  std::vector<double> d2;
  d2.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(n - 1) / 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      d2.push_back((pts.row(i) - pts.row(j)).squaredNorm());
    }
  }
  const std::size_t mid = (d2.size() - 1) / 2;
  std::nth_element(d2.begin(), d2.begin() + static_cast<std::ptrdiff_t>(mid), d2.end());
  return d2[mid];
}

// Fills the alpha-normalized kernel K~ and its degree vector; K is built
// row-block-parallel and deterministically.
inline void build_kernel(const Eigen::MatrixXd& pts, double eps, double alpha, Eigen::MatrixXd& K,
                         Eigen::VectorXd& degree) {
  const Eigen::Index n = pts.rows();
  K.resize(n, n);
  const Eigen::VectorXd sq = pts.rowwise().squaredNorm();
  const Eigen::Index block = 256;
  const std::size_t n_blocks = static_cast<std::size_t>((n + block - 1) / block);
  parallel_for(n_blocks, [&](std::size_t bi) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(bi) * block;
    const Eigen::Index bw = std::min<Eigen::Index>(block, n - r0);
    Eigen::MatrixXd g = -2.0 * pts.middleRows(r0, bw) * pts.transpose();
    g.colwise() += sq.segment(r0, bw);
    g.rowwise() += sq.transpose();
    K.middleRows(r0, bw) = (-g.array().max(0.0) / eps).exp();
  });
  Eigen::VectorXd q = K.rowwise().sum();
  if (alpha != 0.0) {
    const Eigen::VectorXd qa = q.array().pow(-alpha);
    parallel_for(n_blocks, [&](std::size_t bi) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(bi) * block;
      const Eigen::Index bw = std::min<Eigen::Index>(block, n - r0);
      for (Eigen::Index r = r0; r < r0 + bw; ++r) {
        K.row(r).array() *= qa(r) * qa.transpose().array();
      }
    });
  }
  degree = K.rowwise().sum();
}

struct SymEigResult {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // columns
};

inline SymEigResult dense_leading_eigs(const Eigen::MatrixXd& S, Eigen::Index k) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  if (es.info() != Eigen::Success) throw std::runtime_error("diffusion_maps: dense eigensolver failed");
  const Eigen::Index n = S.rows();
  SymEigResult r;
  r.values.resize(k);
  r.vectors.resize(n, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    r.values(i) = es.eigenvalues()(n - 1 - i);
    r.vectors.col(i) = es.eigenvectors().col(n - 1 - i);
  }
  return r;
}

// Lanczos with full reorthogonalization for the leading eigenpairs of a
// symmetric matrix; deterministic start vector, row-block-parallel matvec.
inline SymEigResult lanczos_leading_eigs(const Eigen::MatrixXd& S, Eigen::Index k) {
  const Eigen::Index n = S.rows();
  const Eigen::Index m_max = std::min<Eigen::Index>(n, std::max<Eigen::Index>(8 * k, 120));
  Eigen::MatrixXd V(n, m_max);
  Eigen::VectorXd alpha_d(m_max), beta_d(m_max);
  V.col(0) = Eigen::VectorXd::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));

  const Eigen::Index block = 512;
  const std::size_t n_blocks = static_cast<std::size_t>((n + block - 1) / block);
  Eigen::VectorXd w(n);
  auto matvec = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
    parallel_for(n_blocks, [&](std::size_t bi) {
      const Eigen::Index r0 = static_cast<Eigen::Index>(bi) * block;
      const Eigen::Index bw = std::min<Eigen::Index>(block, n - r0);
      out.segment(r0, bw).noalias() = S.middleRows(r0, bw) * v;
    });
  };

  Eigen::Index m = 0;
  auto extract = [&](Eigen::Index steps) -> SymEigResult {
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i) {
      T(i, i) = alpha_d(i);
      if (i + 1 < steps) T(i, i + 1) = T(i + 1, i) = beta_d(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    SymEigResult r;
    r.values.resize(k);
    r.vectors.resize(n, k);
    for (Eigen::Index i = 0; i < k; ++i) {
      r.values(i) = es.eigenvalues()(steps - 1 - i);
      r.vectors.col(i) = V.leftCols(steps) * es.eigenvectors().col(steps - 1 - i);
      r.vectors.col(i).normalize();
    }
    return r;
  };
  auto converged = [&](Eigen::Index steps) -> bool {
    if (steps < k + 2) return false;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
    for (Eigen::Index i = 0; i < steps; ++i) {
      T(i, i) = alpha_d(i);
      if (i + 1 < steps) T(i, i + 1) = T(i + 1, i) = beta_d(i);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    for (Eigen::Index i = 0; i < k; ++i) {
      // residual bound |beta_m * y_last|
      if (std::abs(beta_d(steps - 1) * es.eigenvectors()(steps - 1, steps - 1 - i)) > 1e-12) return false;
    }
    return true;
  };

  for (Eigen::Index j = 0; j < m_max; ++j) {
    matvec(V.col(j), w);
    if (j > 0) w -= beta_d(j - 1) * V.col(j - 1);
    alpha_d(j) = V.col(j).dot(w);
    w -= alpha_d(j) * V.col(j);
    // two-pass full reorthogonalization
    for (int pass = 0; pass < 2; ++pass) {
      w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
    }
    beta_d(j) = w.norm();
    m = j + 1;
    if (beta_d(j) < 1e-13) break;  // invariant subspace found
    if (j + 1 < m_max) V.col(j + 1) = w / beta_d(j);
    if ((j + 1) % 10 == 0 && converged(j + 1)) break;
  }
  if (m < k) throw std::runtime_error("diffusion_maps: Lanczos terminated before finding enough eigenpairs");
  return extract(m);
}

}  // namespace detail

inline DiffusionMapResult diffusion_maps(const Eigen::MatrixXd& points, double bandwidth = 0.0,
                                         double alpha = 1.0, Eigen::Index n_eigenpairs = 4) {
  const Eigen::Index n = points.rows();
  if (n < 3) throw std::invalid_argument("diffusion_maps: need at least 3 points");
  if (n > diffusion_maps_max_points()) {
    throw std::invalid_argument(strfmt("diffusion_maps: %ld points exceeds the %ld-point cap; subsample first",
                                       static_cast<long>(n), static_cast<long>(diffusion_maps_max_points())));
  }
  if (n_eigenpairs < 2) throw std::invalid_argument("diffusion_maps: n_eigenpairs must be >= 2");
  if (n_eigenpairs > n) throw std::invalid_argument("diffusion_maps: more eigenpairs than points");
  if (!points.allFinite()) throw std::invalid_argument("diffusion_maps: non-finite input");
  if (!(alpha >= 0.0) || alpha > 1.0) throw std::invalid_argument("diffusion_maps: alpha must be in [0, 1]");

  double eps = bandwidth;
  if (eps == 0.0) eps = detail::median_pairwise_sq(points);
  if (!(eps > 0.0) || !std::isfinite(eps)) {
    throw std::invalid_argument("diffusion_maps: degenerate point set (zero bandwidth)");
  }

  Eigen::MatrixXd K;
  Eigen::VectorXd degree;
  detail::build_kernel(points, eps, alpha, K, degree);
  // S = D~^-1/2 K~ D~^-1/2, in place
  Eigen::VectorXd dinv_sqrt = degree.array().rsqrt();
  const Eigen::Index block = 256;
  const std::size_t n_blocks = static_cast<std::size_t>((n + block - 1) / block);
  parallel_for(n_blocks, [&](std::size_t bi) {
    const Eigen::Index r0 = static_cast<Eigen::Index>(bi) * block;
    const Eigen::Index bw = std::min<Eigen::Index>(block, n - r0);
    for (Eigen::Index r = r0; r < r0 + bw; ++r) {
      K.row(r).array() *= dinv_sqrt(r) * dinv_sqrt.transpose().array();
    }
  });

  detail::SymEigResult eig =
      n <= 2048 ? detail::dense_leading_eigs(K, n_eigenpairs) : detail::lanczos_leading_eigs(K, n_eigenpairs);

  DiffusionMapResult result;
  result.bandwidth = eps;
  result.alpha = alpha;
  result.eigenvalues = eig.values;
  result.eigenvectors.resize(n, n_eigenpairs);
  for (Eigen::Index i = 0; i < n_eigenpairs; ++i) {
    // right eigenvector of M: v = D~^-1/2 u
    Eigen::VectorXd v = dinv_sqrt.asDiagonal() * eig.vectors.col(i);
    v /= v.norm();
    // orientation: trivial vector positive, others correlated non-negatively
    // with the first data coordinate
    double s;
    if (i == 0) {
      s = v.sum();
    } else {
      const Eigen::VectorXd x0 = points.col(0).array() - points.col(0).mean();
      s = v.dot(x0);
    }
    if (s < 0.0) v = -v;
    result.eigenvectors.col(i) = v;
  }
  return result;
}

// Explicit row-stochastic transition matrix (diagnostic/tests; dense small inputs).
inline Eigen::MatrixXd markov_matrix(const Eigen::MatrixXd& points, double bandwidth = 0.0, double alpha = 1.0) {
  const Eigen::Index n = points.rows();
  if (n < 3) throw std::invalid_argument("markov_matrix: need at least 3 points");
  if (n > 2048) throw std::invalid_argument("markov_matrix: dense diagnostic capped at 2048 points");
  double eps = bandwidth;
  if (eps == 0.0) eps = detail::median_pairwise_sq(points);
  if (!(eps > 0.0) || !std::isfinite(eps)) throw std::invalid_argument("markov_matrix: degenerate point set");
  Eigen::MatrixXd K;
  Eigen::VectorXd degree;
  detail::build_kernel(points, eps, alpha, K, degree);
  return degree.cwiseInverse().asDiagonal() * K;
}

struct LabelingResult {
  LabeledDataset dataset;
  double phi_mean = 0.0;
  double phi_scale = 1.0;
};

// Labels points by standardized Phi_1 (zero mean, unit population variance).
inline LabelingResult label_dataset(const Eigen::MatrixXd& points, const DiffusionMapResult& result) {
  if (result.eigenvectors.rows() != points.rows()) {
    throw std::invalid_argument("label_dataset: result does not match point count");
  }
  Eigen::VectorXd phi = result.phi1();
  LabelingResult out;
  out.phi_mean = phi.mean();
  const double var = (phi.array() - out.phi_mean).square().sum() / static_cast<double>(phi.size());
  out.phi_scale = std::sqrt(var);
  if (!(out.phi_scale > 0.0)) throw std::invalid_argument("label_dataset: eigenvector has zero variance");
  out.dataset.points = points;
  out.dataset.labels = (phi.array() - out.phi_mean) / out.phi_scale;
  return out;
}

}  // namespace sgmus
