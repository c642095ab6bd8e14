#pragma once

// Weighted histogram analysis method on a shared 1-D grid:
//   p_j        = (sum_i n_ij) / (sum_i N_i exp(f_i - beta W_i(x_j)))
//   exp(-f_i)  = sum_j p_j exp(-beta W_i(x_j))
// iterated to self-consistency, offsets gauge-fixed so f_1 = 0.

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"
#include "sgmus/empirical_pdf.hpp"

namespace sgmus {

struct WhamInput {
  std::vector<double> bin_edges;   // shared grid, strictly increasing
  Eigen::MatrixXd counts;          // n_windows x n_bins histogram counts
  Eigen::VectorXd window_counts;   // N_i, per-window sample totals
  Eigen::MatrixXd bias;            // n_windows x n_bins, W_i evaluated at bin centers
  double beta = 1.0;               // effective inverse temperature

  void validate() const {
    check_edges(bin_edges);
    const auto n_bins = static_cast<Eigen::Index>(bin_edges.size()) - 1;
    if (counts.rows() < 1) throw std::invalid_argument("WhamInput: need at least one window");
    if (counts.cols() != n_bins || bias.rows() != counts.rows() || bias.cols() != n_bins ||
        window_counts.size() != counts.rows()) {
      throw std::invalid_argument("WhamInput: count/bias/grid shape mismatch");
    }
    if ((counts.array() < 0.0).any() || !counts.allFinite()) {
      throw std::invalid_argument("WhamInput: counts must be non-negative and finite");
    }
    if ((window_counts.array() <= 0.0).any()) throw std::invalid_argument("WhamInput: window_counts must be positive");
    if (!bias.allFinite()) throw std::invalid_argument("WhamInput: non-finite bias");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("WhamInput: beta must be positive");
    if (counts.sum() <= 0.0) throw std::invalid_argument("WhamInput: no samples in any histogram");
  }
};

struct WhamResult {
  EmpiricalPdf pdf;
  Eigen::VectorXd offsets;  // f_i, f_1 = 0
  long iterations = 0;
  double residual = 0.0;
};

inline WhamResult wham(const WhamInput& input, double tolerance = 1e-10, long max_iterations = 100000) {
  input.validate();
  if (!(tolerance > 0.0)) throw std::invalid_argument("wham: tolerance must be positive");
  if (max_iterations < 1) throw std::invalid_argument("wham: max_iterations must be >= 1");

  const Eigen::Index K = input.counts.rows();
  const Eigen::Index n_bins = input.counts.cols();
  const Eigen::RowVectorXd col_counts = input.counts.colwise().sum();
  const Eigen::MatrixXd boltz = (-input.beta * input.bias).array().exp();  // exp(-beta W_ij)

  Eigen::VectorXd f = Eigen::VectorXd::Zero(K);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(n_bins);
  double residual = 0.0;
  long it = 0;
  for (; it < max_iterations; ++it) {
    for (Eigen::Index j = 0; j < n_bins; ++j) {
      double denom = 0.0;
      for (Eigen::Index i = 0; i < K; ++i) {
        denom += input.window_counts(i) * std::exp(f(i)) * boltz(i, j);
      }
      p(j) = denom > 0.0 ? col_counts(j) / denom : 0.0;
    }
    residual = 0.0;
    Eigen::VectorXd f_new(K);
    for (Eigen::Index i = 0; i < K; ++i) {
      const double z = boltz.row(i).dot(p.transpose());
      f_new(i) = -std::log(z);
    }
    f_new.array() -= f_new(0);  // gauge: f_1 = 0
    residual = (f_new - f).cwiseAbs().maxCoeff();
    f = f_new;
    if (residual < tolerance) break;
  }
  if (residual >= tolerance) {
    throw ConvergenceError(residual, strfmt("wham: no convergence after %ld iterations (residual %g)",
                                            max_iterations, residual));
  }

  WhamResult result;
  result.offsets = f;
  result.iterations = it + 1;
  result.residual = residual;
  // Normalize bin masses into densities on the shared grid.
  const double total = p.sum();
  if (!(total > 0.0)) throw std::invalid_argument("wham: recovered distribution has no mass");
  result.pdf.bin_edges = input.bin_edges;
  result.pdf.densities.resize(static_cast<std::size_t>(n_bins));
  for (Eigen::Index j = 0; j < n_bins; ++j) {
    const double width = input.bin_edges[static_cast<std::size_t>(j) + 1] - input.bin_edges[static_cast<std::size_t>(j)];
    result.pdf.densities[static_cast<std::size_t>(j)] = p(j) / total / width;
  }
  result.pdf.n_samples = static_cast<std::size_t>(input.counts.sum());
  result.pdf.out_of_range = 0;
  return result;
}

// Histogram counts on a grid, ignoring out-of-range samples (their number is
// the caller's concern; WHAM weights only what landed on the grid).
inline Eigen::VectorXd bin_counts(const std::vector<double>& samples, const std::vector<double>& edges) {
  check_edges(edges);
  Eigen::VectorXd counts = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(edges.size()) - 1);
  for (double s : samples) {
    if (!std::isfinite(s)) throw std::invalid_argument("bin_counts: non-finite sample");
    if (s < edges.front() || s >= edges.back()) continue;
    const auto it = std::upper_bound(edges.begin(), edges.end(), s);
    counts(static_cast<Eigen::Index>(it - edges.begin()) - 1) += 1.0;
  }
  return counts;
}

inline std::vector<double> bin_centers(const std::vector<double>& edges) {
  check_edges(edges);
  std::vector<double> centers(edges.size() - 1);
  for (std::size_t j = 0; j + 1 < edges.size(); ++j) centers[j] = 0.5 * (edges[j] + edges[j + 1]);
  return centers;
}

}  // namespace sgmus
