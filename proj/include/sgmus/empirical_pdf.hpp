#pragma once

// Binned probability densities and the L1 metric used to compare them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "sgmus/common.hpp"

namespace sgmus {

// A piecewise-constant density: densities[j] holds the value on
// [bin_edges[j], bin_edges[j+1]). A proper pdf integrates to 1; estimates
// built from samples that partly fall outside the grid integrate to
// 1 - out_of_range fraction, with the spilled count reported rather than
// silently dropped.
struct EmpiricalPdf {
  std::vector<double> bin_edges;
  std::vector<double> densities;
  std::size_t n_samples = 0;      // 0 for analytic densities
  std::size_t out_of_range = 0;

  std::size_t n_bins() const { return densities.size(); }

  double integral() const {
    double s = 0.0;
    for (std::size_t j = 0; j < densities.size(); ++j)
      s += densities[j] * (bin_edges[j + 1] - bin_edges[j]);
    return s;
  }

  // Center of the highest-density bin.
  double mode() const {
    std::size_t j = static_cast<std::size_t>(
        std::max_element(densities.begin(), densities.end()) - densities.begin());
    return 0.5 * (bin_edges[j] + bin_edges[j + 1]);
  }
};

inline void check_edges(const std::vector<double>& edges) {
  if (edges.size() < 2)
    throw std::invalid_argument("bin edges: need at least 2 points");
  for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
    if (!(edges[i] < edges[i + 1]))
      throw std::invalid_argument("bin edges: must be strictly increasing");
    if (!std::isfinite(edges[i]) || !std::isfinite(edges[i + 1]))
      throw std::invalid_argument("bin edges: must be finite");
  }
}

// Uniform grid of n_bins bins over [lo, hi], returned as n_bins+1 edges.
inline std::vector<double> uniform_edges(double lo, double hi, std::size_t n_bins) {
  if (!(lo < hi) || n_bins == 0)
    throw std::invalid_argument("uniform_edges: need lo < hi and n_bins > 0");
  std::vector<double> edges(n_bins + 1);
  for (std::size_t i = 0; i <= n_bins; ++i)
    edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n_bins);
  return edges;
}

// Default fast-coordinate grid for the benchmark systems: 200 bins on
// [-2.5, 2.5], wide enough for every conditional the pipeline produces.
inline std::vector<double> default_fast_grid() { return uniform_edges(-2.5, 2.5, 200); }

// Histogram density estimate. Densities are normalized by the TOTAL sample
// count, so the in-range integral plus the out-of-range fraction is exactly 1.
inline EmpiricalPdf estimate_pdf(const std::vector<double>& samples,
                                 const std::vector<double>& edges) {
  check_edges(edges);
  if (samples.empty()) throw std::invalid_argument("estimate_pdf: no samples");
  const std::size_t n_bins = edges.size() - 1;
  std::vector<std::size_t> counts(n_bins, 0);
  std::size_t spilled = 0;
  for (double x : samples) {
    if (!std::isfinite(x)) throw std::invalid_argument("estimate_pdf: non-finite sample");
    if (x < edges.front() || x >= edges.back()) {
      ++spilled;
      continue;
    }
    // Upper bound minus one gives the bin with edges[j] <= x < edges[j+1].
    std::size_t j = static_cast<std::size_t>(
        std::upper_bound(edges.begin(), edges.end(), x) - edges.begin() - 1);
    if (j >= n_bins) j = n_bins - 1;
    ++counts[j];
  }
  if (spilled == samples.size())
    throw std::invalid_argument("estimate_pdf: all samples outside the grid");
  EmpiricalPdf pdf;
  pdf.bin_edges = edges;
  pdf.densities.resize(n_bins);
  pdf.n_samples = samples.size();
  pdf.out_of_range = spilled;
  const double n_total = static_cast<double>(samples.size());
  for (std::size_t j = 0; j < n_bins; ++j)
    pdf.densities[j] = static_cast<double>(counts[j]) / (n_total * (edges[j + 1] - edges[j]));
  return pdf;
}

// L1 distance between two densities on the same grid:
//   sum_j |p_j - q_j| * width_j,  bounded by 2 for proper pdfs.
inline double l1_distance(const EmpiricalPdf& p, const EmpiricalPdf& q) {
  if (p.bin_edges != q.bin_edges)
    throw std::invalid_argument("l1_distance: bin edges differ");
  double s = 0.0;
  for (std::size_t j = 0; j < p.densities.size(); ++j)
    s += std::abs(p.densities[j] - q.densities[j]) * (p.bin_edges[j + 1] - p.bin_edges[j]);
  return s;
}

}  // namespace sgmus
