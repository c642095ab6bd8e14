#pragma once

// Convergence benchmark: many independent experiments comparing umbrella
// sampling alone (walkers started from training data nearest the bias center,
// single-basin) against umbrella sampling initialized by generated
// microstates, measured as L1 distance to the analytic conditional density.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"
#include "sgmus/dataset.hpp"
#include "sgmus/empirical_pdf.hpp"
#include "sgmus/network.hpp"
#include "sgmus/parallel.hpp"
#include "sgmus/rng.hpp"
#include "sgmus/sample.hpp"
#include "sgmus/stats.hpp"
#include "sgmus/system.hpp"
#include "sgmus/umbrella.hpp"

namespace sgmus {

enum class MethodTag { USOnly, CoupledSgmUs };

inline const char* method_name(MethodTag m) {
  switch (m) {
    case MethodTag::USOnly: return "us_only";
    case MethodTag::CoupledSgmUs: return "coupled_sgm_us";
  }
  throw std::invalid_argument("unknown method tag");
}

struct ConvergenceCurve {
  std::vector<std::size_t> sample_sizes;  // steps per window
  std::vector<double> mean_l1;
  std::vector<double> stderr_l1;
  std::size_t n_experiments = 0;
  MethodTag method = MethodTag::USOnly;
};

struct StudyConfig {
  std::vector<std::size_t> sample_sizes{250, 1000, 4000};
  std::size_t n_experiments = 100;
  std::size_t n_windows = 10;
  double label = 5.0;  // conditioning label and bias center
  double kappa = 10.0;
  double dt = 1e-2;
  Eigen::Index generate_steps = 500;
  std::vector<double> grid = default_fast_grid();
  std::size_t baseline_pool = 100;  // nearest-in-slow candidates for the uninformed draw
  std::uint64_t seed = 0;

  void validate() const {
    if (sample_sizes.empty()) throw ConfigError("sample_sizes", "must be non-empty");
    for (auto s : sample_sizes) {
      if (s < 1) throw ConfigError("sample_sizes", "entries must be >= 1");
    }
    if (n_experiments < 2) throw ConfigError("n_experiments", "must be >= 2");
    if (n_windows < 1) throw ConfigError("n_windows", "must be >= 1");
    if (kappa < 0.0) throw ConfigError("kappa", "must be >= 0");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt", "must be positive and finite");
    if (generate_steps < 2) throw ConfigError("generate_steps", "must be >= 2");
    if (baseline_pool < 1) throw ConfigError("baseline_pool", "must be >= 1");
    check_edges(grid);
  }
};

namespace detail {

// Indices of the training points nearest the center in label, restricted to
// the positive fast basin (the uninformed single-basin baseline).
inline std::vector<Eigen::Index> baseline_candidates(const LabeledDataset& training, double center,
                                                     std::size_t pool) {
  if (!training.has_labels()) throw std::invalid_argument("convergence_study: training data must be labeled");
  std::vector<Eigen::Index> idx;
  idx.reserve(static_cast<std::size_t>(training.size()));
  for (Eigen::Index i = 0; i < training.size(); ++i) {
    if (training.points(i, 1) > 0.0) idx.push_back(i);
  }
  if (idx.empty()) throw std::invalid_argument("convergence_study: no training points in the positive basin");
  const auto by_distance = [&](Eigen::Index a, Eigen::Index b) {
    const double da = std::abs(training.labels(a) - center);
    const double db = std::abs(training.labels(b) - center);
    return da < db || (da == db && a < b);
  };
  const std::size_t keep = std::min(pool, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep), idx.end(), by_distance);
  idx.resize(keep);
  return idx;
}

}  // namespace detail

struct ConvergenceStudyResult {
  ConvergenceCurve us_only;
  ConvergenceCurve coupled;
  // per-experiment L1 values, [size_index][experiment]
  std::vector<std::vector<double>> us_only_l1;
  std::vector<std::vector<double>> coupled_l1;
};

inline ConvergenceStudyResult convergence_study(const FastSlowSystem& sys, const LabeledDataset& training,
                                                const ScoreNetwork& net, const StudyConfig& cfg) {
  cfg.validate();
  sys.validate();
  const EmpiricalPdf reference = stationary_conditional_pdf(sys, cfg.label, cfg.grid);
  const auto candidates = detail::baseline_candidates(training, cfg.label, cfg.baseline_pool);

  const std::size_t n_sizes = cfg.sample_sizes.size();
  ConvergenceStudyResult result;
  result.us_only_l1.assign(n_sizes, std::vector<double>(cfg.n_experiments, 0.0));
  result.coupled_l1.assign(n_sizes, std::vector<double>(cfg.n_experiments, 0.0));

  parallel_for(cfg.n_experiments, [&](std::size_t e) {
    const std::uint64_t exp_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(e), stream_purpose::kExperiment);
    for (std::size_t si = 0; si < n_sizes; ++si) {
      const std::uint64_t size_seed = derive_seed(exp_seed, static_cast<std::uint64_t>(si), stream_purpose::kExperiment);
      const std::size_t n_steps = cfg.sample_sizes[si];

      // uninformed baseline: draw window starts from the candidate pool
      GaussianStream draw(derive_seed(size_seed, 0, stream_purpose::kInit));
      std::vector<UmbrellaWindow> windows(cfg.n_windows);
      for (std::size_t w = 0; w < cfg.n_windows; ++w) {
        const auto pick = candidates[static_cast<std::size_t>(draw.below(candidates.size()))];
        windows[w].initial_state = training.points.row(pick).transpose();
        windows[w].bias = HarmonicBias{cfg.kappa, cfg.label};
        windows[w].n_steps = n_steps;
        windows[w].dt = cfg.dt;
        windows[w].seed = derive_seed(size_seed, static_cast<std::uint64_t>(w), stream_purpose::kWindow);
      }
      const auto us_pdf = pool_histograms(run_windows(sys, windows), cfg.grid);
      result.us_only_l1[si][e] = l1_distance(us_pdf, reference);

      // coupled: same budget, initial states generated at the label
      WindowConfig wc;
      wc.n_windows = cfg.n_windows;
      wc.n_steps = n_steps;
      wc.dt = cfg.dt;
      wc.kappa = cfg.kappa;
      wc.center_mode = CenterMode::AtLabel;
      wc.generate_steps = cfg.generate_steps;
      wc.grid = cfg.grid;
      wc.seed = derive_seed(size_seed, 1, stream_purpose::kInit);
      const auto coupled = coupled_pipeline(net, sys, cfg.label, wc);
      result.coupled_l1[si][e] = l1_distance(coupled.pooled, reference);
    }
  });

  auto reduce = [&](const std::vector<std::vector<double>>& per_size, MethodTag tag) {
    ConvergenceCurve c;
    c.sample_sizes = cfg.sample_sizes;
    c.n_experiments = cfg.n_experiments;
    c.method = tag;
    for (const auto& vals : per_size) {
      c.mean_l1.push_back(mean_of(vals));
      c.stderr_l1.push_back(stddev_of(vals) / std::sqrt(static_cast<double>(vals.size())));
    }
    return c;
  };
  result.us_only = reduce(result.us_only_l1, MethodTag::USOnly);
  result.coupled = reduce(result.coupled_l1, MethodTag::CoupledSgmUs);
  return result;
}

inline void save_convergence_csv(const ConvergenceCurve& curve, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(strfmt("save_convergence_csv: cannot open %s", path.c_str()));
  os << "sample_size,mean_l1,stderr_l1,n_experiments,method_tag\n";
  for (std::size_t i = 0; i < curve.sample_sizes.size(); ++i) {
    os << strfmt("%zu,%.17g,%.17g,%zu,%s\n", curve.sample_sizes[i], curve.mean_l1[i], curve.stderr_l1[i],
                 curve.n_experiments, method_name(curve.method));
  }
}

}  // namespace sgmus
