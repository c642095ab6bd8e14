#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <sgmus/rng.hpp>
#include <sgmus/wham.hpp>

using sgmus::WhamInput;

namespace {

WhamInput single_window_input() {
  WhamInput in;
  in.bin_edges = sgmus::uniform_edges(-2.0, 2.0, 40);
  in.counts.resize(1, 40);
  for (int j = 0; j < 40; ++j) {
    const double c = -2.0 + 4.0 * (j + 0.5) / 40.0;
    in.counts(0, j) = std::floor(1000.0 * std::exp(-c * c));
  }
  in.window_counts.resize(1);
  in.window_counts << in.counts.sum();
  in.bias = Eigen::MatrixXd::Zero(1, 40);
  in.beta = 2.0;
  return in;
}

}  // namespace

TEST_CASE("single unbiased window reproduces its own histogram", "[wham]") {
  const auto in = single_window_input();
  const auto res = sgmus::wham(in);
  const double width = in.bin_edges[1] - in.bin_edges[0];
  const double total = in.counts.sum();
  for (int j = 0; j < 40; ++j) {
    REQUIRE(res.pdf.densities[j] == Catch::Approx(in.counts(0, j) / (total * width)).margin(1e-10));
  }
  REQUIRE(res.offsets.size() == 1);
  REQUIRE(res.offsets[0] == 0.0);  // gauge: first offset pinned
}

TEST_CASE("duplicating a window leaves the estimate unchanged", "[wham]") {
  const auto one = single_window_input();
  WhamInput two = one;
  two.counts.resize(2, 40);
  two.counts.row(0) = one.counts.row(0);
  two.counts.row(1) = one.counts.row(0);
  two.bias = Eigen::MatrixXd::Zero(2, 40);
  two.window_counts.resize(2);
  two.window_counts << one.window_counts[0], one.window_counts[0];
  const auto a = sgmus::wham(one);
  const auto b = sgmus::wham(two);
  for (int j = 0; j < 40; ++j) {
    REQUIRE(b.pdf.densities[j] == Catch::Approx(a.pdf.densities[j]).margin(1e-10));
  }
}

TEST_CASE("bias gauge shifts cancel in the density", "[wham]") {
  // adding a constant to one window's bias only moves its offset
  auto in = single_window_input();
  WhamInput shifted = in;
  shifted.bias.array() += 3.7;
  const auto a = sgmus::wham(in);
  const auto b = sgmus::wham(shifted);
  for (int j = 0; j < 40; ++j) {
    REQUIRE(b.pdf.densities[j] == Catch::Approx(a.pdf.densities[j]).margin(1e-9));
  }
}

TEST_CASE("the estimate conserves probability mass to 1e-10", "[wham]") {
  sgmus::GaussianStream rng(31);
  WhamInput in;
  in.bin_edges = sgmus::uniform_edges(-2.0, 2.0, 25);
  in.counts.resize(3, 25);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 25; ++j) in.counts(i, j) = std::floor(rng.uniform(0.0, 50.0));
  in.window_counts.resize(3);
  in.window_counts = in.counts.rowwise().sum();
  in.bias.resize(3, 25);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 25; ++j) {
      const double c = -2.0 + 4.0 * (j + 0.5) / 25.0;
      in.bias(i, j) = 0.5 * 2.0 * (c - (i - 1.0)) * (c - (i - 1.0));
    }
  in.beta = 2.0;
  const auto res = sgmus::wham(in);
  REQUIRE(std::abs(res.pdf.integral() - 1.0) < 1e-10);
}

TEST_CASE("five restrained windows recover a double-well density", "[wham]") {
  // beta = 2, V(x) = x^4 - 2 x^2; windows restrained at 5 centers across the
  // barrier; samples drawn by rejection from the exact biased densities
  const double beta = 2.0;
  auto V = [](double x) { return x * x * x * x - 2.0 * x * x; };
  const auto edges = sgmus::uniform_edges(-2.0, 2.0, 80);
  const std::vector<double> centers{-1.2, -0.6, 0.0, 0.6, 1.2};
  const double kappa = 4.0;

  sgmus::GaussianStream rng(8675309);
  const int per_window = 40000;
  WhamInput in;
  in.bin_edges = edges;
  in.counts = Eigen::MatrixXd::Zero(5, 80);
  in.bias.resize(5, 80);
  in.window_counts.resize(5);
  in.beta = beta;
  for (int i = 0; i < 5; ++i) {
    auto W = [&](double x) { return 0.5 * kappa * (x - centers[i]) * (x - centers[i]); };
    // envelope for rejection: biased log-density bounded above by its max on a scan
    double fmax = 0.0;
    for (int s = 0; s <= 1000; ++s) {
      const double x = -2.0 + 4.0 * s / 1000.0;
      fmax = std::max(fmax, std::exp(-beta * (V(x) + W(x))));
    }
    long kept = 0;
    while (kept < per_window) {
      const double x = rng.uniform(-2.0, 2.0);
      if (rng.uniform() * fmax <= std::exp(-beta * (V(x) + W(x)))) {
        const auto bin = static_cast<int>((x + 2.0) / 4.0 * 80.0);
        in.counts(i, std::min(bin, 79)) += 1.0;
        ++kept;
      }
    }
    in.window_counts[i] = per_window;
    for (int j = 0; j < 80; ++j) {
      const double c = 0.5 * (edges[j] + edges[j + 1]);
      in.bias(i, j) = W(c);
    }
  }

  const auto res = sgmus::wham(in, 1e-10, 100000);
  sgmus::EmpiricalPdf exact;
  exact.bin_edges = edges;
  exact.densities.resize(80);
  exact.n_samples = 1;
  double Z = 0.0;
  for (int j = 0; j < 80; ++j) {
    const double c = 0.5 * (edges[j] + edges[j + 1]);
    exact.densities[j] = std::exp(-beta * V(c));
    Z += exact.densities[j] * (edges[j + 1] - edges[j]);
  }
  for (auto& d : exact.densities) d /= Z;
  REQUIRE(sgmus::l1_distance(res.pdf, exact) <= 0.05);
  // offsets are gauged to the first window and strictly ordered by overlap
  REQUIRE(res.offsets[0] == 0.0);
  REQUIRE(res.residual <= 1e-10);
}

TEST_CASE("an impossible iteration budget raises ConvergenceError", "[wham]") {
  sgmus::GaussianStream rng(4);
  WhamInput in;
  in.bin_edges = sgmus::uniform_edges(-1.0, 1.0, 10);
  in.counts.resize(2, 10);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 10; ++j) in.counts(i, j) = 1.0 + std::floor(rng.uniform(0.0, 9.0));
  in.window_counts.resize(2);
  in.window_counts = in.counts.rowwise().sum();
  in.bias.resize(2, 10);
  for (int j = 0; j < 10; ++j) {
    const double c = -1.0 + 2.0 * (j + 0.5) / 10.0;
    in.bias(0, j) = 2.0 * c * c;
    in.bias(1, j) = 2.0 * (c - 1.0) * (c - 1.0);
  }
  in.beta = 1.0;
  try {
    (void)sgmus::wham(in, 1e-14, 1);
    FAIL("expected ConvergenceError");
  } catch (const sgmus::ConvergenceError& e) {
    REQUIRE(e.residual() > 0.0);
  }
}

TEST_CASE("wham validates input shapes", "[wham]") {
  auto in = single_window_input();
  in.bias.resize(2, 40);  // window count mismatch
  REQUIRE_THROWS_AS(sgmus::wham(in), std::invalid_argument);
  in = single_window_input();
  in.counts(0, 3) = -1.0;
  REQUIRE_THROWS_AS(sgmus::wham(in), std::invalid_argument);
  in = single_window_input();
  in.beta = 0.0;
  REQUIRE_THROWS_AS(sgmus::wham(in), std::invalid_argument);
}

TEST_CASE("bin_counts places samples and skips out-of-range values", "[wham]") {
  const auto edges = sgmus::uniform_edges(0.0, 1.0, 4);
  const auto counts = sgmus::bin_counts({0.1, 0.1, 0.6, 2.0}, edges);
  REQUIRE(counts.size() == 4);
  REQUIRE(counts[0] == 2.0);
  REQUIRE(counts[2] == 1.0);
  REQUIRE(counts.sum() == 3.0);
  REQUIRE_THROWS_AS(sgmus::bin_counts({std::nan("")}, edges), std::invalid_argument);
  const auto centers = sgmus::bin_centers(edges);
  REQUIRE(centers.size() == 4);
  REQUIRE(centers[0] == Catch::Approx(0.125));
}
