#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include <sgmus/empirical_pdf.hpp>
#include <sgmus/rng.hpp>
#include <sgmus/system.hpp>

using sgmus::FastSlowSystem;
using sgmus::HarmonicBias;
using sgmus::State2;

TEST_CASE("moving-well drift vanishes at the analytic zero", "[system]") {
  const auto sys = FastSlowSystem::moving_well();
  // fast drift = 1 - 0.2 x1 - 4 x2 (x2^2 - 1); zero at (5, 1)
  const auto f = sgmus::drift(sys, State2(5.0, 1.0));
  REQUIRE(f[0] == Catch::Approx(sys.a1).margin(1e-15));
  REQUIRE(f[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("fixed-well drift vanishes at the x2 = -1 well", "[system]") {
  const auto sys = FastSlowSystem::fixed_well(8.0);
  // V = (1+x2)^2 p(x2): both V' factors carry (1+x2), so x2 = -1 is stationary
  const auto f = sgmus::drift(sys, State2(0.0, -1.0));
  REQUIRE(f[1] == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("harmonic restraint adds -kappa (x1 - center) to the slow drift", "[system]") {
  const auto sys = FastSlowSystem::moving_well();
  HarmonicBias bias{10.0, 5.0};
  const auto f = sgmus::drift(sys, State2(0.0, 0.0), &bias);
  REQUIRE(f[0] == Catch::Approx(sys.a1 + 50.0).margin(1e-12));
  REQUIRE(f[1] == Catch::Approx(1.0).margin(1e-14));  // at (0,0): -(-1) = 1
}

TEST_CASE("fast drift is the negative gradient of the fast potential", "[system]") {
  // five-point stencil at h = 1e-3: exact to rounding for degree <= 6 polynomials
  const std::vector<FastSlowSystem> systems{
      FastSlowSystem::moving_well(), FastSlowSystem::fixed_well(8.0), FastSlowSystem::fixed_well(4.0, 1.0)};
  sgmus::GaussianStream rng(11);
  for (const auto& sys : systems) {
    for (int trial = 0; trial < 50; ++trial) {
      const double x1 = rng.uniform(0.0, 10.0);
      const double x2 = rng.uniform(-1.8, 1.8);
      const double h = 1e-3;
      auto V = [&](double z) { return sgmus::fast_potential(sys, z, x1); };
      const double fd =
          -(-V(x2 + 2 * h) + 8 * V(x2 + h) - 8 * V(x2 - h) + V(x2 - 2 * h)) / (12 * h);
      const auto f = sgmus::drift(sys, State2(x1, x2));
      REQUIRE(std::abs(f[1] - fd) <= 1e-10 * std::max(1.0, std::abs(fd)));
    }
  }
}

TEST_CASE("moving-well conditional density is symmetric at slow value 5", "[system]") {
  // tilt coefficient 0.2 z1 - 1 vanishes at z1 = 5; V is then even in x2
  const auto sys = FastSlowSystem::moving_well();
  const auto grid = sgmus::default_fast_grid();
  const auto pdf = sgmus::stationary_conditional_pdf(sys, 5.0, grid);
  const std::size_t n = pdf.n_bins();
  for (std::size_t j = 0; j < n / 2; ++j) {
    REQUIRE(pdf.densities[j] == Catch::Approx(pdf.densities[n - 1 - j]).margin(1e-10));
  }
  REQUIRE(pdf.integral() == Catch::Approx(1.0).margin(1e-8));
}

TEST_CASE("moving-well conditional density is unimodal at slow value 12", "[system]") {
  const auto sys = FastSlowSystem::moving_well();
  const auto pdf = sgmus::stationary_conditional_pdf(sys, 12.0, sgmus::default_fast_grid());
  // at this tilt the positive well survives only as a vestigial hump with
  // e^(-beta dV) ~ 2e-4 of the peak height; unimodal means one maximum above
  // a 1% prominence floor and negligible mass on the positive side
  int maxima = 0;
  const auto& d = pdf.densities;
  const double floor = 1e-2 * *std::max_element(d.begin(), d.end());
  for (std::size_t j = 1; j + 1 < d.size(); ++j) {
    if (d[j] > floor && d[j] >= d[j - 1] && d[j] > d[j + 1]) ++maxima;
  }
  REQUIRE(maxima == 1);
  double positive_mass = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) {
    const double lo = pdf.bin_edges[j], hi = pdf.bin_edges[j + 1];
    if (0.5 * (lo + hi) > 0.0) positive_mass += d[j] * (hi - lo);
  }
  REQUIRE(positive_mass < 1e-3);
  // the single mode sits in the negative basin
  REQUIRE(pdf.mode() < 0.0);
}

TEST_CASE("conditional density depends only on the fast potential and a3", "[system]") {
  // slow-channel parameters a1, a2 must not enter the conditional density
  const auto a = FastSlowSystem::fixed_well(8.0, 0.0, 1e-4, 1e-4, 1.0);
  const auto b = FastSlowSystem::fixed_well(8.0, 0.0, 3e-2, 5e-3, 1.0);
  const auto grid = sgmus::default_fast_grid();
  const auto pa = sgmus::stationary_conditional_pdf(a, 3.0, grid);
  const auto pb = sgmus::stationary_conditional_pdf(b, 3.0, grid);
  for (std::size_t j = 0; j < pa.n_bins(); ++j) {
    REQUIRE(pa.densities[j] == Catch::Approx(pb.densities[j]).margin(1e-14));
  }
}

TEST_CASE("fixed-well density reflects the Boltzmann weight of the asymmetry", "[system]") {
  // k > 0 deepens the +1 well: mass at +1 should dominate
  const auto sys = FastSlowSystem::fixed_well(4.0, 1.0);
  const auto pdf = sgmus::stationary_conditional_pdf(sys, 0.0, sgmus::default_fast_grid());
  double neg = 0.0, pos = 0.0;
  for (std::size_t j = 0; j < pdf.n_bins(); ++j) {
    const double c = 0.5 * (pdf.bin_edges[j] + pdf.bin_edges[j + 1]);
    const double mass = pdf.densities[j] * (pdf.bin_edges[j + 1] - pdf.bin_edges[j]);
    (c < 0 ? neg : pos) += mass;
  }
  REQUIRE(pos > neg);
}

TEST_CASE("a grid that misses a populated well triggers a warning", "[system]") {
  const auto sys = FastSlowSystem::fixed_well(8.0);
  std::vector<std::string> warnings;
  const auto grid = sgmus::uniform_edges(0.0, 2.5, 100);  // excludes the -1 well
  (void)sgmus::stationary_conditional_pdf(sys, 0.0, grid, &warnings);
  REQUIRE_FALSE(warnings.empty());
  // full default grid sees both wells: no warning
  warnings.clear();
  (void)sgmus::stationary_conditional_pdf(sys, 0.0, sgmus::default_fast_grid(), &warnings);
  REQUIRE(warnings.empty());
}

TEST_CASE("system validation rejects bad parameters", "[system]") {
  auto bad = FastSlowSystem::moving_well();
  bad.a3 = 0.0;
  REQUIRE_THROWS_AS(bad.validate(), std::invalid_argument);
  auto neg = FastSlowSystem::moving_well();
  neg.a2 = -1.0;
  REQUIRE_THROWS_AS(neg.validate(), std::invalid_argument);
  auto hk = FastSlowSystem::moving_well();
  hk.h = 1.0;
  REQUIRE_THROWS_AS(hk.validate(), std::invalid_argument);
  REQUIRE_THROWS_AS(sgmus::drift(FastSlowSystem::moving_well(), State2(std::nan(""), 0.0)),
                    std::invalid_argument);
  REQUIRE(sgmus::system_name(sgmus::SystemId::MovingWell) == std::string("moving_well"));
  REQUIRE(sgmus::system_name(sgmus::SystemId::FixedWell) == std::string("fixed_well"));
}

TEST_CASE("beta_eff follows the overdamped fluctuation-dissipation relation", "[system]") {
  REQUIRE(FastSlowSystem::fixed_well(8.0).beta_eff() == Catch::Approx(2.0));
  REQUIRE(FastSlowSystem::moving_well(1e-4, 1e-4, 0.8).beta_eff() == Catch::Approx(2.0 / 0.64));
}
