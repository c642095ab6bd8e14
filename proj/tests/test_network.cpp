#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>

#include <sgmus/network.hpp>
#include <sgmus/rng.hpp>

using sgmus::NoiseSchedule;
using sgmus::NormStats;
using sgmus::ScoreNetwork;

namespace {

NormStats unit_stats(Eigen::Index dim) {
  NormStats st;
  st.x_mean = Eigen::VectorXd::Zero(dim);
  st.x_scale = Eigen::VectorXd::Ones(dim);
  st.y_mean = 0.0;
  st.y_scale = 1.0;
  st.y_min = -1.0;
  st.y_max = 1.0;
  return st;
}

NoiseSchedule bench_schedule() {
  NoiseSchedule s;
  s.sigma_max = 1.5;
  return s;
}

ScoreNetwork small_net(std::uint64_t seed) {
  auto net = sgmus::make_score_network(2, {8, 8}, 4, seed, bench_schedule(), unit_stats(2));
  // the final layer starts at zero; randomize everything for gradient tests
  sgmus::GaussianStream rng(seed + 1);
  for (auto& W : net.weights)
    for (Eigen::Index i = 0; i < W.rows(); ++i)
      for (Eigen::Index j = 0; j < W.cols(); ++j) W(i, j) = 0.5 * rng.normal();
  for (auto& b : net.biases)
    for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = 0.2 * rng.normal();
  return net;
}

// one-parameter linear "network" for closed-form gradient checks
ScoreNetwork scalar_net(double w) {
  ScoreNetwork net;
  net.layer_widths = {1, 1};
  net.weights = {Eigen::MatrixXd::Constant(1, 1, w)};
  net.biases = {Eigen::VectorXd::Zero(1)};
  return net;
}

}  // namespace

TEST_CASE("freshly initialized networks output exactly zero", "[network]") {
  const auto net = sgmus::make_score_network(2, {16, 16}, 8, 3, bench_schedule(), unit_stats(2));
  net.validate();
  const auto out = net.forward(Eigen::Vector2d(0.3, -0.7), 0.5, 0.2);
  REQUIRE(out[0] == 0.0);
  REQUIRE(out[1] == 0.0);
}

TEST_CASE("initialization is deterministic in the seed", "[network]") {
  const auto a = sgmus::make_score_network(2, {8, 8}, 4, 11, bench_schedule(), unit_stats(2));
  const auto b = sgmus::make_score_network(2, {8, 8}, 4, 11, bench_schedule(), unit_stats(2));
  const auto c = sgmus::make_score_network(2, {8, 8}, 4, 12, bench_schedule(), unit_stats(2));
  for (Eigen::Index l = 0; l < a.n_layers(); ++l) REQUIRE(a.weights[l] == b.weights[l]);
  REQUIRE(a.fourier_freqs == b.fourier_freqs);
  REQUIRE(a.fourier_freqs != c.fourier_freqs);
}

TEST_CASE("time embedding pairs satisfy sin^2 + cos^2 = 1", "[network]") {
  const auto net = small_net(5);
  Eigen::VectorXd ts(3);
  ts << 0.1, 0.5, 0.9;
  const auto emb = net.embed_times(ts);
  const Eigen::Index nf = net.fourier_freqs.size();
  REQUIRE(emb.rows() == 2 * nf);
  for (Eigen::Index j = 0; j < 3; ++j)
    for (Eigen::Index i = 0; i < nf; ++i)
      REQUIRE(emb(i, j) * emb(i, j) + emb(nf + i, j) * emb(nf + i, j) == Catch::Approx(1.0).margin(1e-14));
}

TEST_CASE("backward reproduces the single-weight closed form", "[network]") {
  // f(w) = w x at x = 2 with unit upstream gradient: df/dw = 2
  auto net = scalar_net(0.7);
  sgmus::ForwardCache cache;
  Eigen::MatrixXd input(1, 1);
  input << 2.0;
  const auto out = net.forward_assembled(input, &cache);
  REQUIRE(out(0, 0) == Catch::Approx(1.4).margin(1e-15));
  const auto grads = sgmus::backward(net, cache, Eigen::MatrixXd::Ones(1, 1));
  REQUIRE(grads.dW[0](0, 0) == Catch::Approx(2.0).margin(1e-15));
  REQUIRE(grads.db[0](0) == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("zero upstream gradient yields a zero bundle", "[network]") {
  auto net = small_net(9);
  sgmus::ForwardCache cache;
  Eigen::MatrixXd input = Eigen::MatrixXd::Random(net.input_dim(), 3);
  (void)net.forward_assembled(input, &cache);
  const auto grads = sgmus::backward(net, cache, Eigen::MatrixXd::Zero(net.output_dim(), 3));
  for (Eigen::Index l = 0; l < net.n_layers(); ++l) {
    REQUIRE(grads.dW[l].cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(grads.db[l].cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("backward matches central finite differences on random nets", "[network]") {
  // 100 random configurations; step 1e-5; relative error <= 1e-5
  // (denominator guarded for near-zero entries)
  sgmus::GaussianStream meta(2718);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    auto net = small_net(1000 + trial);
    const Eigen::Index B = 1 + static_cast<Eigen::Index>(meta.below(3));
    Eigen::MatrixXd input(net.input_dim(), B);
    for (Eigen::Index i = 0; i < input.rows(); ++i)
      for (Eigen::Index j = 0; j < B; ++j) input(i, j) = meta.normal();
    Eigen::MatrixXd G(net.output_dim(), B);
    for (Eigen::Index i = 0; i < G.rows(); ++i)
      for (Eigen::Index j = 0; j < B; ++j) G(i, j) = meta.normal();

    auto loss = [&]() {
      return (net.forward_assembled(input, nullptr).array() * G.array()).sum();
    };
    sgmus::ForwardCache cache;
    (void)net.forward_assembled(input, &cache);
    const auto grads = sgmus::backward(net, cache, G);

    const double h = 1e-5;
    for (Eigen::Index l = 0; l < net.n_layers(); ++l) {
      // probe a handful of weights and every bias per layer
      for (int probe = 0; probe < 5; ++probe) {
        const Eigen::Index i = static_cast<Eigen::Index>(meta.below(net.weights[l].rows()));
        const Eigen::Index j = static_cast<Eigen::Index>(meta.below(net.weights[l].cols()));
        const double keep = net.weights[l](i, j);
        net.weights[l](i, j) = keep + h;
        const double up = loss();
        net.weights[l](i, j) = keep - h;
        const double dn = loss();
        net.weights[l](i, j) = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(grads.dW[l](i, j) - fd) / (std::abs(fd) + 1e-4));
      }
      for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) {
        const double keep = net.biases[l](i);
        net.biases[l](i) = keep + h;
        const double up = loss();
        net.biases[l](i) = keep - h;
        const double dn = loss();
        net.biases[l](i) = keep;
        const double fd = (up - dn) / (2 * h);
        worst = std::max(worst, std::abs(grads.db[l](i) - fd) / (std::abs(fd) + 1e-4));
      }
    }
  }
  REQUIRE(worst <= 1e-5);
}

TEST_CASE("backward rejects mismatched shapes", "[network]") {
  auto net = small_net(3);
  sgmus::ForwardCache cache;
  Eigen::MatrixXd input = Eigen::MatrixXd::Random(net.input_dim(), 2);
  (void)net.forward_assembled(input, &cache);
  REQUIRE_THROWS_AS(sgmus::backward(net, cache, Eigen::MatrixXd::Zero(net.output_dim() + 1, 2)),
                    std::invalid_argument);
  REQUIRE_THROWS_AS(sgmus::backward(net, cache, Eigen::MatrixXd::Zero(net.output_dim(), 3)),
                    std::invalid_argument);
}

TEST_CASE("forward validates its arguments", "[network]") {
  const auto net = small_net(4);
  REQUIRE_THROWS_AS(net.forward(Eigen::Vector2d(0, 0), 2.0, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(net.forward(Eigen::Vector2d(0, 0), 0.0, 0.0), std::invalid_argument);  // below t_min
  REQUIRE_THROWS_AS(net.forward(Eigen::Vector2d(std::nan(""), 0), 0.5, 0.0), std::invalid_argument);
  REQUIRE_THROWS_AS(net.forward(Eigen::Vector3d(0, 0, 0), 0.5, 0.0), std::invalid_argument);
}

TEST_CASE("raw-space score applies the chain rule through normalization", "[network]") {
  // doubling x_scale halves the raw-space score at the same normalized point
  auto net = small_net(6);
  const Eigen::Vector2d xn(0.4, -0.2);
  const auto base = net.forward(xn, 0.5, 0.1);
  auto wide = net;
  wide.norm_stats.x_scale = 2.0 * net.norm_stats.x_scale;
  const auto scaled = wide.forward(2.0 * xn, 0.5, 0.1);  // same normalized input
  REQUIRE(scaled[0] == Catch::Approx(0.5 * base[0]).epsilon(1e-12));
  REQUIRE(scaled[1] == Catch::Approx(0.5 * base[1]).epsilon(1e-12));
}

TEST_CASE("normalization statistics round-trip and validate", "[network]") {
  Eigen::MatrixXd pts(4, 2);
  pts << 1.0, 10.0, 2.0, 20.0, 3.0, 30.0, 4.0, 40.0;
  Eigen::VectorXd labels(4);
  labels << 0.0, 1.0, 2.0, 3.0;
  const auto st = sgmus::compute_norm_stats(pts, labels);
  REQUIRE(st.x_mean[0] == Catch::Approx(2.5));
  // population std of {1,2,3,4} = sqrt(5)/2
  REQUIRE(st.x_scale[0] == Catch::Approx(std::sqrt(1.25)).epsilon(1e-14));
  REQUIRE(st.y_min == 0.0);
  REQUIRE(st.y_max == 3.0);
  const Eigen::Vector2d x(3.7, 12.5);
  const auto back = st.denormalize_x(st.normalize_x(x));
  REQUIRE((back - x).cwiseAbs().maxCoeff() < 1e-12);
  REQUIRE(st.denormalize_y(st.normalize_y(1.7)) == Catch::Approx(1.7).margin(1e-12));

  Eigen::MatrixXd flat(3, 2);
  flat << 1.0, 1.0, 1.0, 2.0, 1.0, 3.0;  // first coordinate has zero variance
  Eigen::VectorXd l3 = Eigen::VectorXd::LinSpaced(3, 0.0, 1.0);
  REQUIRE_THROWS_AS(sgmus::compute_norm_stats(flat, l3), std::invalid_argument);
}

TEST_CASE("adam leaves parameters alone under zero gradients", "[network]") {
  auto net = small_net(8);
  const auto before = net.weights;
  auto state = sgmus::AdamState::zeros_like(net);
  sgmus::GradientBundle zeros;
  for (Eigen::Index l = 0; l < net.n_layers(); ++l) {
    zeros.dW.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
    zeros.db.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
  }
  sgmus::adam_step(net, zeros, state, 1e-3, {});
  for (Eigen::Index l = 0; l < net.n_layers(); ++l) REQUIRE(net.weights[l] == before[l]);
}

TEST_CASE("the first adam step moves each weight by about lr times the gradient sign", "[network]") {
  auto net = scalar_net(0.5);
  auto state = sgmus::AdamState::zeros_like(net);
  sgmus::GradientBundle g;
  g.dW = {Eigen::MatrixXd::Constant(1, 1, 3.0)};
  g.db = {Eigen::VectorXd::Constant(1, -2.0)};
  sgmus::adam_step(net, g, state, 1e-2, {});
  REQUIRE(net.weights[0](0, 0) == Catch::Approx(0.5 - 1e-2).epsilon(1e-6));
  REQUIRE(net.biases[0](0) == Catch::Approx(1e-2).epsilon(1e-6));
}

TEST_CASE("adam minimizes a quadratic bowl", "[network]") {
  // L(w) = (w - 0.7)^2, 500 steps at lr 1e-2 land within 1e-3
  auto net = scalar_net(0.0);
  auto state = sgmus::AdamState::zeros_like(net);
  for (int it = 0; it < 500; ++it) {
    sgmus::GradientBundle g;
    g.dW = {Eigen::MatrixXd::Constant(1, 1, 2.0 * (net.weights[0](0, 0) - 0.7))};
    g.db = {Eigen::VectorXd::Zero(1)};
    sgmus::adam_step(net, g, state, 1e-2, {});
  }
  REQUIRE(std::abs(net.weights[0](0, 0) - 0.7) < 1e-3);
}

TEST_CASE("adam rejects mismatched gradient layouts", "[network]") {
  auto net = small_net(10);
  auto state = sgmus::AdamState::zeros_like(net);
  sgmus::GradientBundle g;
  g.dW = {Eigen::MatrixXd::Zero(1, 1)};
  g.db = {Eigen::VectorXd::Zero(1)};
  REQUIRE_THROWS_AS(sgmus::adam_step(net, g, state, 1e-3, {}), std::invalid_argument);
}

TEST_CASE("forward is Lipschitz with the layer-norm product as constant", "[network]") {
  const auto net = small_net(12);
  // silu slope is bounded by ~1.1; product of spectral norms bounds the map
  double bound = 1.0;
  for (Eigen::Index l = 0; l < net.n_layers(); ++l) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(net.weights[l]);
    bound *= svd.singularValues()[0];
    if (l + 1 < net.n_layers()) bound *= 1.1;
  }
  sgmus::GaussianStream rng(77);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::MatrixXd a(net.input_dim(), 1), b(net.input_dim(), 1);
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      a(i, 0) = rng.normal();
      b(i, 0) = a(i, 0) + 0.01 * rng.normal();
    }
    const double dy = (net.forward_assembled(a, nullptr) - net.forward_assembled(b, nullptr)).norm();
    REQUIRE(dy <= bound * (a - b).norm() * (1.0 + 1e-9));
  }
}

TEST_CASE("checkpoints round-trip bitwise through JSON", "[network]") {
  auto net = small_net(21);
  const auto dir = std::filesystem::temp_directory_path() / "sgmus_test_net";
  std::filesystem::create_directories(dir);
  const auto path = (dir / "ckpt.json").string();
  sgmus::save_checkpoint(net, path);
  const auto back = sgmus::load_checkpoint(path);
  for (Eigen::Index l = 0; l < net.n_layers(); ++l) {
    REQUIRE(back.weights[l] == net.weights[l]);
    REQUIRE(back.biases[l] == net.biases[l]);
  }
  REQUIRE(back.fourier_freqs == net.fourier_freqs);
  REQUIRE(back.norm_stats.x_mean == net.norm_stats.x_mean);
  REQUIRE(back.schedule.sigma_max == net.schedule.sigma_max);
  REQUIRE(back.init_seed == net.init_seed);
  // forward pass is bitwise identical after the round trip
  const auto x = Eigen::Vector2d(0.25, -1.5);
  REQUIRE(back.forward(x, 0.37, 0.1) == net.forward(x, 0.37, 0.1));

  auto j = sgmus::checkpoint_to_json(net);
  j["format"] = "something-else";
  REQUIRE_THROWS_AS(sgmus::checkpoint_from_json(j), std::invalid_argument);
}
