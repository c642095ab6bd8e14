#pragma once

// Dense feed-forward conditional score network s_theta(x, t, y) with exact
// reverse-mode gradients and Adam. Layout: columns are samples throughout.
// The MLP operates in normalized coordinates; the public forward() accepts raw
// inputs and returns the raw-space score (chain rule through the x scaling).

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "sgmus/common.hpp"
#include "sgmus/rng.hpp"
#include "sgmus/schedule.hpp"

namespace sgmus {

enum class activation_kind { silu };

inline const char* activation_name(activation_kind a) {
  switch (a) {
    case activation_kind::silu: return "silu";
  }
  throw std::invalid_argument("unknown activation");
}

struct NormStats {
  Eigen::VectorXd x_mean;   // per data coordinate
  Eigen::VectorXd x_scale;  // per data coordinate, strictly positive
  double y_mean = 0.0;
  double y_scale = 1.0;
  double y_min = 0.0;  // raw label range seen at fit time
  double y_max = 0.0;

  void validate() const {
    if (x_mean.size() == 0 || x_mean.size() != x_scale.size()) {
      throw std::invalid_argument("NormStats: x_mean/x_scale size mismatch");
    }
    if (!(x_scale.array() > 0.0).all() || !x_scale.allFinite() || !x_mean.allFinite()) {
      throw std::invalid_argument("NormStats: x_scale must be positive and finite");
    }
    if (!(y_scale > 0.0) || !std::isfinite(y_scale) || !std::isfinite(y_mean)) {
      throw std::invalid_argument("NormStats: y_scale must be positive and finite");
    }
  }

  Eigen::VectorXd normalize_x(const Eigen::VectorXd& x) const {
    return (x - x_mean).cwiseQuotient(x_scale);
  }
  Eigen::VectorXd denormalize_x(const Eigen::VectorXd& xn) const {
    return xn.cwiseProduct(x_scale) + x_mean;
  }
  // columns = samples
  Eigen::MatrixXd normalize_x_cols(const Eigen::MatrixXd& X) const {
    return (X.colwise() - x_mean).array().colwise() / x_scale.array();
  }
  Eigen::MatrixXd denormalize_x_cols(const Eigen::MatrixXd& Xn) const {
    return (Xn.array().colwise() * x_scale.array()).matrix().colwise() + x_mean;
  }
  double normalize_y(double y) const { return (y - y_mean) / y_scale; }
  double denormalize_y(double yn) const { return yn * y_scale + y_mean; }
};

// Population mean/std per coordinate and for the labels; records label range.
inline NormStats compute_norm_stats(const Eigen::MatrixXd& points, const Eigen::VectorXd& labels) {
  if (points.rows() < 2) throw std::invalid_argument("compute_norm_stats: need at least 2 points");
  if (labels.size() != points.rows()) throw std::invalid_argument("compute_norm_stats: label count mismatch");
  if (!points.allFinite() || !labels.allFinite()) throw std::invalid_argument("compute_norm_stats: non-finite input");
  NormStats st;
  const double n = static_cast<double>(points.rows());
  st.x_mean = points.colwise().mean().transpose();
  st.x_scale.resize(points.cols());
  for (Eigen::Index c = 0; c < points.cols(); ++c) {
    const double var = (points.col(c).array() - st.x_mean(c)).square().sum() / n;
    st.x_scale(c) = std::sqrt(var);
    if (!(st.x_scale(c) > 0.0)) {
      throw std::invalid_argument(strfmt("compute_norm_stats: coordinate %ld has zero variance", static_cast<long>(c)));
    }
  }
  st.y_mean = labels.mean();
  st.y_scale = std::sqrt((labels.array() - st.y_mean).square().sum() / n);
  if (!(st.y_scale > 0.0)) throw std::invalid_argument("compute_norm_stats: labels have zero variance");
  st.y_min = labels.minCoeff();
  st.y_max = labels.maxCoeff();
  return st;
}

struct GradientBundle {
  std::vector<Eigen::MatrixXd> dW;
  std::vector<Eigen::VectorXd> db;
};

struct ForwardCache {
  std::vector<Eigen::MatrixXd> inputs;    // activation entering each layer; inputs[0] is the assembled input
  std::vector<Eigen::MatrixXd> pre;       // pre-activation Z per hidden layer
  std::vector<Eigen::MatrixXd> sigmoid;   // logistic(Z) per hidden layer
};

struct ScoreNetwork {
  std::vector<Eigen::Index> layer_widths;  // input, hidden..., output
  std::vector<Eigen::MatrixXd> weights;    // weights[l]: widths[l+1] x widths[l]
  std::vector<Eigen::VectorXd> biases;
  activation_kind activation = activation_kind::silu;
  Eigen::VectorXd fourier_freqs;  // frequencies applied to log sigma(t)
  NormStats norm_stats;
  NoiseSchedule schedule;
  Eigen::Index data_dim = 0;
  Eigen::Index label_dim = 1;
  std::uint64_t init_seed = 0;

  Eigen::Index n_layers() const { return static_cast<Eigen::Index>(weights.size()); }
  Eigen::Index embedding_dim() const { return 2 * fourier_freqs.size(); }
  Eigen::Index input_dim() const { return data_dim + label_dim + embedding_dim(); }
  Eigen::Index output_dim() const { return layer_widths.back(); }

  void validate() const {
    if (layer_widths.size() < 2) throw std::invalid_argument("ScoreNetwork: need at least input and output widths");
    if (weights.size() + 1 != layer_widths.size() || biases.size() != weights.size()) {
      throw std::invalid_argument("ScoreNetwork: layer count mismatch");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != layer_widths[l + 1] || weights[l].cols() != layer_widths[l] ||
          biases[l].size() != layer_widths[l + 1]) {
        throw std::invalid_argument(strfmt("ScoreNetwork: shape mismatch at layer %zu", l));
      }
    }
    if (layer_widths.front() != input_dim()) throw std::invalid_argument("ScoreNetwork: input width mismatch");
    if (output_dim() != data_dim) throw std::invalid_argument("ScoreNetwork: output width must equal data dimension");
    if (fourier_freqs.size() == 0) throw std::invalid_argument("ScoreNetwork: empty Fourier embedding");
    norm_stats.validate();
    schedule.validate();
  }

  // 2*n_freq Fourier features of log sigma(t); columns = samples.
  Eigen::MatrixXd embed_times(const Eigen::VectorXd& ts) const {
    const Eigen::Index nf = fourier_freqs.size();
    Eigen::MatrixXd emb(2 * nf, ts.size());
    for (Eigen::Index j = 0; j < ts.size(); ++j) {
      const double ls = std::log(schedule.sigma(ts(j)));
      for (Eigen::Index i = 0; i < nf; ++i) {
        const double a = ls * fourier_freqs(i);
        emb(i, j) = std::sin(a);
        emb(nf + i, j) = std::cos(a);
      }
    }
    return emb;
  }

  // Stack [normalized x; normalized y; time embedding]; columns = samples.
  Eigen::MatrixXd assemble_input(const Eigen::MatrixXd& Xn, const Eigen::VectorXd& ts,
                                 const Eigen::VectorXd& yn) const {
    if (Xn.rows() != data_dim || Xn.cols() != ts.size() || yn.size() != ts.size()) {
      throw std::invalid_argument("assemble_input: batch shape mismatch");
    }
    Eigen::MatrixXd in(input_dim(), Xn.cols());
    in.topRows(data_dim) = Xn;
    in.row(data_dim) = yn.transpose();
    in.bottomRows(embedding_dim()) = embed_times(ts);
    return in;
  }

  Eigen::MatrixXd forward_assembled(const Eigen::MatrixXd& input, ForwardCache* cache) const {
    if (input.rows() != input_dim()) throw std::invalid_argument("forward: input width mismatch");
    const std::size_t L = weights.size();
    if (cache) {
      cache->inputs.assign(L, {});
      cache->pre.assign(L - 1, {});
      cache->sigmoid.assign(L - 1, {});
    }
    Eigen::MatrixXd a = input;
    for (std::size_t l = 0; l + 1 < L; ++l) {
      if (cache) cache->inputs[l] = a;
      Eigen::MatrixXd z = (weights[l] * a).colwise() + biases[l];
      Eigen::MatrixXd s = (1.0 / (1.0 + (-z.array()).exp())).matrix();
      a = z.cwiseProduct(s);  // SiLU
      if (cache) {
        cache->pre[l] = std::move(z);
        cache->sigmoid[l] = std::move(s);
      }
    }
    if (cache) cache->inputs[L - 1] = a;
    return (weights[L - 1] * a).colwise() + biases[L - 1];
  }

  // Score in normalized coordinates; columns = samples.
  Eigen::MatrixXd forward_normalized(const Eigen::MatrixXd& Xn, const Eigen::VectorXd& ts,
                                     const Eigen::VectorXd& yn, ForwardCache* cache = nullptr) const {
    return forward_assembled(assemble_input(Xn, ts, yn), cache);
  }

  // Raw-space conditional score at a single point.
  Eigen::VectorXd forward(const Eigen::VectorXd& x, double t, double y) const {
    if (!x.allFinite() || !std::isfinite(t) || !std::isfinite(y)) {
      throw std::invalid_argument("forward: non-finite input");
    }
    if (x.size() != data_dim) throw std::invalid_argument("forward: x dimension mismatch");
    if (t < schedule.t_min || t > schedule.T) {
      throw std::invalid_argument(strfmt("forward: t=%g outside [t_min=%g, T=%g]", t, schedule.t_min, schedule.T));
    }
    Eigen::MatrixXd Xn = norm_stats.normalize_x(x);
    Eigen::VectorXd ts(1), yn(1);
    ts(0) = t;
    yn(0) = norm_stats.normalize_y(y);
    Eigen::MatrixXd sn = forward_normalized(Xn, ts, yn);
    return sn.col(0).cwiseQuotient(norm_stats.x_scale);
  }
};

// Reverse-mode gradients of the assembled forward map for upstream gradient G
// (output_dim x batch) at the cached batch.
inline GradientBundle backward(const ScoreNetwork& net, const ForwardCache& cache, const Eigen::MatrixXd& G) {
  const std::size_t L = net.weights.size();
  if (cache.inputs.size() != L) throw std::invalid_argument("backward: cache does not match network");
  if (G.rows() != net.output_dim() || G.cols() != cache.inputs[0].cols()) {
    throw std::invalid_argument("backward: upstream gradient shape mismatch");
  }
  GradientBundle g;
  g.dW.resize(L);
  g.db.resize(L);
  g.dW[L - 1] = G * cache.inputs[L - 1].transpose();
  g.db[L - 1] = G.rowwise().sum();
  if (L == 1) return g;
  Eigen::MatrixXd delta = net.weights[L - 1].transpose() * G;
  for (std::size_t l = L - 1; l-- > 0;) {
    const auto& Z = cache.pre[l];
    const auto& S = cache.sigmoid[l];
    // d SiLU/dz = s*(1 + z*(1-s))
    Eigen::MatrixXd dz = delta.array() * (S.array() * (1.0 + Z.array() * (1.0 - S.array())));
    g.dW[l] = dz * cache.inputs[l].transpose();
    g.db[l] = dz.rowwise().sum();
    if (l > 0) delta = net.weights[l].transpose() * dz;
  }
  return g;
}

// Spec-level convenience: forward the (normalized) batch, then pull back the
// supplied output gradient.
inline GradientBundle backward_batch(const ScoreNetwork& net, const Eigen::MatrixXd& Xn,
                                     const Eigen::VectorXd& ts, const Eigen::VectorXd& yn,
                                     const Eigen::MatrixXd& loss_grad_at_output) {
  if (Xn.cols() == 0) throw std::invalid_argument("backward_batch: empty batch");
  ForwardCache cache;
  net.forward_normalized(Xn, ts, yn, &cache);
  return backward(net, cache, loss_grad_at_output);
}

// He-style init for hidden layers, zero final layer, standard-normal Fourier
// frequencies. Draw order (frequencies, then each layer row-major) is fixed so
// checkpoints are reproducible from (widths, seed).
inline ScoreNetwork make_score_network(Eigen::Index data_dim, const std::vector<Eigen::Index>& hidden_widths,
                                       Eigen::Index n_fourier, std::uint64_t seed, const NoiseSchedule& schedule,
                                       const NormStats& norm_stats) {
  if (data_dim <= 0) throw std::invalid_argument("make_score_network: data_dim must be positive");
  if (hidden_widths.empty()) throw std::invalid_argument("make_score_network: need at least one hidden layer");
  if (n_fourier <= 0) throw std::invalid_argument("make_score_network: n_fourier must be positive");
  ScoreNetwork net;
  net.data_dim = data_dim;
  net.label_dim = 1;
  net.activation = activation_kind::silu;
  net.schedule = schedule;
  net.norm_stats = norm_stats;
  net.init_seed = seed;

  GaussianStream rng(derive_seed(seed, 0, stream_purpose::kInit));
  net.fourier_freqs.resize(n_fourier);
  for (Eigen::Index i = 0; i < n_fourier; ++i) net.fourier_freqs(i) = rng.normal();

  net.layer_widths.clear();
  net.layer_widths.push_back(net.input_dim());
  for (Eigen::Index w : hidden_widths) {
    if (w <= 0) throw std::invalid_argument("make_score_network: widths must be positive");
    net.layer_widths.push_back(w);
  }
  net.layer_widths.push_back(data_dim);

  const std::size_t L = net.layer_widths.size() - 1;
  net.weights.resize(L);
  net.biases.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const Eigen::Index fan_in = net.layer_widths[l];
    const Eigen::Index fan_out = net.layer_widths[l + 1];
    net.weights[l].resize(fan_out, fan_in);
    net.biases[l] = Eigen::VectorXd::Zero(fan_out);
    if (l + 1 == L) {
      net.weights[l].setZero();
    } else {
      const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (Eigen::Index r = 0; r < fan_out; ++r) {
        for (Eigen::Index c = 0; c < fan_in; ++c) net.weights[l](r, c) = sd * rng.normal();
      }
    }
  }
  net.validate();
  return net;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Eigen::MatrixXd> mW, vW;
  std::vector<Eigen::VectorXd> mb, vb;
  long step = 0;

  static AdamState zeros_like(const ScoreNetwork& net) {
    AdamState st;
    const std::size_t L = net.weights.size();
    st.mW.resize(L);
    st.vW.resize(L);
    st.mb.resize(L);
    st.vb.resize(L);
    for (std::size_t l = 0; l < L; ++l) {
      st.mW[l] = Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols());
      st.vW[l] = st.mW[l];
      st.mb[l] = Eigen::VectorXd::Zero(net.biases[l].size());
      st.vb[l] = st.mb[l];
    }
    return st;
  }
};

inline void adam_step(ScoreNetwork& net, const GradientBundle& grads, AdamState& state, double lr,
                      const AdamConfig& cfg = {}) {
  const std::size_t L = net.weights.size();
  if (grads.dW.size() != L || grads.db.size() != L || state.mW.size() != L) {
    throw std::invalid_argument("adam_step: gradient/state layout mismatch");
  }
  state.step += 1;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t l = 0; l < L; ++l) {
    if (grads.dW[l].rows() != net.weights[l].rows() || grads.dW[l].cols() != net.weights[l].cols()) {
      throw std::invalid_argument(strfmt("adam_step: gradient shape mismatch at layer %zu", l));
    }
    state.mW[l] = cfg.beta1 * state.mW[l] + (1.0 - cfg.beta1) * grads.dW[l];
    state.vW[l] = cfg.beta2 * state.vW[l] + (1.0 - cfg.beta2) * grads.dW[l].cwiseProduct(grads.dW[l]);
    net.weights[l].array() -= lr * (state.mW[l].array() / c1) / ((state.vW[l].array() / c2).sqrt() + cfg.eps);
    state.mb[l] = cfg.beta1 * state.mb[l] + (1.0 - cfg.beta1) * grads.db[l];
    state.vb[l] = cfg.beta2 * state.vb[l] + (1.0 - cfg.beta2) * grads.db[l].cwiseProduct(grads.db[l]);
    net.biases[l].array() -= lr * (state.mb[l].array() / c1) / ((state.vb[l].array() / c2).sqrt() + cfg.eps);
  }
}

namespace detail {

inline nlohmann::json vector_to_json(const Eigen::VectorXd& v) {
  nlohmann::json arr = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

inline Eigen::VectorXd vector_from_json(const nlohmann::json& arr) {
  Eigen::VectorXd v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  return v;
}

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& rows) {
  if (rows.empty()) return {};
  const Eigen::Index nr = static_cast<Eigen::Index>(rows.size());
  const Eigen::Index nc = static_cast<Eigen::Index>(rows[0].size());
  Eigen::MatrixXd m(nr, nc);
  for (Eigen::Index r = 0; r < nr; ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (static_cast<Eigen::Index>(row.size()) != nc) throw std::invalid_argument("checkpoint: ragged weight matrix");
    for (Eigen::Index c = 0; c < nc; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

}  // namespace detail

inline nlohmann::json checkpoint_to_json(const ScoreNetwork& net) {
  net.validate();
  nlohmann::json j;
  j["format"] = "sgmus-checkpoint";
  j["version"] = 1;
  j["data_dim"] = net.data_dim;
  j["label_dim"] = net.label_dim;
  j["activation"] = activation_name(net.activation);
  j["init_seed"] = net.init_seed;
  nlohmann::json widths = nlohmann::json::array();
  for (auto w : net.layer_widths) widths.push_back(w);
  j["layer_widths"] = std::move(widths);
  j["fourier_freqs"] = detail::vector_to_json(net.fourier_freqs);
  j["norm_stats"] = {{"x_mean", detail::vector_to_json(net.norm_stats.x_mean)},
                     {"x_scale", detail::vector_to_json(net.norm_stats.x_scale)},
                     {"y_mean", net.norm_stats.y_mean},
                     {"y_scale", net.norm_stats.y_scale},
                     {"y_min", net.norm_stats.y_min},
                     {"y_max", net.norm_stats.y_max}};
  j["schedule"] = {{"kind", "variance_exploding"},
                   {"sigma_min", net.schedule.sigma_min},
                   {"sigma_max", net.schedule.sigma_max},
                   {"T", net.schedule.T},
                   {"t_min", net.schedule.t_min}};
  nlohmann::json ws = nlohmann::json::array();
  nlohmann::json bs = nlohmann::json::array();
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    ws.push_back(detail::matrix_to_json(net.weights[l]));
    bs.push_back(detail::vector_to_json(net.biases[l]));
  }
  j["weights"] = std::move(ws);
  j["biases"] = std::move(bs);
  return j;
}

inline ScoreNetwork checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != std::string("sgmus-checkpoint")) {
    throw std::invalid_argument("checkpoint: bad format tag");
  }
  if (j.value("version", 0) != 1) throw std::invalid_argument("checkpoint: unsupported version");
  ScoreNetwork net;
  net.data_dim = j.at("data_dim").get<Eigen::Index>();
  net.label_dim = j.at("label_dim").get<Eigen::Index>();
  if (j.at("activation").get<std::string>() != "silu") throw std::invalid_argument("checkpoint: unknown activation");
  net.init_seed = j.value("init_seed", std::uint64_t{0});
  for (const auto& w : j.at("layer_widths")) net.layer_widths.push_back(w.get<Eigen::Index>());
  net.fourier_freqs = detail::vector_from_json(j.at("fourier_freqs"));
  const auto& ns = j.at("norm_stats");
  net.norm_stats.x_mean = detail::vector_from_json(ns.at("x_mean"));
  net.norm_stats.x_scale = detail::vector_from_json(ns.at("x_scale"));
  net.norm_stats.y_mean = ns.at("y_mean").get<double>();
  net.norm_stats.y_scale = ns.at("y_scale").get<double>();
  net.norm_stats.y_min = ns.at("y_min").get<double>();
  net.norm_stats.y_max = ns.at("y_max").get<double>();
  const auto& sc = j.at("schedule");
  if (sc.at("kind").get<std::string>() != "variance_exploding") {
    throw std::invalid_argument("checkpoint: unknown schedule kind");
  }
  net.schedule.sigma_min = sc.at("sigma_min").get<double>();
  net.schedule.sigma_max = sc.at("sigma_max").get<double>();
  net.schedule.T = sc.at("T").get<double>();
  net.schedule.t_min = sc.at("t_min").get<double>();
  for (const auto& w : j.at("weights")) net.weights.push_back(detail::matrix_from_json(w));
  for (const auto& b : j.at("biases")) net.biases.push_back(detail::vector_from_json(b));
  net.validate();
  return net;
}

inline void save_checkpoint(const ScoreNetwork& net, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(strfmt("save_checkpoint: cannot open %s", path.c_str()));
  os << checkpoint_to_json(net).dump(1) << '\n';
  if (!os) throw std::runtime_error(strfmt("save_checkpoint: write failed for %s", path.c_str()));
}

inline ScoreNetwork load_checkpoint(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error(strfmt("load_checkpoint: cannot open %s", path.c_str()));
  nlohmann::json j;
  is >> j;
  return checkpoint_from_json(j);
}

}  // namespace sgmus
