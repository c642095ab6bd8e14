// Config-driven pipeline orchestrator: simulate -> label -> train -> generate
// -> couple -> analyze, each stage writing its artifact plus a provenance
// manifest (<artifact>.manifest.json) that chains input digests.
//
// Exit codes: 0 success, 2 config/validation failure, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <sgmus/sgmus.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// config plumbing

void check_keys(const json& obj, const std::vector<std::string>& allowed, const std::string& prefix) {
  if (!obj.is_object()) throw sgmus::ConfigError(prefix.empty() ? "config" : prefix, "must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw sgmus::ConfigError(prefix + key, "unknown field");
    }
  }
}

void check_config_keys(const json& cfg) {
  check_keys(cfg, {"schema_version", "master_seed", "system", "simulate", "label", "train", "generate", "couple",
                   "analyze"},
             "");
  if (cfg.contains("system")) check_keys(cfg["system"], {"id", "a1", "a2", "a3", "h", "k"}, "system.");
  if (cfg.contains("simulate")) {
    check_keys(cfg["simulate"],
               {"n_trajectories", "steps_per_trajectory", "stride", "dt", "slow_min", "slow_max", "output",
                "csv_output"},
               "simulate.");
  }
  if (cfg.contains("label")) {
    check_keys(cfg["label"],
               {"mode", "input", "output", "subsample", "bandwidth", "alpha", "n_eigenpairs", "coords_output"},
               "label.");
  }
  if (cfg.contains("train")) {
    check_keys(cfg["train"],
               {"input", "checkpoint", "log", "batch_size", "n_iterations", "lr_start", "lr_end", "hidden_widths",
                "n_fourier", "sigma_min", "sigma_max_factor", "t_min", "log_every"},
               "train.");
  }
  if (cfg.contains("generate")) {
    check_keys(cfg["generate"], {"checkpoint", "label", "n_samples", "n_steps", "output", "csv_output"},
               "generate.");
  }
  if (cfg.contains("couple")) {
    check_keys(cfg["couple"],
               {"checkpoint", "label", "n_windows", "n_steps", "dt", "kappa", "center_mode", "generate_steps",
                "grid_min", "grid_max", "grid_bins", "output", "windows_output", "wham_output", "kappa_fast",
                "fast_bias_centers"},
               "couple.");
  }
  if (cfg.contains("analyze")) {
    check_keys(cfg["analyze"],
               {"checkpoint", "training", "label", "sample_sizes", "n_experiments", "n_windows", "kappa", "dt",
                "generate_steps", "baseline_pool", "grid_min", "grid_max", "grid_bins", "output_prefix"},
               "analyze.");
  }
}

const json* find_key(const json& cfg, const std::string& section, const char* key) {
  if (!cfg.contains(section)) return nullptr;
  const json& s = cfg[section];
  if (!s.contains(key)) return nullptr;
  return &s[key];
}

double num_or(const json& cfg, const std::string& section, const char* key, double dflt) {
  const json* v = find_key(cfg, section, key);
  if (!v) return dflt;
  if (!v->is_number()) throw sgmus::ConfigError(section + "." + key, "must be a number");
  return v->get<double>();
}

long long int_or(const json& cfg, const std::string& section, const char* key, long long dflt) {
  const json* v = find_key(cfg, section, key);
  if (!v) return dflt;
  if (!v->is_number_integer()) throw sgmus::ConfigError(section + "." + key, "must be an integer");
  return v->get<long long>();
}

std::string str_or(const json& cfg, const std::string& section, const char* key, const std::string& dflt) {
  const json* v = find_key(cfg, section, key);
  if (!v) return dflt;
  if (!v->is_string()) throw sgmus::ConfigError(section + "." + key, "must be a string");
  return v->get<std::string>();
}

std::vector<double> num_list_or(const json& cfg, const std::string& section, const char* key,
                                std::vector<double> dflt) {
  const json* v = find_key(cfg, section, key);
  if (!v) return dflt;
  if (!v->is_array()) throw sgmus::ConfigError(section + "." + key, "must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : *v) {
    if (!e.is_number()) throw sgmus::ConfigError(section + "." + key, "must be an array of numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

void apply_set(json& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw sgmus::ConfigError("--set", sgmus::strfmt("expected path=value, got '%s'", assignment.c_str()));
  }
  const std::string path = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);
  json v;
  if (json::accept(value)) {
    v = json::parse(value);
  } else {
    v = value;  // bare strings stay strings
  }
  json* node = &cfg;
  std::size_t start = 0;
  for (;;) {
    const auto dot = path.find('.', start);
    const std::string part = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw sgmus::ConfigError("--set", sgmus::strfmt("empty path component in '%s'", path.c_str()));
    if (dot == std::string::npos) {
      (*node)[part] = v;
      break;
    }
    if (!node->contains(part)) (*node)[part] = json::object();
    node = &(*node)[part];
    if (!node->is_object()) throw sgmus::ConfigError(path, "path traverses a non-object value");
    start = dot + 1;
  }
}

// ---------------------------------------------------------------------------
// context shared by all stages

struct Context {
  json cfg;
  fs::path output_root;
  std::uint64_t master_seed = 0;

  std::string resolve(const std::string& p) const {
    fs::path fp(p);
    return fp.is_absolute() ? fp.string() : (output_root / fp).string();
  }
};

// Per-stage seeds derived from the master seed by fixed ordinals, so stages
// are independent streams and re-runs are reproducible.
enum stage_ordinal : std::uint64_t {
  kStageSimulate = 0,
  kStageLabel = 1,
  kStageTrain = 2,
  kStageGenerate = 3,
  kStageCouple = 4,
  kStageAnalyze = 5,
};

std::uint64_t stage_seed(const Context& ctx, stage_ordinal s) {
  return sgmus::derive_seed(ctx.master_seed, s, sgmus::stream_purpose::kInit);
}

void require_parent_dir(const std::string& path, const std::string& field) {
  const fs::path parent = fs::path(path).parent_path();
  if (!parent.empty() && !fs::is_directory(parent)) {
    throw sgmus::ConfigError(field, sgmus::strfmt("output directory does not exist: %s", parent.string().c_str()));
  }
}

std::string require_input(const Context& ctx, const std::string& section, const char* key,
                          const std::string& dflt) {
  const std::string path = ctx.resolve(str_or(ctx.cfg, section, key, dflt));
  if (!fs::is_regular_file(path)) {
    throw sgmus::ConfigError(section + "." + key, sgmus::strfmt("input file does not exist: %s", path.c_str()));
  }
  return path;
}

// Stale-artifact guard: when an input carries a manifest, its recorded output
// digest must match the file's current content.
json input_record(const std::string& role, const std::string& path) {
  const std::string digest = sgmus::hex64(sgmus::fnv1a64_file(path));
  if (sgmus::manifest_exists(path)) {
    const json m = sgmus::read_manifest(path);
    const std::string recorded = m.value("output", json::object()).value("digest", "");
    if (!recorded.empty() && recorded != digest) {
      throw sgmus::ConfigError(role, sgmus::strfmt("stale artifact %s: digest %s != recorded %s", path.c_str(),
                                                   digest.c_str(), recorded.c_str()));
    }
  }
  return json{{"role", role}, {"path", path}, {"digest", digest}};
}

void finish_artifact(const Context& ctx, const std::string& command, const std::string& path,
                     const json& stage_config, const json& inputs, const json& metadata,
                     const std::vector<std::string>& warnings = {}) {
  json m;
  m["schema_version"] = 1;
  m["command"] = command;
  m["master_seed"] = ctx.master_seed;
  m["config"] = stage_config;
  m["inputs"] = inputs;
  m["output"] = {{"path", path}, {"digest", sgmus::hex64(sgmus::fnv1a64_file(path))}};
  m["metadata"] = metadata;
  m["warnings"] = warnings;
  sgmus::write_manifest(path, m);
  std::cout << command << ": wrote " << path << " (digest " << m["output"]["digest"].get<std::string>() << ")\n";
  for (const auto& w : warnings) std::cout << command << ": warning: " << w << "\n";
}

sgmus::FastSlowSystem system_from_config(const json& cfg) {
  const std::string id = str_or(cfg, "system", "id", "moving_well");
  const double a1 = num_or(cfg, "system", "a1", 1e-4);
  const double a2 = num_or(cfg, "system", "a2", 1e-4);
  const double h = num_or(cfg, "system", "h", 0.0);
  const double k = num_or(cfg, "system", "k", 0.0);
  if (id == "moving_well") {
    if (h != 0.0 || k != 0.0) throw sgmus::ConfigError("system.h", "h and k are only valid for fixed_well");
    return sgmus::FastSlowSystem::moving_well(a1, a2, num_or(cfg, "system", "a3", 0.8));
  }
  if (id == "fixed_well") {
    return sgmus::FastSlowSystem::fixed_well(h, k, a1, a2, num_or(cfg, "system", "a3", 1.0));
  }
  throw sgmus::ConfigError("system.id", "must be 'moving_well' or 'fixed_well'");
}

json system_json(const sgmus::FastSlowSystem& sys) {
  return json{{"id", sgmus::system_name(sys.id)}, {"a1", sys.a1}, {"a2", sys.a2}, {"a3", sys.a3},
              {"h", sys.h},                       {"k", sys.k}};
}

std::vector<double> grid_from_config(const json& cfg, const std::string& section) {
  const double lo = num_or(cfg, section, "grid_min", -2.5);
  const double hi = num_or(cfg, section, "grid_max", 2.5);
  const long long bins = int_or(cfg, section, "grid_bins", 200);
  if (bins < 1) throw sgmus::ConfigError(section + ".grid_bins", "must be >= 1");
  if (!(lo < hi)) throw sgmus::ConfigError(section + ".grid_min", "need grid_min < grid_max");
  return sgmus::uniform_edges(lo, hi, static_cast<std::size_t>(bins));
}

void save_pdf_csv(const sgmus::EmpiricalPdf& pdf, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error(sgmus::strfmt("cannot open %s", path.c_str()));
  os << "bin_center,density\n";
  for (std::size_t j = 0; j < pdf.n_bins(); ++j) {
    os << sgmus::strfmt("%.17g,%.17g\n", 0.5 * (pdf.bin_edges[j] + pdf.bin_edges[j + 1]), pdf.densities[j]);
  }
}

// ---------------------------------------------------------------------------
// stages

int run_simulate(const Context& ctx) {
  const auto sys = system_from_config(ctx.cfg);
  sgmus::EnsembleConfig ec;
  ec.n_trajectories = static_cast<int>(int_or(ctx.cfg, "simulate", "n_trajectories", 20));
  ec.steps_per_trajectory = static_cast<std::size_t>(int_or(ctx.cfg, "simulate", "steps_per_trajectory", 500000));
  ec.stride = static_cast<std::size_t>(int_or(ctx.cfg, "simulate", "stride", 100));
  ec.dt = num_or(ctx.cfg, "simulate", "dt", 1e-2);
  ec.slow_min = num_or(ctx.cfg, "simulate", "slow_min", 0.0);
  ec.slow_max = num_or(ctx.cfg, "simulate", "slow_max", 10.0);
  const std::uint64_t seed = stage_seed(ctx, kStageSimulate);
  const std::string out = ctx.resolve(str_or(ctx.cfg, "simulate", "output", "dataset.bin"));
  require_parent_dir(out, "simulate.output");

  auto ds = sgmus::build_training_dataset(sys, ec, seed);
  sgmus::save_dataset(ds, out);
  const std::string csv = str_or(ctx.cfg, "simulate", "csv_output", "");
  if (!csv.empty()) {
    const std::string csv_path = ctx.resolve(csv);
    require_parent_dir(csv_path, "simulate.csv_output");
    sgmus::export_dataset_csv(ds, csv_path);
  }

  json stage_cfg = {{"system", system_json(sys)},
                    {"n_trajectories", ec.n_trajectories},
                    {"steps_per_trajectory", ec.steps_per_trajectory},
                    {"stride", ec.stride},
                    {"dt", ec.dt},
                    {"slow_min", ec.slow_min},
                    {"slow_max", ec.slow_max},
                    {"stage_seed", seed}};
  finish_artifact(ctx, "simulate", out, stage_cfg, json::array(),
                  json{{"n_samples", ds.size()}, {"data_dim", ds.dim()}});
  return 0;
}

int run_label(const Context& ctx) {
  const std::string mode = str_or(ctx.cfg, "label", "mode", "known_slow");
  const std::string in_path = require_input(ctx, "label", "input", "dataset.bin");
  const std::string out = ctx.resolve(str_or(ctx.cfg, "label", "output", "labeled.bin"));
  require_parent_dir(out, "label.output");
  json inputs = json::array({input_record("dataset", in_path)});
  auto ds = sgmus::load_dataset(in_path);
  const std::uint64_t seed = stage_seed(ctx, kStageLabel);

  if (mode == "known_slow") {
    ds.labels = ds.points.col(0);
    sgmus::save_dataset(ds, out);
    finish_artifact(ctx, "label", out, json{{"mode", mode}, {"stage_seed", seed}}, inputs,
                    json{{"n_samples", ds.size()}});
    return 0;
  }
  if (mode != "diffusion_maps") throw sgmus::ConfigError("label.mode", "must be 'known_slow' or 'diffusion_maps'");

  const long long subsample = int_or(ctx.cfg, "label", "subsample", 0);
  if (subsample < 0) throw sgmus::ConfigError("label.subsample", "must be >= 0");
  Eigen::MatrixXd points = ds.points;
  if (subsample > 0 && subsample < ds.size()) {
    if (subsample < 3) throw sgmus::ConfigError("label.subsample", "must keep at least 3 points");
    // seeded partial Fisher-Yates over row indices
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(ds.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<Eigen::Index>(i);
    sgmus::GaussianStream rng(sgmus::derive_seed(seed, 0, sgmus::stream_purpose::kInit));
    for (long long i = 0; i < subsample; ++i) {
      const auto j = i + static_cast<long long>(rng.below(static_cast<std::uint64_t>(idx.size() - i)));
      std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
    }
    points.resize(subsample, ds.dim());
    for (long long i = 0; i < subsample; ++i) points.row(i) = ds.points.row(idx[static_cast<std::size_t>(i)]);
  }
  if (points.rows() > sgmus::diffusion_maps_max_points()) {
    throw sgmus::ConfigError("label.subsample",
                             sgmus::strfmt("%ld points exceed the %ld-point cap; set label.subsample",
                                           static_cast<long>(points.rows()),
                                           static_cast<long>(sgmus::diffusion_maps_max_points())));
  }

  const double bandwidth = num_or(ctx.cfg, "label", "bandwidth", 0.0);
  const double alpha = num_or(ctx.cfg, "label", "alpha", 1.0);
  const long long n_eig = int_or(ctx.cfg, "label", "n_eigenpairs", 4);
  sgmus::DiffusionMapResult dm;
  sgmus::LabelingResult lab;
  try {
    dm = sgmus::diffusion_maps(points, bandwidth, alpha, static_cast<Eigen::Index>(n_eig));
    lab = sgmus::label_dataset(points, dm);
  } catch (const std::invalid_argument& e) {
    // degenerate spectra / degenerate point sets are runtime failures here
    throw std::runtime_error(e.what());
  }
  lab.dataset.dt = ds.dt;
  lab.dataset.seed = ds.seed;
  sgmus::save_dataset(lab.dataset, out);

  const std::string coords = str_or(ctx.cfg, "label", "coords_output", "");
  if (!coords.empty()) {
    const std::string coords_path = ctx.resolve(coords);
    require_parent_dir(coords_path, "label.coords_output");
    std::ofstream os(coords_path);
    if (!os) throw std::runtime_error(sgmus::strfmt("cannot open %s", coords_path.c_str()));
    os << "index";
    for (Eigen::Index c = 1; c < dm.eigenvectors.cols(); ++c) os << sgmus::strfmt(",phi_%ld", static_cast<long>(c));
    os << "\n";
    for (Eigen::Index r = 0; r < dm.eigenvectors.rows(); ++r) {
      os << r;
      for (Eigen::Index c = 1; c < dm.eigenvectors.cols(); ++c) {
        os << sgmus::strfmt(",%.17g", dm.eigenvectors(r, c));
      }
      os << "\n";
    }
  }

  json eigenvalues = json::array();
  for (Eigen::Index i = 0; i < dm.eigenvalues.size(); ++i) eigenvalues.push_back(dm.eigenvalues(i));
  json stage_cfg = {{"mode", mode},           {"subsample", subsample}, {"bandwidth_config", bandwidth},
                    {"alpha", alpha},         {"n_eigenpairs", n_eig},  {"stage_seed", seed}};
  json metadata = {{"bandwidth", dm.bandwidth},
                   {"alpha", dm.alpha},
                   {"eigenvalues", eigenvalues},
                   {"phi_mean", lab.phi_mean},
                   {"phi_scale", lab.phi_scale},
                   {"n_samples", lab.dataset.size()}};
  finish_artifact(ctx, "label", out, stage_cfg, inputs, metadata);
  return 0;
}

int run_train(const Context& ctx) {
  const std::string in_path = require_input(ctx, "train", "input", "labeled.bin");
  json inputs = json::array({input_record("training_dataset", in_path)});
  auto ds = sgmus::load_dataset(in_path);
  if (!ds.has_labels()) throw sgmus::ConfigError("train.input", "dataset has no labels; run the label stage first");
  if (ds.size() < 1000) {
    throw sgmus::ConfigError("train.input", sgmus::strfmt("benchmark training needs >= 1000 points, got %ld",
                                                          static_cast<long>(ds.size())));
  }

  sgmus::TrainConfig tc;
  tc.batch_size = static_cast<Eigen::Index>(int_or(ctx.cfg, "train", "batch_size", 512));
  tc.n_iterations = static_cast<long>(int_or(ctx.cfg, "train", "n_iterations", 50000));
  tc.lr_start = num_or(ctx.cfg, "train", "lr_start", 1e-4);
  tc.lr_end = num_or(ctx.cfg, "train", "lr_end", 1e-6);
  tc.seed = stage_seed(ctx, kStageTrain);
  const auto widths = num_list_or(ctx.cfg, "train", "hidden_widths", {64, 128, 256, 512, 512, 256, 128, 64});
  tc.hidden_widths.clear();
  for (double w : widths) tc.hidden_widths.push_back(static_cast<Eigen::Index>(w));
  tc.n_fourier = static_cast<Eigen::Index>(int_or(ctx.cfg, "train", "n_fourier", 16));
  tc.sigma_min = num_or(ctx.cfg, "train", "sigma_min", 0.002);
  tc.sigma_max_factor = num_or(ctx.cfg, "train", "sigma_max_factor", 1.5);
  tc.t_min = num_or(ctx.cfg, "train", "t_min", 1e-3);
  tc.log_every = static_cast<long>(int_or(ctx.cfg, "train", "log_every", 100));
  tc.validate();

  const std::string out = ctx.resolve(str_or(ctx.cfg, "train", "checkpoint", "checkpoint.json"));
  require_parent_dir(out, "train.checkpoint");
  const std::string log_path = ctx.resolve(str_or(ctx.cfg, "train", "log", "train_log.csv"));
  require_parent_dir(log_path, "train.log");

  auto result = sgmus::train(ds, tc);
  sgmus::save_checkpoint(result.net, out);
  sgmus::save_training_log(result.log, log_path);

  json hidden = json::array();
  for (auto w : tc.hidden_widths) hidden.push_back(w);
  json stage_cfg = {{"batch_size", tc.batch_size},
                    {"n_iterations", tc.n_iterations},
                    {"lr_start", tc.lr_start},
                    {"lr_end", tc.lr_end},
                    {"hidden_widths", hidden},
                    {"n_fourier", tc.n_fourier},
                    {"sigma_min", tc.sigma_min},
                    {"sigma_max_factor", tc.sigma_max_factor},
                    {"t_min", tc.t_min},
                    {"stage_seed", tc.seed}};
  json metadata = {{"final_loss", result.log.back().loss},
                   {"sigma_max", result.net.schedule.sigma_max},
                   {"label_range", {result.net.norm_stats.y_min, result.net.norm_stats.y_max}},
                   {"training_log", log_path}};
  finish_artifact(ctx, "train", out, stage_cfg, inputs, metadata);
  return 0;
}

int run_generate(const Context& ctx) {
  const std::string ckpt_path = require_input(ctx, "generate", "checkpoint", "checkpoint.json");
  json inputs = json::array({input_record("checkpoint", ckpt_path)});
  const auto net = sgmus::load_checkpoint(ckpt_path);

  const double label = num_or(ctx.cfg, "generate", "label", 5.0);
  const long long n_samples = int_or(ctx.cfg, "generate", "n_samples", 5000);
  const long long n_steps = int_or(ctx.cfg, "generate", "n_steps", 500);
  const std::uint64_t seed = stage_seed(ctx, kStageGenerate);
  const std::string out = ctx.resolve(str_or(ctx.cfg, "generate", "output", "samples.bin"));
  require_parent_dir(out, "generate.output");

  std::vector<std::string> warnings;
  if (sgmus::is_extrapolating(net, label)) {
    warnings.push_back(sgmus::strfmt("label %g lies outside the training label range [%g, %g]; extrapolating",
                                     label, net.norm_stats.y_min, net.norm_stats.y_max));
  }

  sgmus::LabeledDataset samples;
  samples.points = sgmus::generate(net, label, static_cast<Eigen::Index>(n_samples),
                                   static_cast<Eigen::Index>(n_steps), seed);
  samples.labels = Eigen::VectorXd::Constant(samples.points.rows(), label);
  samples.conditioning_label = label;
  samples.seed = seed;
  sgmus::save_dataset(samples, out);
  const std::string csv = str_or(ctx.cfg, "generate", "csv_output", "");
  if (!csv.empty()) {
    const std::string csv_path = ctx.resolve(csv);
    require_parent_dir(csv_path, "generate.csv_output");
    sgmus::export_dataset_csv(samples, csv_path);
  }

  json stage_cfg = {{"label", label}, {"n_samples", n_samples}, {"n_steps", n_steps}, {"stage_seed", seed}};
  finish_artifact(ctx, "generate", out, stage_cfg, inputs, json{{"extrapolated", !warnings.empty()}}, warnings);
  return 0;
}

int run_couple(const Context& ctx) {
  const std::string ckpt_path = require_input(ctx, "couple", "checkpoint", "checkpoint.json");
  json inputs = json::array({input_record("checkpoint", ckpt_path)});
  const auto net = sgmus::load_checkpoint(ckpt_path);
  const auto sys = system_from_config(ctx.cfg);

  sgmus::WindowConfig wc;
  const double label = num_or(ctx.cfg, "couple", "label", 5.0);
  wc.n_windows = static_cast<std::size_t>(int_or(ctx.cfg, "couple", "n_windows", 10));
  wc.n_steps = static_cast<std::size_t>(int_or(ctx.cfg, "couple", "n_steps", 1000));
  wc.dt = num_or(ctx.cfg, "couple", "dt", 1e-2);
  wc.kappa = num_or(ctx.cfg, "couple", "kappa", 10.0);
  const std::string mode = str_or(ctx.cfg, "couple", "center_mode", "at_label");
  if (mode == "at_label") {
    wc.center_mode = sgmus::CenterMode::AtLabel;
  } else if (mode == "at_initial_slow") {
    wc.center_mode = sgmus::CenterMode::AtInitialSlow;
  } else {
    throw sgmus::ConfigError("couple.center_mode", "must be 'at_label' or 'at_initial_slow'");
  }
  wc.generate_steps = static_cast<Eigen::Index>(int_or(ctx.cfg, "couple", "generate_steps", 500));
  wc.grid = grid_from_config(ctx.cfg, "couple");
  wc.seed = stage_seed(ctx, kStageCouple);
  wc.fast_bias_centers = num_list_or(ctx.cfg, "couple", "fast_bias_centers", {});
  wc.kappa_fast = num_or(ctx.cfg, "couple", "kappa_fast", 0.0);

  const std::string out = ctx.resolve(str_or(ctx.cfg, "couple", "output", "pooled.csv"));
  require_parent_dir(out, "couple.output");

  const auto result = sgmus::coupled_pipeline(net, sys, label, wc);
  save_pdf_csv(result.pooled, out);

  std::vector<std::string> warnings;
  if (result.extrapolated) {
    warnings.push_back(sgmus::strfmt("label %g lies outside the training label range [%g, %g]; extrapolating",
                                     label, net.norm_stats.y_min, net.norm_stats.y_max));
  }

  // per-window provenance record
  const std::string windows_path = ctx.resolve(str_or(ctx.cfg, "couple", "windows_output", "windows.json"));
  require_parent_dir(windows_path, "couple.windows_output");
  json windows = json::array();
  for (std::size_t i = 0; i < result.windows.size(); ++i) {
    const auto& w = result.windows[i];
    json jw = {{"index", i},
               {"kappa", w.bias.kappa},
               {"center", w.bias.center},
               {"n_steps", w.n_steps},
               {"dt", w.dt},
               {"seed", w.seed},
               {"initial_state", {w.initial_state[0], w.initial_state[1]}},
               {"initial_state_source", "sgm_generated"}};
    if (w.fast_bias) jw["fast_bias"] = {{"kappa", w.fast_bias->kappa}, {"center", w.fast_bias->center}};
    windows.push_back(std::move(jw));
  }
  {
    std::ofstream os(windows_path);
    if (!os) throw std::runtime_error(sgmus::strfmt("cannot open %s", windows_path.c_str()));
    os << json{{"label", label}, {"extrapolated", result.extrapolated}, {"windows", windows}}.dump(1) << '\n';
  }

  json metadata = {{"label", label},
                   {"extrapolated", result.extrapolated},
                   {"pooled_integral", result.pooled.integral()},
                   {"pooled_mode", result.pooled.mode()},
                   {"windows_output", windows_path}};
  if (result.wham) {
    const std::string wham_path = ctx.resolve(str_or(ctx.cfg, "couple", "wham_output", "wham.csv"));
    require_parent_dir(wham_path, "couple.wham_output");
    save_pdf_csv(result.wham->pdf, wham_path);
    json offsets = json::array();
    for (Eigen::Index i = 0; i < result.wham->offsets.size(); ++i) offsets.push_back(result.wham->offsets(i));
    metadata["wham"] = {{"output", wham_path},
                        {"iterations", result.wham->iterations},
                        {"residual", result.wham->residual},
                        {"offsets", offsets}};
  }

  json stage_cfg = {{"system", system_json(sys)},
                    {"label", label},
                    {"n_windows", wc.n_windows},
                    {"n_steps", wc.n_steps},
                    {"dt", wc.dt},
                    {"kappa", wc.kappa},
                    {"center_mode", mode},
                    {"generate_steps", wc.generate_steps},
                    {"stage_seed", wc.seed}};
  finish_artifact(ctx, "couple", out, stage_cfg, inputs, metadata, warnings);
  return 0;
}

int run_analyze(const Context& ctx) {
  const std::string ckpt_path = require_input(ctx, "analyze", "checkpoint", "checkpoint.json");
  const std::string train_path = require_input(ctx, "analyze", "training", "labeled.bin");
  json inputs = json::array({input_record("checkpoint", ckpt_path), input_record("training_dataset", train_path)});
  const auto net = sgmus::load_checkpoint(ckpt_path);
  const auto training = sgmus::load_dataset(train_path);
  const auto sys = system_from_config(ctx.cfg);

  sgmus::StudyConfig sc;
  sc.sample_sizes.clear();
  for (double s : num_list_or(ctx.cfg, "analyze", "sample_sizes", {250, 1000, 4000})) {
    sc.sample_sizes.push_back(static_cast<std::size_t>(s));
  }
  sc.n_experiments = static_cast<std::size_t>(int_or(ctx.cfg, "analyze", "n_experiments", 100));
  sc.n_windows = static_cast<std::size_t>(int_or(ctx.cfg, "analyze", "n_windows", 10));
  sc.label = num_or(ctx.cfg, "analyze", "label", 5.0);
  sc.kappa = num_or(ctx.cfg, "analyze", "kappa", 10.0);
  sc.dt = num_or(ctx.cfg, "analyze", "dt", 1e-2);
  sc.generate_steps = static_cast<Eigen::Index>(int_or(ctx.cfg, "analyze", "generate_steps", 500));
  sc.baseline_pool = static_cast<std::size_t>(int_or(ctx.cfg, "analyze", "baseline_pool", 100));
  sc.grid = grid_from_config(ctx.cfg, "analyze");
  sc.seed = stage_seed(ctx, kStageAnalyze);

  const std::string prefix = ctx.resolve(str_or(ctx.cfg, "analyze", "output_prefix", "convergence"));
  const std::string us_path = prefix + "_us_only.csv";
  const std::string coupled_path = prefix + "_coupled.csv";
  require_parent_dir(us_path, "analyze.output_prefix");

  const auto result = sgmus::convergence_study(sys, training, net, sc);
  sgmus::save_convergence_csv(result.us_only, us_path);
  sgmus::save_convergence_csv(result.coupled, coupled_path);

  json sizes = json::array();
  for (auto s : sc.sample_sizes) sizes.push_back(s);
  json stage_cfg = {{"system", system_json(sys)},
                    {"label", sc.label},
                    {"sample_sizes", sizes},
                    {"n_experiments", sc.n_experiments},
                    {"n_windows", sc.n_windows},
                    {"kappa", sc.kappa},
                    {"dt", sc.dt},
                    {"generate_steps", sc.generate_steps},
                    {"baseline_pool", sc.baseline_pool},
                    {"stage_seed", sc.seed},
                    {"abscissa", "steps per window; window count fixed"},
                    {"dispersion", "standard error of the mean"}};
  json curves;
  auto curve_json = [](const sgmus::ConvergenceCurve& c) {
    json j;
    j["mean_l1"] = c.mean_l1;
    j["stderr_l1"] = c.stderr_l1;
    return j;
  };
  curves["us_only"] = curve_json(result.us_only);
  curves["coupled"] = curve_json(result.coupled);
  curves["coupled_output"] = coupled_path;
  finish_artifact(ctx, "analyze", us_path, stage_cfg, inputs, curves);
  finish_artifact(ctx, "analyze", coupled_path, stage_cfg, inputs, curves);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditional score-model assisted enhanced sampling pipeline"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path;
  std::vector<std::string> sets;
  std::size_t threads = 0;
  const char* env_root = std::getenv("SGMUS_OUTPUT_ROOT");
  std::string output_root = env_root != nullptr ? env_root : ".";
  std::int64_t seed_override = -1;

  app.add_option("--config", config_path, "JSON configuration file");
  app.add_option("--set", sets, "Override a config value by dot path, e.g. --set train.n_iterations=2000");
  app.add_option("--threads", threads, "Worker thread cap (0 = hardware default)");
  app.add_option("--output-root", output_root, "Directory artifacts are resolved against (env SGMUS_OUTPUT_ROOT)");
  app.add_option("--seed", seed_override, "Override master_seed");

  auto* c_sim = app.add_subcommand("simulate", "Sample trajectory data from a benchmark system");
  auto* c_label = app.add_subcommand("label", "Attach slow-variable labels (known slow coordinate or diffusion maps)");
  auto* c_train = app.add_subcommand("train", "Train the conditional score network");
  auto* c_gen = app.add_subcommand("generate", "Generate microstates at a prescribed label");
  auto* c_couple = app.add_subcommand("couple", "Run generator-initialized umbrella sampling and pool");
  auto* c_analyze = app.add_subcommand("analyze", "Convergence study: umbrella sampling alone vs coupled");
  auto* c_all = app.add_subcommand("all", "Run the full pipeline in order");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    Context ctx;
    ctx.cfg = json::object();
    if (!config_path.empty()) {
      if (!fs::is_regular_file(config_path)) {
        throw sgmus::ConfigError("--config", sgmus::strfmt("file does not exist: %s", config_path.c_str()));
      }
      std::ifstream is(config_path);
      try {
        is >> ctx.cfg;
      } catch (const json::parse_error& e) {
        throw sgmus::ConfigError("--config", sgmus::strfmt("invalid JSON: %s", e.what()));
      }
    }
    for (const auto& s : sets) apply_set(ctx.cfg, s);
    check_config_keys(ctx.cfg);
    if (ctx.cfg.contains("schema_version") && ctx.cfg["schema_version"].get<long long>() != 1) {
      throw sgmus::ConfigError("schema_version", "only version 1 is supported");
    }
    if (ctx.cfg.contains("master_seed") && !ctx.cfg["master_seed"].is_number_integer()) {
      throw sgmus::ConfigError("master_seed", "must be an integer");
    }
    ctx.master_seed = seed_override >= 0
                          ? static_cast<std::uint64_t>(seed_override)
                          : static_cast<std::uint64_t>(ctx.cfg.value("master_seed", static_cast<std::int64_t>(0)));
    ctx.output_root = output_root;
    if (!fs::is_directory(ctx.output_root)) {
      throw sgmus::ConfigError("--output-root",
                               sgmus::strfmt("directory does not exist: %s", ctx.output_root.string().c_str()));
    }
    sgmus::set_max_threads(threads);

    if (c_all->parsed()) {
      run_simulate(ctx);
      run_label(ctx);
      run_train(ctx);
      run_generate(ctx);
      run_couple(ctx);
      run_analyze(ctx);
      return 0;
    }
    if (c_sim->parsed()) return run_simulate(ctx);
    if (c_label->parsed()) return run_label(ctx);
    if (c_train->parsed()) return run_train(ctx);
    if (c_gen->parsed()) return run_generate(ctx);
    if (c_couple->parsed()) return run_couple(ctx);
    if (c_analyze->parsed()) return run_analyze(ctx);
    return 2;
  } catch (const sgmus::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime error: " << e.what() << "\n";
    return 3;
  }
}
