#pragma once

// Sample containers and their on-disk formats.
//
// Binary layout (little-endian):
//   bytes 0..7   magic "SGMUSDS1"
//   bytes 8..11  u32 format version (1)
//   bytes 12..15 u32 flags: bit0 = has label column,
//                           bit1 = has conditioning label in header
//   bytes 16..19 u32 column count (data columns + label column if present)
//   bytes 20..23 u32 reserved (0)
//   bytes 24..31 u64 row count
//   bytes 32..39 f64 dt of the generating simulation (0 if not applicable)
//   bytes 40..47 u64 master seed
//   bytes 48..55 f64 conditioning label (0 unless flag bit1)
//   bytes 56..63 u64 reserved (0)
//   then rows * columns f64 values, row-major.
//
// The CSV export mirrors the same columns with a one-line header.

#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sgmus/common.hpp"

namespace sgmus {

struct LabeledDataset {
  Eigen::MatrixXd points;        // n_rows x data_dim
  Eigen::VectorXd labels;        // n_rows, or empty if unlabeled
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::optional<double> conditioning_label;  // set on generated-sample files

  Eigen::Index size() const { return points.rows(); }
  Eigen::Index dim() const { return points.cols(); }
  bool has_labels() const { return labels.size() == points.rows() && labels.size() > 0; }
};

namespace detail {

inline constexpr char kDatasetMagic[8] = {'S', 'G', 'M', 'U', 'S', 'D', 'S', '1'};

template <typename T>
void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void read_pod(std::istream& is, T& v) {
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

inline void save_dataset(const LabeledDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("save_dataset: cannot open " + path);
  const bool with_labels = ds.has_labels();
  const std::uint32_t flags = (with_labels ? 1u : 0u) |
                              (ds.conditioning_label.has_value() ? 2u : 0u);
  const std::uint32_t cols =
      static_cast<std::uint32_t>(ds.dim() + (with_labels ? 1 : 0));
  os.write(detail::kDatasetMagic, 8);
  detail::write_pod(os, std::uint32_t{1});
  detail::write_pod(os, flags);
  detail::write_pod(os, cols);
  detail::write_pod(os, std::uint32_t{0});
  detail::write_pod(os, static_cast<std::uint64_t>(ds.size()));
  detail::write_pod(os, ds.dt);
  detail::write_pod(os, ds.seed);
  detail::write_pod(os, ds.conditioning_label.value_or(0.0));
  detail::write_pod(os, std::uint64_t{0});
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    for (Eigen::Index c = 0; c < ds.dim(); ++c) detail::write_pod(os, ds.points(r, c));
    if (with_labels) detail::write_pod(os, ds.labels[r]);
  }
  if (!os) throw std::runtime_error("save_dataset: write failed for " + path);
}

inline LabeledDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_dataset: cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, detail::kDatasetMagic, 8) != 0)
    throw std::runtime_error("load_dataset: bad magic in " + path);
  std::uint32_t version, flags, cols, reserved;
  std::uint64_t rows, reserved2;
  double dt, cond;
  std::uint64_t seed;
  detail::read_pod(is, version);
  detail::read_pod(is, flags);
  detail::read_pod(is, cols);
  detail::read_pod(is, reserved);
  detail::read_pod(is, rows);
  detail::read_pod(is, dt);
  detail::read_pod(is, seed);
  detail::read_pod(is, cond);
  detail::read_pod(is, reserved2);
  if (!is) throw std::runtime_error("load_dataset: truncated header in " + path);
  if (version != 1)
    throw std::runtime_error(strfmt("load_dataset: unsupported version %u", version));
  const bool with_labels = (flags & 1u) != 0;
  if (cols == 0 || (with_labels && cols < 2))
    throw std::runtime_error("load_dataset: inconsistent column count");
  LabeledDataset ds;
  ds.dt = dt;
  ds.seed = seed;
  if ((flags & 2u) != 0) ds.conditioning_label = cond;
  const Eigen::Index data_dim = static_cast<Eigen::Index>(cols) - (with_labels ? 1 : 0);
  ds.points.resize(static_cast<Eigen::Index>(rows), data_dim);
  if (with_labels) ds.labels.resize(static_cast<Eigen::Index>(rows));
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < data_dim; ++c)
      detail::read_pod(is, ds.points(static_cast<Eigen::Index>(r), c));
    if (with_labels) detail::read_pod(is, ds.labels[static_cast<Eigen::Index>(r)]);
  }
  if (!is) throw std::runtime_error("load_dataset: truncated data in " + path);
  return ds;
}

// CSV mirror: header "x0,x1,...[,label]" then one row per sample at 17
// significant digits (exact double round trip).
inline void export_dataset_csv(const LabeledDataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("export_dataset_csv: cannot open " + path);
  for (Eigen::Index c = 0; c < ds.dim(); ++c) os << (c ? ",x" : "x") << c;
  if (ds.has_labels()) os << ",label";
  os << "\n";
  for (Eigen::Index r = 0; r < ds.size(); ++r) {
    for (Eigen::Index c = 0; c < ds.dim(); ++c)
      os << (c ? "," : "") << strfmt("%.17g", ds.points(r, c));
    if (ds.has_labels()) os << "," << strfmt("%.17g", ds.labels[r]);
    os << "\n";
  }
  if (!os) throw std::runtime_error("export_dataset_csv: write failed for " + path);
}

}  // namespace sgmus
