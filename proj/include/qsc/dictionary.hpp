#pragma once

#include "qsc/common.hpp"
#include "qsc/datasets.hpp"
#include "qsc/io.hpp"
#include "qsc/patches.hpp"

#include <cmath>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace qsc {

/// Feature dictionary: one unit-norm atom per column.
class Dictionary {
 public:
  Dictionary() = default;

  /// Normalizes every column; throws on zero or non-finite columns.
  static Dictionary from_columns(Matrix atoms) {
    if (atoms.cols() < 1 || atoms.rows() < 1) throw DimensionError("dictionary needs at least one atom");
    if (!atoms.allFinite()) throw DomainError("dictionary entries must be finite");
    for (Eigen::Index j = 0; j < atoms.cols(); ++j) {
      const double norm = atoms.col(j).norm();
      if (norm == 0.0) throw DomainError("zero atom " + std::to_string(j));
      atoms.col(j) /= norm;
    }
    Dictionary d;
    d.atoms_ = std::move(atoms);
    return d;
  }

  /// Wraps columns as-is; used when reading files and by tests that need
  /// deliberately malformed dictionaries.
  static Dictionary raw(Matrix atoms) {
    Dictionary d;
    d.atoms_ = std::move(atoms);
    return d;
  }

  const Matrix& atoms() const { return atoms_; }
  Eigen::Index dim() const { return atoms_.rows(); }
  Eigen::Index size() const { return atoms_.cols(); }
  double overcompleteness() const { return static_cast<double>(size()) / static_cast<double>(dim()); }

  /// Largest |1 - ||phi_j|||.
  double max_norm_deviation() const {
    double worst = 0.0;
    for (Eigen::Index j = 0; j < atoms_.cols(); ++j) worst = std::max(worst, std::abs(atoms_.col(j).norm() - 1.0));
    return worst;
  }

  bool operator==(const Dictionary& other) const {
    return atoms_.rows() == other.atoms_.rows() && atoms_.cols() == other.atoms_.cols() && atoms_ == other.atoms_;
  }

 private:
  Matrix atoms_;
};

/// Builds a dictionary from `n` distinct random samples: whole images when
/// `patch` is empty, otherwise patch x patch crops at any position. All-zero
/// samples are skipped.
inline Dictionary imprint(const ImageSet& set, std::size_t n, std::optional<int> patch, std::uint64_t seed) {
  if (n == 0) throw DomainError("atom count must be >= 1");
  const int size = patch.value_or(0);
  if (patch && (size < 1 || size > set.width || size > set.height)) throw DimensionError("patch larger than image");
  const std::size_t per_image =
      patch ? static_cast<std::size_t>((set.width - size + 1) * (set.height - size + 1)) : 1;
  const std::size_t total = set.size() * per_image;

  auto candidate = [&](std::size_t idx) -> Vector {
    const auto& img = set.images[idx / per_image];
    if (!patch) return img;
    const std::size_t pos = idx % per_image;
    const int span = set.width - size + 1;
    return crop(img, set.width, static_cast<int>(pos) / span, static_cast<int>(pos) % span, size);
  };

  std::vector<std::size_t> pool(total);
  for (std::size_t i = 0; i < total; ++i) pool[i] = i;
  std::mt19937_64 rng(seed);
  Matrix atoms(patch ? size * size : set.pixels(), static_cast<Eigen::Index>(n));
  std::size_t found = 0;
  // Partial Fisher-Yates: each candidate is visited at most once.
  for (std::size_t i = 0; i < total && found < n; ++i) {
    std::swap(pool[i], pool[i + uniform_index(rng, total - i)]);
    Vector v = candidate(pool[i]);
    if (v.squaredNorm() == 0.0) continue;
    atoms.col(static_cast<Eigen::Index>(found++)) = v;
  }
  if (found < n) {
    throw InsufficientDataError("only " + std::to_string(found) + " nonzero candidates for " + std::to_string(n) +
                                " atoms");
  }
  return Dictionary::from_columns(std::move(atoms));
}

struct LearnConfig {
  double lr = 0.01;
  double momentum = 0.5;
  std::size_t batch_size = 256;
  std::size_t steps = 100;
  std::uint64_t seed = 11;
  unsigned workers = 1;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
  }
};

/// One residual-Hebbian update: v <- momentum*v + lr*mean((X - phi a) a^T),
/// phi <- phi + v, then every column is renormalized. `velocity` must be
/// zero-initialized with the dictionary's shape on the first call.
inline Dictionary hebbian_step(const Dictionary& dict, std::span<const Vector> signals,
                               std::span<const BinaryState> codes, Matrix& velocity, double lr, double momentum) {
  if (signals.size() != codes.size()) throw DimensionError("signal/code count mismatch");
  if (signals.empty()) throw DimensionError("empty batch");
  const Matrix& phi = dict.atoms();
  if (velocity.size() == 0) velocity = Matrix::Zero(phi.rows(), phi.cols());
  if (velocity.rows() != phi.rows() || velocity.cols() != phi.cols()) throw DimensionError("velocity shape mismatch");

  Matrix grad = Matrix::Zero(phi.rows(), phi.cols());
  for (std::size_t k = 0; k < signals.size(); ++k) {
    const auto& x = signals[k];
    const auto& a = codes[k];
    if (x.size() != phi.rows()) throw DimensionError("signal dimension does not match dictionary");
    if (a.size() != static_cast<std::size_t>(phi.cols())) throw DimensionError("code length does not match dictionary");
    for (auto bit : a) {
      if (bit > 1) throw DomainError("code entries must be 0 or 1");
    }
    const Vector av = to_vector(a);
    const Vector residual = x - phi * av;
    for (Eigen::Index j = 0; j < phi.cols(); ++j) {
      if (a[static_cast<std::size_t>(j)]) grad.col(j) += residual;
    }
  }
  grad /= static_cast<double>(signals.size());
  velocity = momentum * velocity + lr * grad;

  Matrix next = phi + velocity;
  for (Eigen::Index j = 0; j < next.cols(); ++j) {
    const double norm = next.col(j).norm();
    if (norm > 0.0 && std::isfinite(norm)) {
      next.col(j) /= norm;
    } else {
      next.col(j) = phi.col(j);
    }
  }
  return Dictionary::raw(std::move(next));
}

// "QSCD", u32 dim, u32 atoms, then column-major little-endian float64.
inline std::string serialize_dictionary(const Dictionary& d) {
  std::string out = "QSCD";
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.dim()));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d.size()));
  for (Eigen::Index k = 0; k < d.atoms().size(); ++k) io::put_le<double>(out, d.atoms().data()[k]);
  return out;
}

inline Dictionary deserialize_dictionary(const std::string& in) {
  std::size_t pos = 0;
  io::expect_magic(in, pos, "QSCD");
  const auto rows = static_cast<Eigen::Index>(io::get_le<std::uint32_t>(in, pos));
  const auto cols = static_cast<Eigen::Index>(io::get_le<std::uint32_t>(in, pos));
  if (in.size() != pos + static_cast<std::size_t>(rows * cols) * 8) throw ConsistencyError("QSCD payload size mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = io::get_le<double>(in, pos);
  return Dictionary::raw(std::move(m));
}

inline void save_dictionary(const std::filesystem::path& path, const Dictionary& d) {
  io::write_file(path, serialize_dictionary(d));
}

inline Dictionary load_dictionary(const std::filesystem::path& path) {
  return deserialize_dictionary(io::read_file(path));
}

}  // namespace qsc
