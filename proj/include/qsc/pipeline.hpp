#pragma once

#include "qsc/common.hpp"
#include "qsc/datasets.hpp"
#include "qsc/dictionary.hpp"
#include "qsc/io.hpp"
#include "qsc/patches.hpp"
#include "qsc/qubo.hpp"
#include "qsc/solvers.hpp"

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace qsc {

inline constexpr int kPatchSize = 6;
inline constexpr int kPatchStride = 2;
inline constexpr int kClasses = 10;

/// Spatial grid of binary codes, flattened as ((row * cols) + col) * atoms + atom.
struct FeatureMap {
  int rows = 0;
  int cols = 0;
  int atoms = 0;
  BinaryState bits;
  std::uint8_t label = 0;

  std::size_t length() const { return bits.size(); }
  double sparsity() const {
    return bits.empty() ? 0.0 : static_cast<double>(count_active(bits)) / static_cast<double>(bits.size());
  }
  BinaryState code(int r, int c) const {
    const auto begin = bits.begin() + static_cast<std::ptrdiff_t>((r * cols + c) * atoms);
    return BinaryState(begin, begin + atoms);
  }
  Vector features() const { return to_vector(bits); }
};

/// Codes every 6x6 patch (stride 2) of a 12x12 image with its lowest-energy
/// state and arranges them on the 4x4 grid.
inline FeatureMap encode_image(const Vector& image, const Dictionary& dict, double lambda, const SparseSolver& solver,
                               std::uint64_t stream = 0) {
  if (dict.dim() != kPatchSize * kPatchSize) throw DimensionError("patch encoding needs a 36-row dictionary");
  const auto patches = tile(image, 12, 12, kPatchSize, kPatchStride);
  FeatureMap map{4, 4, static_cast<int>(dict.size()), {}, 0};
  map.bits.reserve(patches.size() * static_cast<std::size_t>(dict.size()));
  for (std::size_t k = 0; k < patches.size(); ++k) {
    const auto& p = patches[k];
    try {
      const auto s = solver.solve(dict, p.pixels, lambda, 1, stream * patches.size() + k);
      map.bits.insert(map.bits.end(), s.ground().state.begin(), s.ground().state.end());
    } catch (const Error& e) {
      throw Error("patch (" + std::to_string(p.row) + "," + std::to_string(p.col) + "): " + e.what());
    }
  }
  return map;
}

/// Matching pursuit constrained, patch by patch, to the activation count of
/// `reference` (normally the annealer's feature map for the same image).
inline FeatureMap encode_image_matched_mp(const Vector& image, const Dictionary& dict, const FeatureMap& reference) {
  const auto patches = tile(image, 12, 12, kPatchSize, kPatchStride);
  FeatureMap map{reference.rows, reference.cols, reference.atoms, {}, reference.label};
  for (const auto& p : patches) {
    const auto a = matching_pursuit(dict, p.pixels, count_active(reference.code(p.row, p.col)));
    map.bits.insert(map.bits.end(), a.begin(), a.end());
  }
  return map;
}

/// Whole-image spectrum for the undercomplete (144-row) dictionary.
inline SolutionSpectrum encode_image_whole_spectrum(const Vector& image, const Dictionary& dict, double lambda,
                                                    const SparseSolver& solver, std::size_t keep,
                                                    std::uint64_t stream = 0) {
  if (dict.dim() != image.size()) throw DimensionError("whole-image encoding needs a dictionary with one row per pixel");
  return solver.solve(dict, image, lambda, keep, stream);
}

inline BinaryState encode_image_whole(const Vector& image, const Dictionary& dict, double lambda,
                                      const SparseSolver& solver, std::uint64_t stream = 0) {
  return encode_image_whole_spectrum(image, dict, lambda, solver, 1, stream).ground().state;
}

/// Encodes every image; patch mode for 36-row dictionaries, whole-image
/// (1x1 grid) otherwise. Image i uses solver stream i.
inline std::vector<FeatureMap> encode_dataset(const ImageSet& set, const Dictionary& dict, double lambda,
                                              const SparseSolver& solver, unsigned workers = 1) {
  std::vector<FeatureMap> maps(set.size());
  const bool patches = dict.dim() == kPatchSize * kPatchSize;
  parallel_for(set.size(), workers, [&](std::size_t i) {
    try {
      if (patches) {
        maps[i] = encode_image(set.images[i], dict, lambda, solver, i);
      } else {
        maps[i] = FeatureMap{1, 1, static_cast<int>(dict.size()), encode_image_whole(set.images[i], dict, lambda, solver, i), 0};
      }
    } catch (const Error& e) {
      throw Error("image " + std::to_string(i) + ": " + e.what());
    }
    maps[i].label = set.labels[i];
  });
  return maps;
}

inline double mean_sparsity(const std::vector<FeatureMap>& maps) {
  if (maps.empty()) return 0.0;
  double s = 0.0;
  for (const auto& m : maps) s += m.sparsity();
  return s / static_cast<double>(maps.size());
}

/// The min(k, N_s) lowest-energy codes of a spectrum.
inline std::vector<BinaryState> augment(const SolutionSpectrum& spectrum, std::size_t k) {
  std::vector<BinaryState> out;
  for (std::size_t i = 0; i < std::min(k, spectrum.size()); ++i) out.push_back(spectrum.states[i].state);
  return out;
}

// ---------------------------------------------------------------------------
// Datasets for the classifier heads

struct LabeledFeatures {
  std::vector<Vector> x;
  std::vector<std::uint8_t> y;

  std::size_t size() const { return x.size(); }
  void push(Vector v, std::uint8_t label) {
    x.push_back(std::move(v));
    y.push_back(label);
  }
};

inline LabeledFeatures to_features(const std::vector<FeatureMap>& maps) {
  LabeledFeatures out;
  for (const auto& m : maps) out.push(m.features(), m.label);
  return out;
}

/// Train/test split in a 5:1 ratio: the last floor(n/6) items are the test set.
struct Split {
  std::size_t train = 0;
  std::size_t test = 0;
};

inline Split split_5_1(std::size_t n) { return {n - n / 6, n / 6}; }

inline LabeledFeatures slice(const LabeledFeatures& f, std::size_t begin, std::size_t end) {
  LabeledFeatures out;
  for (std::size_t i = begin; i < end; ++i) out.push(f.x[i], f.y[i]);
  return out;
}

namespace detail {

inline void check_features(const LabeledFeatures& data) {
  if (data.size() == 0) throw InsufficientDataError("no training rows");
  if (data.x.size() != data.y.size()) throw DimensionError("feature/label count mismatch");
  const auto dim = data.x.front().size();
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.x[i].size() != dim) throw DimensionError("inconsistent feature dimension at row " + std::to_string(i));
    if (data.y[i] >= kClasses) throw DomainError("label out of range at row " + std::to_string(i));
  }
}

inline int argmax_lowest(const Vector& scores) {
  int best = 0;
  for (int c = 1; c < scores.size(); ++c)
    if (scores[c] > scores[best]) best = c;
  return best;
}

}  // namespace detail

/// One-vs-rest linear SVM.
struct LinearSVM {
  Matrix weights;  // classes x features
  Vector bias;

  Vector scores(const Vector& x) const {
    if (x.size() != weights.cols()) throw DimensionError("feature dimension mismatch");
    return weights * x + bias;
  }
  /// Highest score; ties go to the lowest class index.
  int predict(const Vector& x) const { return detail::argmax_lowest(scores(x)); }
};

struct SvmConfig {
  int epochs = 30;
  double lr = 0.1;
  double reg = 1e-4;
  std::uint64_t seed = 3;
};

struct SvmFit {
  LinearSVM model;
  /// Regularized mean hinge loss after each epoch.
  std::vector<double> loss;
};

inline double svm_objective(const LinearSVM& m, const LabeledFeatures& data, double reg) {
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const Vector s = m.scores(data.x[i]);
    for (int c = 0; c < kClasses; ++c) {
      const double y = data.y[i] == c ? 1.0 : -1.0;
      loss += std::max(0.0, 1.0 - y * s[c]);
    }
  }
  return loss / static_cast<double>(data.size()) + 0.5 * reg * m.weights.squaredNorm();
}

/// SGD on the L2-regularized one-vs-rest hinge loss with step
/// lr / (1 + lr * reg * t) and a seeded per-epoch shuffle.
inline SvmFit train_svm(const LabeledFeatures& data, const SvmConfig& cfg) {
  detail::check_features(data);
  const auto dim = data.x.front().size();
  SvmFit fit{{Matrix::Zero(kClasses, dim), Vector::Zero(kClasses)}, {}};
  LinearSVM& m = fit.model;
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  double t = 0.0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t i : order) {
      const double eta = cfg.lr / (1.0 + cfg.lr * cfg.reg * t);
      t += 1.0;
      const Vector& x = data.x[i];
      const Vector s = m.weights * x + m.bias;
      m.weights *= (1.0 - eta * cfg.reg);
      for (int c = 0; c < kClasses; ++c) {
        const double y = data.y[i] == c ? 1.0 : -1.0;
        if (y * s[c] < 1.0) {
          m.weights.row(c) += eta * y * x.transpose();
          m.bias[c] += eta * y;
        }
      }
    }
    fit.loss.push_back(svm_objective(m, data, cfg.reg));
  }
  return fit;
}

inline int predict_svm(const LinearSVM& m, const Vector& x) { return m.predict(x); }

/// Two-layer perceptron: rectified hidden layer, softmax output.
struct MlpHead {
  Matrix hidden_weights;  // hidden x features
  Vector hidden_bias;
  Matrix output_weights;  // classes x hidden
  Vector output_bias;

  Vector logits(const Vector& x) const {
    if (x.size() != hidden_weights.cols()) throw DimensionError("feature dimension mismatch");
    const Vector h = (hidden_weights * x + hidden_bias).cwiseMax(0.0);
    return output_weights * h + output_bias;
  }
  int predict(const Vector& x) const { return detail::argmax_lowest(logits(x)); }
};

struct MlpConfig {
  int hidden = 256;
  int epochs = 30;
  double lr = 0.05;
  double momentum = 0.9;
  int batch_size = 32;
  std::uint64_t seed = 5;
};

struct MlpFit {
  MlpHead model;
  std::vector<double> loss;  // mean cross-entropy per epoch
};

inline MlpFit train_mlp(const LabeledFeatures& data, const MlpConfig& cfg) {
  detail::check_features(data);
  const auto dim = data.x.front().size();
  std::mt19937_64 rng(cfg.seed);
  auto init = [&](Eigen::Index rows, Eigen::Index cols, double limit) {
    Matrix w(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = limit * (2.0 * uniform01(rng) - 1.0);
    return w;
  };
  MlpFit fit;
  MlpHead& m = fit.model;
  m.hidden_weights = init(cfg.hidden, dim, std::sqrt(6.0 / static_cast<double>(dim)));
  m.hidden_bias = Vector::Zero(cfg.hidden);
  m.output_weights = init(kClasses, cfg.hidden, std::sqrt(6.0 / static_cast<double>(cfg.hidden + kClasses)));
  m.output_bias = Vector::Zero(kClasses);

  Matrix v_hw = Matrix::Zero(m.hidden_weights.rows(), m.hidden_weights.cols());
  Vector v_hb = Vector::Zero(m.hidden_bias.size());
  Matrix v_ow = Matrix::Zero(m.output_weights.rows(), m.output_weights.cols());
  Vector v_ob = Vector::Zero(m.output_bias.size());

  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t b = std::min(batch, order.size() - start);
      Matrix x(dim, static_cast<Eigen::Index>(b));
      Matrix target = Matrix::Zero(kClasses, static_cast<Eigen::Index>(b));
      for (std::size_t k = 0; k < b; ++k) {
        x.col(static_cast<Eigen::Index>(k)) = data.x[order[start + k]];
        target(data.y[order[start + k]], static_cast<Eigen::Index>(k)) = 1.0;
      }
      const Matrix pre = (m.hidden_weights * x).colwise() + m.hidden_bias;
      const Matrix h = pre.cwiseMax(0.0);
      Matrix logits = (m.output_weights * h).colwise() + m.output_bias;
      Matrix prob(logits.rows(), logits.cols());
      for (Eigen::Index k = 0; k < logits.cols(); ++k) {
        const Vector z = (logits.col(k).array() - logits.col(k).maxCoeff()).exp();
        prob.col(k) = z / z.sum();
        total -= std::log(std::max(prob.col(k).dot(target.col(k)), 1e-300));
      }
      const Matrix d_out = (prob - target) / static_cast<double>(b);
      const Matrix d_hid = ((m.output_weights.transpose() * d_out).array() * (pre.array() > 0.0).cast<double>()).matrix();
      v_ow = cfg.momentum * v_ow - cfg.lr * d_out * h.transpose();
      v_ob = cfg.momentum * v_ob - cfg.lr * d_out.rowwise().sum();
      v_hw = cfg.momentum * v_hw - cfg.lr * d_hid * x.transpose();
      v_hb = cfg.momentum * v_hb - cfg.lr * d_hid.rowwise().sum();
      m.output_weights += v_ow;
      m.output_bias += v_ob;
      m.hidden_weights += v_hw;
      m.hidden_bias += v_hb;
    }
    const double mean = total / static_cast<double>(order.size());
    if (!std::isfinite(mean) || !m.hidden_weights.allFinite() || !m.output_weights.allFinite()) {
      throw DivergenceError("MLP training diverged at epoch " + std::to_string(epoch));
    }
    fit.loss.push_back(mean);
  }
  return fit;
}

inline int predict_mlp(const MlpHead& m, const Vector& x) { return m.predict(x); }

template <class Model>
double accuracy(const Model& model, const LabeledFeatures& data) {
  if (data.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < data.size(); ++i) hits += model.predict(data.x[i]) == data.y[i];
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

// ---------------------------------------------------------------------------
// Feature map files: "QSCF", u32 count, u32 rows, u32 cols, u32 atoms, then per
// map ceil(rows*cols*atoms/8) bytes of LSB-first packed bits and a label byte.

inline std::string serialize_feature_maps(const std::vector<FeatureMap>& maps) {
  std::string out = "QSCF";
  const FeatureMap shape = maps.empty() ? FeatureMap{4, 4, 47, {}, 0} : maps.front();
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(maps.size()));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.rows));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.cols));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(shape.atoms));
  const std::size_t bits = static_cast<std::size_t>(shape.rows * shape.cols * shape.atoms);
  for (const auto& m : maps) {
    if (m.rows != shape.rows || m.cols != shape.cols || m.atoms != shape.atoms || m.bits.size() != bits) {
      throw DimensionError("feature maps must share one shape");
    }
    std::string packed((bits + 7) / 8, '\0');
    for (std::size_t k = 0; k < bits; ++k)
      if (m.bits[k]) packed[k / 8] = static_cast<char>(packed[k / 8] | (1 << (k % 8)));
    out += packed;
    out.push_back(static_cast<char>(m.label));
  }
  return out;
}

inline std::vector<FeatureMap> deserialize_feature_maps(const std::string& in) {
  std::size_t pos = 0;
  io::expect_magic(in, pos, "QSCF");
  const auto count = io::get_le<std::uint32_t>(in, pos);
  FeatureMap shape;
  shape.rows = static_cast<int>(io::get_le<std::uint32_t>(in, pos));
  shape.cols = static_cast<int>(io::get_le<std::uint32_t>(in, pos));
  shape.atoms = static_cast<int>(io::get_le<std::uint32_t>(in, pos));
  const std::size_t bits = static_cast<std::size_t>(shape.rows * shape.cols * shape.atoms);
  const std::size_t bytes = (bits + 7) / 8;
  if (in.size() != pos + count * (bytes + 1)) throw ConsistencyError("QSCF payload size mismatch");
  std::vector<FeatureMap> maps(count, shape);
  for (auto& m : maps) {
    m.bits.resize(bits);
    for (std::size_t k = 0; k < bits; ++k) m.bits[k] = (static_cast<unsigned char>(in[pos + k / 8]) >> (k % 8)) & 1u;
    pos += bytes;
    m.label = static_cast<std::uint8_t>(in[pos++]);
  }
  return maps;
}

inline void save_feature_maps(const std::filesystem::path& path, const std::vector<FeatureMap>& maps) {
  io::write_file(path, serialize_feature_maps(maps));
}

inline std::vector<FeatureMap> load_feature_maps(const std::filesystem::path& path) {
  return deserialize_feature_maps(io::read_file(path));
}

/// "label,f0,f1,..." one row per map.
inline std::string format_feature_csv(const std::vector<FeatureMap>& maps) {
  std::ostringstream out;
  out << "label";
  if (!maps.empty())
    for (std::size_t k = 0; k < maps.front().length(); ++k) out << ",f" << k;
  out << '\n';
  for (const auto& m : maps) {
    out << int{m.label};
    for (auto b : m.bits) out << ',' << int{b};
    out << '\n';
  }
  return out.str();
}

}  // namespace qsc
