#pragma once

#include "qsc/common.hpp"
#include "qsc/io.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

namespace qsc {

/// Grayscale images flattened row-major, pixel values in [0, 1].
struct ImageSet {
  std::vector<Vector> images;
  std::vector<std::uint8_t> labels;
  int width = 0;
  int height = 0;
  /// Set by standardize(); such sets hold zero-mean signals, not [0,1] pixels.
  bool standardized = false;

  std::size_t size() const { return images.size(); }
  int pixels() const { return width * height; }

  /// First `n` images (all of them if n exceeds the size).
  ImageSet head(std::size_t n) const {
    ImageSet out{{}, {}, width, height, standardized};
    n = std::min(n, size());
    out.images.assign(images.begin(), images.begin() + static_cast<std::ptrdiff_t>(n));
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  void validate() const {
    if (images.size() != labels.size()) throw ConsistencyError("image/label count mismatch");
    for (const auto& img : images) {
      if (img.size() != pixels()) throw DimensionError("image size does not match width*height");
      if (!standardized && ((img.array() < 0.0).any() || (img.array() > 1.0).any())) {
        throw DomainError("pixel outside [0,1]");
      }
    }
  }
};

namespace detail {

inline std::uint32_t read_be32(const std::string& buf, std::size_t pos) {
  if (pos + 4 > buf.size()) throw ConsistencyError("truncated IDX header");
  const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

}  // namespace detail

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Parses an MNIST image/label IDX pair from memory.
inline ImageSet parse_idx(const std::string& image_bytes, const std::string& label_bytes) {
  if (detail::read_be32(image_bytes, 0) != kIdxImageMagic) throw FormatError("bad IDX image magic");
  if (detail::read_be32(label_bytes, 0) != kIdxLabelMagic) throw FormatError("bad IDX label magic");
  const std::uint32_t count = detail::read_be32(image_bytes, 4);
  const std::uint32_t rows = detail::read_be32(image_bytes, 8);
  const std::uint32_t cols = detail::read_be32(image_bytes, 12);
  const std::uint32_t label_count = detail::read_be32(label_bytes, 4);
  if (count != label_count) {
    throw ConsistencyError("IDX count mismatch: " + std::to_string(count) + " images vs " +
                           std::to_string(label_count) + " labels");
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  if (image_bytes.size() < 16 + pixels * count) throw ConsistencyError("IDX image file truncated");
  if (label_bytes.size() < 8 + std::size_t{count}) throw ConsistencyError("IDX label file truncated");

  ImageSet set;
  set.width = static_cast<int>(cols);
  set.height = static_cast<int>(rows);
  set.images.reserve(count);
  set.labels.reserve(count);
  const auto* px = reinterpret_cast<const unsigned char*>(image_bytes.data() + 16);
  const auto* lb = reinterpret_cast<const unsigned char*>(label_bytes.data() + 8);
  for (std::size_t i = 0; i < count; ++i) {
    Vector img(static_cast<Eigen::Index>(pixels));
    for (std::size_t k = 0; k < pixels; ++k) img[static_cast<Eigen::Index>(k)] = px[i * pixels + k] / 255.0;
    set.images.push_back(std::move(img));
    set.labels.push_back(lb[i]);
  }
  return set;
}

/// Loads MNIST IDX files (optionally gzip-compressed).
inline ImageSet load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  return parse_idx(io::read_file(images_path), io::read_file(labels_path));
}

/// 28x28 -> 12x12: drop the 2-pixel border, then average 2x2 blocks.
inline Vector downsample_image(const Vector& img) {
  if (img.size() != 28 * 28) throw DimensionError("downsample expects a 28x28 image");
  Vector out(144);
  for (int r = 0; r < 12; ++r) {
    for (int c = 0; c < 12; ++c) {
      const int r0 = 2 + 2 * r;
      const int c0 = 2 + 2 * c;
      out[r * 12 + c] =
          0.25 * (img[r0 * 28 + c0] + img[r0 * 28 + c0 + 1] + img[(r0 + 1) * 28 + c0] + img[(r0 + 1) * 28 + c0 + 1]);
    }
  }
  return out;
}

inline ImageSet downsample(const ImageSet& set, unsigned workers = 1) {
  if (set.width != 28 || set.height != 28) throw DimensionError("downsample expects 28x28 images");
  ImageSet out{std::vector<Vector>(set.size()), set.labels, 12, 12};
  parallel_for(set.size(), workers, [&](std::size_t i) { out.images[i] = downsample_image(set.images[i]); });
  return out;
}

inline constexpr double kDefaultContrast = 0.75;

/// Shifts an image to zero mean and scales it to pixel standard deviation
/// `contrast`. Constant images map to zero.
inline Vector standardize_image(const Vector& img, double contrast = kDefaultContrast) {
  const Vector centered = (img.array() - img.mean()).matrix();
  const double sd = std::sqrt(centered.squaredNorm() / static_cast<double>(img.size()));
  if (sd <= 1e-12 * (1.0 + std::abs(img.mean()))) return Vector::Zero(img.size());
  return centered * (contrast / sd);
}

/// Per-image standardization applied before sparse coding. The contrast sets
/// the signal energy (||X||^2 = contrast^2 * pixels) against which lambda is
/// measured.
inline ImageSet standardize(const ImageSet& set, double contrast = kDefaultContrast, unsigned workers = 1) {
  if (!(contrast > 0.0)) throw DomainError("contrast must be > 0");
  ImageSet out{std::vector<Vector>(set.size()), set.labels, set.width, set.height, true};
  parallel_for(set.size(), workers, [&](std::size_t i) { out.images[i] = standardize_image(set.images[i], contrast); });
  return out;
}

// Reduced dataset container: "QSC1", u32 count, u32 width, u32 height, then per
// image width*height float32 pixels and one label byte. All little-endian.
inline std::string serialize_images(const ImageSet& set) {
  std::string out = "QSC1";
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.size()));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.width));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(set.height));
  for (std::size_t i = 0; i < set.size(); ++i) {
    for (Eigen::Index k = 0; k < set.images[i].size(); ++k) io::put_le<float>(out, static_cast<float>(set.images[i][k]));
    out.push_back(static_cast<char>(set.labels[i]));
  }
  return out;
}

inline ImageSet deserialize_images(const std::string& in) {
  std::size_t pos = 0;
  io::expect_magic(in, pos, "QSC1");
  const auto count = io::get_le<std::uint32_t>(in, pos);
  ImageSet set;
  set.width = static_cast<int>(io::get_le<std::uint32_t>(in, pos));
  set.height = static_cast<int>(io::get_le<std::uint32_t>(in, pos));
  const std::size_t pixels = static_cast<std::size_t>(set.width) * static_cast<std::size_t>(set.height);
  if (in.size() != pos + count * (pixels * 4 + 1)) throw ConsistencyError("QSC1 payload size mismatch");
  set.images.reserve(count);
  set.labels.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Vector img(static_cast<Eigen::Index>(pixels));
    for (std::size_t k = 0; k < pixels; ++k) img[static_cast<Eigen::Index>(k)] = io::get_le<float>(in, pos);
    set.images.push_back(std::move(img));
    set.labels.push_back(static_cast<std::uint8_t>(in[pos++]));
  }
  return set;
}

inline void save_images(const std::filesystem::path& path, const ImageSet& set) {
  io::write_file(path, serialize_images(set));
}

inline ImageSet load_images(const std::filesystem::path& path) { return deserialize_images(io::read_file(path)); }

// ---------------------------------------------------------------------------
// Bottleneck autoencoder

inline Vector sigmoid(const Vector& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

inline Matrix sigmoid(const Matrix& z) { return (1.0 + (-z.array()).exp()).inverse().matrix(); }

/// Single-hidden-layer autoencoder with logistic units on both layers.
struct Autoencoder {
  Matrix encoder;  // hidden x input
  Vector encoder_bias;
  Matrix decoder;  // input x hidden
  Vector decoder_bias;

  int inputs() const { return static_cast<int>(encoder.cols()); }
  int hidden() const { return static_cast<int>(encoder.rows()); }

  Vector encode(const Vector& x) const { return sigmoid(Vector(encoder * x + encoder_bias)); }
  Vector decode(const Vector& h) const { return sigmoid(Vector(decoder * h + decoder_bias)); }
  Vector reconstruct(const Vector& x) const { return decode(encode(x)); }

  bool finite() const {
    return encoder.allFinite() && encoder_bias.allFinite() && decoder.allFinite() && decoder_bias.allFinite();
  }
};

struct AutoencoderConfig {
  int hidden = 47;
  int epochs = 30;
  double lr = 0.5;
  double momentum = 0.9;
  int batch_size = 32;
  std::uint64_t seed = 7;
};

struct AutoencoderFit {
  Autoencoder model;
  /// Mean squared per-pixel error on the held-out split, before training and after each epoch.
  std::vector<double> validation_mse;
};

inline Autoencoder init_autoencoder(int inputs, int hidden, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto draw = [&](Eigen::Index rows, Eigen::Index cols) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = -0.05 + 0.1 * uniform01(rng);
    return m;
  };
  Autoencoder ae;
  ae.encoder = draw(hidden, inputs);
  ae.encoder_bias = Vector::Zero(hidden);
  ae.decoder = draw(inputs, hidden);
  ae.decoder_bias = Vector::Zero(inputs);
  return ae;
}

inline double reconstruction_mse(const Autoencoder& ae, const std::vector<Vector>& images) {
  if (images.empty()) return 0.0;
  double total = 0.0;
  for (const auto& x : images) total += (ae.reconstruct(x) - x).squaredNorm();
  return total / (static_cast<double>(images.size()) * static_cast<double>(images.front().size()));
}

/// Trains with minibatch SGD + momentum on the squared reconstruction error.
/// The last 10% of the set (in order) is held out for validation; sets too
/// small to hold anything out are validated on the training images.
inline AutoencoderFit train_autoencoder(const ImageSet& set, const AutoencoderConfig& cfg) {
  if (set.width != 12 || set.height != 12) throw DimensionError("autoencoder expects 12x12 images");
  if (cfg.epochs < 1) throw DomainError("epochs must be >= 1");
  if (set.size() == 0) throw InsufficientDataError("empty training set");

  const std::size_t n_val = set.size() / 10;
  const std::size_t n_train = set.size() - n_val;
  std::vector<Vector> train(set.images.begin(), set.images.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<Vector> val(set.images.begin() + static_cast<std::ptrdiff_t>(n_train), set.images.end());
  if (val.empty()) val = train;

  const int in = set.pixels();
  AutoencoderFit fit{init_autoencoder(in, cfg.hidden, cfg.seed), {}};
  Autoencoder& ae = fit.model;
  fit.validation_mse.push_back(reconstruction_mse(ae, val));

  Matrix v_enc = Matrix::Zero(ae.encoder.rows(), ae.encoder.cols());
  Matrix v_dec = Matrix::Zero(ae.decoder.rows(), ae.decoder.cols());
  Vector v_eb = Vector::Zero(ae.encoder_bias.size());
  Vector v_db = Vector::Zero(ae.decoder_bias.size());

  std::mt19937_64 rng(derive_seed(cfg.seed, 1));
  std::vector<std::size_t> order(n_train);
  for (std::size_t i = 0; i < n_train; ++i) order[i] = i;

  const auto batch = static_cast<std::size_t>(std::max(1, cfg.batch_size));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t b = std::min(batch, n_train - start);
      Matrix x(in, static_cast<Eigen::Index>(b));
      for (std::size_t k = 0; k < b; ++k) x.col(static_cast<Eigen::Index>(k)) = train[order[start + k]];

      const Matrix h = sigmoid(Matrix((ae.encoder * x).colwise() + ae.encoder_bias));
      const Matrix y = sigmoid(Matrix((ae.decoder * h).colwise() + ae.decoder_bias));
      // d/dz of (1/b) * sum 0.5 * ||y - x||^2 through the output sigmoid
      const Matrix d_out = ((y - x).array() * y.array() * (1.0 - y.array())).matrix() / static_cast<double>(b);
      const Matrix d_hid = ((ae.decoder.transpose() * d_out).array() * h.array() * (1.0 - h.array())).matrix();

      v_dec = cfg.momentum * v_dec - cfg.lr * (d_out * h.transpose());
      v_db = cfg.momentum * v_db - cfg.lr * d_out.rowwise().sum();
      v_enc = cfg.momentum * v_enc - cfg.lr * (d_hid * x.transpose());
      v_eb = cfg.momentum * v_eb - cfg.lr * d_hid.rowwise().sum();
      ae.decoder += v_dec;
      ae.decoder_bias += v_db;
      ae.encoder += v_enc;
      ae.encoder_bias += v_eb;
    }
    const double mse = reconstruction_mse(ae, val);
    if (!std::isfinite(mse) || !ae.finite()) {
      throw DivergenceError("autoencoder training diverged at epoch " + std::to_string(epoch));
    }
    fit.validation_mse.push_back(mse);
  }
  return fit;
}

/// Replaces every image by its autoencoder reconstruction.
inline ImageSet reduce(const Autoencoder& ae, const ImageSet& set, unsigned workers = 1) {
  if (set.pixels() != ae.inputs()) throw DimensionError("image size does not match autoencoder input");
  ImageSet out{std::vector<Vector>(set.size()), set.labels, set.width, set.height};
  parallel_for(set.size(), workers, [&](std::size_t i) { out.images[i] = ae.reconstruct(set.images[i]); });
  return out;
}

// "QSCA", u32 inputs, u32 hidden, then encoder, encoder bias, decoder, decoder
// bias as column-major little-endian float64.
inline std::string serialize_autoencoder(const Autoencoder& ae) {
  std::string out = "QSCA";
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ae.inputs()));
  io::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(ae.hidden()));
  auto put = [&](const auto& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) io::put_le<double>(out, m.data()[k]);
  };
  put(ae.encoder);
  put(ae.encoder_bias);
  put(ae.decoder);
  put(ae.decoder_bias);
  return out;
}

inline Autoencoder deserialize_autoencoder(const std::string& in) {
  std::size_t pos = 0;
  io::expect_magic(in, pos, "QSCA");
  const auto inputs = static_cast<Eigen::Index>(io::get_le<std::uint32_t>(in, pos));
  const auto hidden = static_cast<Eigen::Index>(io::get_le<std::uint32_t>(in, pos));
  Autoencoder ae{Matrix(hidden, inputs), Vector(hidden), Matrix(inputs, hidden), Vector(inputs)};
  auto get = [&](auto& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = io::get_le<double>(in, pos);
  };
  get(ae.encoder);
  get(ae.encoder_bias);
  get(ae.decoder);
  get(ae.decoder_bias);
  if (pos != in.size()) throw ConsistencyError("trailing bytes in autoencoder file");
  return ae;
}

}  // namespace qsc
