#pragma once

#include "qsc/datasets.hpp"
#include "qsc/dictionary.hpp"
#include "qsc/patches.hpp"
#include "qsc/qubo.hpp"
#include "qsc/solvers.hpp"

#include <cmath>
#include <random>
#include <string>
#include <vector>

namespace qsc {

struct LearnResult {
  Dictionary dictionary;
  /// Mean sparse-coding energy of each step's mini-batch, measured before the update.
  std::vector<double> loss;
  bool converged = false;
};

inline constexpr std::size_t kSaturationWindow = 10;
inline constexpr double kSaturationTolerance = 1e-6;

/// Draws one training signal matching the dictionary's dimension: a whole
/// image, or a patch at a random position of the stride-2 tiling.
inline Vector sample_signal(const ImageSet& set, Eigen::Index dim, std::mt19937_64& rng) {
  const Vector& img = set.images[uniform_index(rng, set.size())];
  if (dim == img.size()) return img;
  const int size = static_cast<int>(std::lround(std::sqrt(static_cast<double>(dim))));
  if (size * size != dim) throw DimensionError("dictionary dimension is neither the image size nor a square patch");
  const int rows = tile_count(set.height, size, 2);
  const int cols = tile_count(set.width, size, 2);
  const auto r = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(rows)));
  const auto c = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(cols)));
  return crop(img, set.width, 2 * r, 2 * c, size);
}

/// Unsupervised dictionary refinement: each step encodes a random mini-batch
/// with `solver` and applies one residual-Hebbian update. Stops early once the
/// batch loss moves less than 1e-6 over 10 steps.
inline LearnResult learn(const Dictionary& init, const ImageSet& set, const LearnConfig& cfg,
                         const SparseSolver& solver, double lambda) {
  cfg.validate();
  if (set.size() == 0) throw InsufficientDataError("empty training set");
  LearnResult result{init, {}, false};
  if (cfg.steps == 0) return result;

  std::mt19937_64 rng(cfg.seed);
  Matrix velocity;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::vector<Vector> batch(cfg.batch_size);
    for (auto& x : batch) x = sample_signal(set, result.dictionary.dim(), rng);

    std::vector<BinaryState> codes(batch.size());
    std::vector<double> energy(batch.size());
    try {
      parallel_for(batch.size(), cfg.workers, [&](std::size_t k) {
        const auto spectrum = solver.solve(result.dictionary, batch[k], lambda, 1, step * cfg.batch_size + k);
        codes[k] = spectrum.ground().state;
        energy[k] = spectrum.ground().energy + 0.5 * batch[k].squaredNorm();
      });
    } catch (const Error& e) {
      throw Error("learn step " + std::to_string(step) + ": " + e.what());
    }
    double loss = 0.0;
    for (double e : energy) loss += e;
    result.loss.push_back(loss / static_cast<double>(batch.size()));

    result.dictionary = hebbian_step(result.dictionary, batch, codes, velocity, cfg.lr, cfg.momentum);

    const std::size_t t = result.loss.size();
    if (t > kSaturationWindow &&
        std::abs(result.loss[t - 1] - result.loss[t - 1 - kSaturationWindow]) < kSaturationTolerance) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace qsc
