#pragma once

#include "qsc/common.hpp"

#include <string>
#include <vector>

namespace qsc {

struct Patch {
  int row = 0;  // grid coordinate, not pixel offset
  int col = 0;
  Vector pixels;  // size*size, row-major
};

/// Copies the size x size window whose top-left pixel is (top, left).
inline Vector crop(const Vector& image, int width, int top, int left, int size) {
  Vector out(size * size);
  for (int r = 0; r < size; ++r)
    for (int c = 0; c < size; ++c) out[r * size + c] = image[(top + r) * width + left + c];
  return out;
}

/// Number of patch positions along one axis of an extent-sized image.
inline int tile_count(int extent, int patch, int stride) {
  if (patch < 1 || stride < 1 || patch > extent || (extent - patch) % stride != 0) {
    throw DimensionError("patch " + std::to_string(patch) + " with stride " + std::to_string(stride) +
                         " does not tile extent " + std::to_string(extent));
  }
  return (extent - patch) / stride + 1;
}

/// Row-major sliding-window patches; patch (r, c) covers pixels
/// [stride*r, stride*r + patch) x [stride*c, stride*c + patch).
inline std::vector<Patch> tile(const Vector& image, int width, int height, int patch = 6, int stride = 2) {
  if (image.size() != static_cast<Eigen::Index>(width) * height) throw DimensionError("image size mismatch");
  const int rows = tile_count(height, patch, stride);
  const int cols = tile_count(width, patch, stride);
  std::vector<Patch> out;
  out.reserve(static_cast<std::size_t>(rows * cols));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out.push_back({r, c, crop(image, width, r * stride, c * stride, patch)});
  return out;
}

/// Inverse of tile(): overlapping pixels are averaged.
inline Vector assemble(const std::vector<Patch>& patches, int width, int height, int patch = 6, int stride = 2) {
  Vector sum = Vector::Zero(width * height);
  Vector hits = Vector::Zero(width * height);
  for (const auto& p : patches) {
    for (int r = 0; r < patch; ++r)
      for (int c = 0; c < patch; ++c) {
        const int idx = (p.row * stride + r) * width + p.col * stride + c;
        sum[idx] += p.pixels[r * patch + c];
        hits[idx] += 1.0;
      }
  }
  return (sum.array() / hits.array().max(1.0)).matrix();
}

}  // namespace qsc
