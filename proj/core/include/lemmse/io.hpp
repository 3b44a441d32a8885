#pragma once

#include "lemmse/grid.hpp"
#include "lemmse/operators.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace lemmse {

/// NPY v1.0 tensor: little-endian float64, C order.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

void write_npy(const std::filesystem::path &path, const Tensor &t);
/// Accepts '<f8' and, for convenience, '<f4' (widened); rejects Fortran order.
Tensor read_npy(const std::filesystem::path &path);

Tensor to_tensor(const ImageGrid &img);                  ///< shape (C, H, W)
Tensor to_tensor(const Dataset &d);                      ///< shape (K, C, H, W)
ImageGrid image_from_tensor(const Tensor &t);            ///< (C, H, W) or (H, W)
Dataset dataset_from_tensor(const Tensor &t);            ///< (K, C, H, W) or (K, H, W)

/// 8- or 16-bit grayscale / RGB (alpha dropped, palettes expanded), scaled to [0, 1].
ImageGrid read_png(const std::filesystem::path &path);
/// Clipped to [0, 1] and quantized to 8 bits; 1 or 3 channels.
void write_png(const std::filesystem::path &path, const ImageGrid &img);

/// Fixed palette for integer labels: color_of(id) is stable across runs;
/// unlabeled pixels are white.
std::array<std::uint8_t, 3> label_color(Index id);
void write_label_png(const std::filesystem::path &path, const std::vector<std::optional<Index>> &labels, Index height,
                     Index width);

/// A directory of PNG files (lexicographic order) or a single .npy tensor.
Dataset ingest_dataset(const std::filesystem::path &path);
/// A PNG file or a .npy tensor of shape (C, H, W) / (H, W).
ImageGrid read_image(const std::filesystem::path &path);

/// y = A xbar + sigma z with z from NormalStream(seed).
ImageGrid synthesize_measurement(const ImageGrid &xbar, const LinearOperator &A, double sigma, std::uint64_t seed);

} // namespace lemmse
