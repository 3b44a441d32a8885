#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <vector>

namespace lemmse {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Shape {
  Index channels = 1;
  Index height = 1;
  Index width = 1;

  Index pixels() const { return height * width; }
  Index size() const { return channels * height * width; }
  bool operator==(const Shape &) const = default;
};

/// C x H x W image stored row-major as (channel, row, column). Spatial
/// indexing is periodic everywhere in the library.
class ImageGrid {
public:
  ImageGrid() = default;
  explicit ImageGrid(Shape shape);
  ImageGrid(Shape shape, Vector values);

  static ImageGrid constant(Shape shape, double value);

  const Shape &shape() const { return shape_; }
  Index channels() const { return shape_.channels; }
  Index height() const { return shape_.height; }
  Index width() const { return shape_.width; }
  Index pixels() const { return shape_.pixels(); }
  Index size() const { return shape_.size(); }

  const Vector &values() const { return values_; }
  Vector &values() { return values_; }

  double operator()(Index c, Index row, Index col) const { return values_[(c * shape_.height + row) * shape_.width + col]; }
  double &operator()(Index c, Index row, Index col) { return values_[(c * shape_.height + row) * shape_.width + col]; }

  /// Channel c as a contiguous span of H*W values.
  std::span<const double> channel(Index c) const { return {values_.data() + c * pixels(), static_cast<std::size_t>(pixels())}; }
  std::span<double> channel(Index c) { return {values_.data() + c * pixels(), static_cast<std::size_t>(pixels())}; }

  bool all_finite() const { return values_.allFinite(); }

private:
  Shape shape_{};
  Vector values_;
};

/// Non-empty ordered collection of equally shaped images; ids are positions.
class Dataset {
public:
  Dataset() = default;
  explicit Dataset(std::vector<ImageGrid> items);

  const Shape &shape() const { return shape_; }
  std::size_t size() const { return items_.size(); }
  const ImageGrid &operator[](std::size_t id) const { return items_[id]; }
  const std::vector<ImageGrid> &items() const { return items_; }

private:
  std::vector<ImageGrid> items_;
  Shape shape_{};
};

/// Element of Z_H x Z_W.
struct Translation {
  Index dh = 0;
  Index dw = 0;

  bool operator==(const Translation &) const = default;
};

Translation normalize(Translation g, Index height, Index width);
Translation compose(Translation a, Translation b, Index height, Index width);
Translation inverse(Translation g, Index height, Index width);
/// Translation with flat index row-major over (dh, dw).
Translation translation_from_index(Index flat, Index height, Index width);

/// Pixel n shifted by g with wrap-around: (row + dh, col + dw).
Index shift_index(Index n, Translation g, Index height, Index width);

/// output[c, i, j] = input[c, i - dh, j - dw] (periodic).
ImageGrid translate(const ImageGrid &img, Translation g);

/// Centered square window of odd side, offsets ordered (dr, dc) row-major.
class PatchGeometry {
public:
  explicit PatchGeometry(Index side);

  Index side() const { return side_; }
  Index size() const { return side_ * side_; }
  Index half() const { return side_ / 2; }
  struct Offset {
    Index dr;
    Index dc;
  };
  const std::vector<Offset> &offsets() const { return offsets_; }
  Index center_offset() const { return size() / 2; }

  /// Flat pixel indices of the window centred at n, wrapped modulo (H, W).
  std::vector<Index> window(Index n, Index height, Index width) const;

private:
  Index side_;
  std::vector<Offset> offsets_;
};

/// Concatenation over channels of the window centred at pixel n.
Vector extract_patch(const ImageGrid &img, Index n, const PatchGeometry &geom);

/// Row n equals extract_patch(img, n, geom); shape N x (C*P).
RowMatrix extract_all_patches(const ImageGrid &img, const PatchGeometry &geom);

/// All cyclic shifts of every image, image-major then translation row-major.
Dataset augment_dataset(const Dataset &d);

} // namespace lemmse
