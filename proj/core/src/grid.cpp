#include "lemmse/grid.hpp"

#include "lemmse/error.hpp"

#include <string>

namespace lemmse {

namespace {

Index wrap(Index v, Index m) {
  const Index r = v % m;
  return r < 0 ? r + m : r;
}

} // namespace

ImageGrid::ImageGrid(Shape shape) : ImageGrid(shape, Vector::Zero(shape.size())) {}

ImageGrid::ImageGrid(Shape shape, Vector values) : shape_(shape), values_(std::move(values)) {
  if (shape.channels <= 0 || shape.height <= 0 || shape.width <= 0) {
    throw Error(ErrorCode::InvalidArgument, "image dimensions must be positive");
  }
  if (values_.size() != shape.size()) {
    throw Error(ErrorCode::ShapeMismatch, "value count " + std::to_string(values_.size()) + " does not match C*H*W = " +
                                              std::to_string(shape.size()));
  }
  if (!values_.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "image values must be finite");
  }
}

ImageGrid ImageGrid::constant(Shape shape, double value) { return ImageGrid(shape, Vector::Constant(shape.size(), value)); }

Dataset::Dataset(std::vector<ImageGrid> items) : items_(std::move(items)) {
  if (items_.empty()) {
    throw Error(ErrorCode::InvalidArgument, "dataset must not be empty");
  }
  shape_ = items_.front().shape();
  for (const auto &img : items_) {
    if (!(img.shape() == shape_)) {
      throw Error(ErrorCode::MixedShapes, "all dataset images must share one shape");
    }
  }
}

Translation normalize(Translation g, Index height, Index width) { return {wrap(g.dh, height), wrap(g.dw, width)}; }

Translation compose(Translation a, Translation b, Index height, Index width) {
  return normalize({a.dh + b.dh, a.dw + b.dw}, height, width);
}

Translation inverse(Translation g, Index height, Index width) { return normalize({-g.dh, -g.dw}, height, width); }

Translation translation_from_index(Index flat, Index height, Index width) {
  (void)height;
  return {flat / width, flat % width};
}

Index shift_index(Index n, Translation g, Index height, Index width) {
  const Index row = wrap(n / width + g.dh, height);
  const Index col = wrap(n % width + g.dw, width);
  return row * width + col;
}

ImageGrid translate(const ImageGrid &img, Translation g) {
  const Index H = img.height(), W = img.width();
  g = normalize(g, H, W);
  ImageGrid out(img.shape());
  for (Index c = 0; c < img.channels(); ++c) {
    for (Index i = 0; i < H; ++i) {
      const Index si = wrap(i - g.dh, H);
      for (Index j = 0; j < W; ++j) {
        out(c, i, j) = img(c, si, wrap(j - g.dw, W));
      }
    }
  }
  return out;
}

PatchGeometry::PatchGeometry(Index side) : side_(side) {
  if (side <= 0 || side % 2 == 0) {
    throw Error(ErrorCode::InvalidArgument, "patch side must be an odd positive integer, got " + std::to_string(side));
  }
  const Index h = side / 2;
  offsets_.reserve(static_cast<std::size_t>(side * side));
  for (Index dr = -h; dr <= h; ++dr) {
    for (Index dc = -h; dc <= h; ++dc) {
      offsets_.push_back({dr, dc});
    }
  }
}

std::vector<Index> PatchGeometry::window(Index n, Index height, Index width) const {
  const Index row = n / width, col = n % width;
  std::vector<Index> idx;
  idx.reserve(offsets_.size());
  for (const auto &o : offsets_) {
    idx.push_back(wrap(row + o.dr, height) * width + wrap(col + o.dc, width));
  }
  return idx;
}

Vector extract_patch(const ImageGrid &img, Index n, const PatchGeometry &geom) {
  const Index N = img.pixels();
  if (n < 0 || n >= N) {
    throw Error(ErrorCode::InvalidArgument, "pixel index out of range");
  }
  const auto idx = geom.window(n, img.height(), img.width());
  const Index P = geom.size();
  Vector out(img.channels() * P);
  for (Index c = 0; c < img.channels(); ++c) {
    const auto ch = img.channel(c);
    for (Index a = 0; a < P; ++a) {
      out[c * P + a] = ch[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])];
    }
  }
  return out;
}

RowMatrix extract_all_patches(const ImageGrid &img, const PatchGeometry &geom) {
  const Index N = img.pixels(), P = geom.size(), C = img.channels();
  const Index H = img.height(), W = img.width();
  RowMatrix out(N, C * P);
  for (Index n = 0; n < N; ++n) {
    const Index row = n / W, col = n % W;
    for (Index a = 0; a < P; ++a) {
      const auto &o = geom.offsets()[static_cast<std::size_t>(a)];
      const Index src = wrap(row + o.dr, H) * W + wrap(col + o.dc, W);
      for (Index c = 0; c < C; ++c) {
        out(n, c * P + a) = img.values()[c * N + src];
      }
    }
  }
  return out;
}

Dataset augment_dataset(const Dataset &d) {
  const Index H = d.shape().height, W = d.shape().width;
  std::vector<ImageGrid> out;
  out.reserve(d.size() * static_cast<std::size_t>(H * W));
  for (const auto &x : d.items()) {
    for (Index g = 0; g < H * W; ++g) {
      out.push_back(translate(x, translation_from_index(g, H, W)));
    }
  }
  return Dataset(std::move(out));
}

} // namespace lemmse
