#pragma once

#include "lemmse/grid.hpp"
#include "lemmse/operators.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

namespace lemmse::testing {


// Small seeded generator for property tests. Every draw goes through
// mt19937_64 so a failing seed replays exactly.
class Gen {
public:
  explicit Gen(std::uint64_t seed) : engine_(seed), seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }
  Index integer(Index lo, Index hi) { return std::uniform_int_distribution<Index>(lo, hi)(engine_); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  std::uint64_t bits() { return engine_(); }

  Vector vector(Index n, double lo = 0.0, double hi = 1.0) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
      v[i] = uniform(lo, hi);
    }
    return v;
  }
  Vector gaussian_vector(Index n) {
    Vector v(n);
    for (Index i = 0; i < n; ++i) {
      v[i] = normal();
    }
    return v;
  }
  Matrix matrix(Index rows, Index cols) {
    Matrix m(rows, cols);
    for (Index j = 0; j < cols; ++j) {
      for (Index i = 0; i < rows; ++i) {
        m(i, j) = normal();
      }
    }
    return m;
  }
  ImageGrid image(Shape shape) { return ImageGrid(shape, vector(shape.size())); }
  Dataset dataset(std::size_t count, Shape shape) {
    std::vector<ImageGrid> items;
    items.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      items.push_back(image(shape));
    }
    return Dataset(std::move(items));
  }
  // Smooth periodic images: a gradient plus a few Gaussian bumps, clipped to
  // [0, 1]. Closer to natural patches than i.i.d. pixels.
  ImageGrid toy_image(Shape shape) {
    ImageGrid img(shape);
    const double H = static_cast<double>(shape.height), W = static_cast<double>(shape.width);
    for (Index c = 0; c < shape.channels; ++c) {
      const double base = uniform(0.2, 0.8), gr = uniform(-0.3, 0.3), gc = uniform(-0.3, 0.3);
      const int bumps = static_cast<int>(integer(2, 4));
      std::vector<std::array<double, 4>> b(static_cast<std::size_t>(bumps));
      for (auto &p : b) {
        p = {uniform(0, H), uniform(0, W), uniform(1.0, 0.25 * std::max(H, W) + 1.0), uniform(-0.5, 0.5)};
      }
      for (Index r = 0; r < shape.height; ++r) {
        for (Index col = 0; col < shape.width; ++col) {
          double v = base + gr * std::sin(2 * std::numbers::pi * r / H) + gc * std::cos(2 * std::numbers::pi * col / W);
          for (const auto &p : b) {
            double dr = std::abs(r - p[0]), dc = std::abs(col - p[1]);
            dr = std::min(dr, H - dr);
            dc = std::min(dc, W - dc);
            v += p[3] * std::exp(-(dr * dr + dc * dc) / (2 * p[2] * p[2]));
          }
          img(c, r, col) = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    return img;
  }
  Dataset toy_dataset(std::size_t count, Shape shape) {
    std::vector<ImageGrid> items;
    items.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      items.push_back(toy_image(shape));
    }
    return Dataset(std::move(items));
  }
  Translation translation(Index height, Index width) { return {integer(0, height - 1), integer(0, width - 1)}; }

private:
  std::mt19937_64 engine_;
  std::uint64_t seed_;
};

inline double max_abs(const Vector &a, const Vector &b) { return (a - b).cwiseAbs().maxCoeff(); }

enum class Task { Denoise, Inpaint, Deconv };

inline LinearOperator make_task(Task task, Index height, Index width, Index mask_side = 3, double blur_std = 1.0) {
  switch (task) {
  case Task::Denoise:
    return make_denoising(height, width);
  case Task::Inpaint:
    return make_center_mask(height, width, mask_side);
  case Task::Deconv:
    return make_gaussian_blur(height, width, blur_std);
  }
  return make_denoising(height, width);
}

inline const char *task_name(Task t) {
  switch (t) {
  case Task::Denoise:
    return "denoise";
  case Task::Inpaint:
    return "inpaint";
  case Task::Deconv:
    return "deconv";
  }
  return "?";
}

} // namespace lemmse::testing
