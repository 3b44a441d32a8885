#pragma once

#include "lemmse/grid.hpp"

#include <complex>
#include <memory>
#include <vector>

namespace lemmse {

using Complex = std::complex<double>;
using Spectrum = std::vector<Complex>;

/// 2D complex DFT on an H x W periodic grid. Forward is unnormalized, the
/// inverse carries the 1/(H*W) factor. Execution is thread-safe; plans are
/// created once per instance under a global lock.
class Fft2d {
public:
  Fft2d(Index height, Index width);
  ~Fft2d();
  Fft2d(const Fft2d &) = delete;
  Fft2d &operator=(const Fft2d &) = delete;

  Index height() const { return height_; }
  Index width() const { return width_; }

  Spectrum forward(std::span<const double> real) const;
  Spectrum forward(const Spectrum &in) const;
  /// Real part of the normalized inverse transform.
  std::vector<double> inverse_real(const Spectrum &in) const;
  Spectrum inverse(const Spectrum &in) const;

  /// Shared cached instance for a grid size.
  static std::shared_ptr<const Fft2d> get(Index height, Index width);

private:
  struct Plans;
  Index height_;
  Index width_;
  std::unique_ptr<Plans> plans_;
};

/// out = ifft(fft(x) .* symbol), real part.
std::vector<double> apply_symbol(const Fft2d &fft, std::span<const double> x, const Spectrum &symbol);

/// corr[g] = sum_i a[i] * b[i - g] over the periodic grid, g flat row-major,
/// i.e. <a, T_g b> for every translation g at once.
std::vector<double> cross_correlate(const Fft2d &fft, std::span<const double> a, std::span<const double> b);

/// out[i] = sum_g w[g] * x[i - g] (periodic), i.e. sum_g w[g] T_g x.
std::vector<double> circular_convolve(const Fft2d &fft, std::span<const double> w, std::span<const double> x);

} // namespace lemmse
