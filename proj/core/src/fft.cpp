#include "lemmse/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>
#include <utility>

namespace lemmse {

namespace {

std::mutex &planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex *as_fftw(Complex *p) { return reinterpret_cast<fftw_complex *>(p); }

} // namespace

struct Fft2d::Plans {
  fftw_plan forward = nullptr;
  fftw_plan backward = nullptr;
};

Fft2d::Fft2d(Index height, Index width) : height_(height), width_(width), plans_(std::make_unique<Plans>()) {
  Spectrum scratch_in(static_cast<std::size_t>(height * width));
  Spectrum scratch_out(scratch_in.size());
  std::lock_guard lock(planner_mutex());
  const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
  plans_->forward = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), as_fftw(scratch_in.data()),
                                     as_fftw(scratch_out.data()), FFTW_FORWARD, flags);
  plans_->backward = fftw_plan_dft_2d(static_cast<int>(height), static_cast<int>(width), as_fftw(scratch_in.data()),
                                      as_fftw(scratch_out.data()), FFTW_BACKWARD, flags);
}

Fft2d::~Fft2d() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(plans_->forward);
  fftw_destroy_plan(plans_->backward);
}

std::shared_ptr<const Fft2d> Fft2d::get(Index height, Index width) {
  static std::mutex cache_mutex;
  static std::map<std::pair<Index, Index>, std::shared_ptr<const Fft2d>> cache;
  std::lock_guard lock(cache_mutex);
  auto &slot = cache[{height, width}];
  if (!slot) {
    slot = std::make_shared<const Fft2d>(height, width);
  }
  return slot;
}

Spectrum Fft2d::forward(std::span<const double> real) const {
  Spectrum in(real.begin(), real.end());
  return forward(in);
}

Spectrum Fft2d::forward(const Spectrum &in) const {
  Spectrum in_copy = in;
  Spectrum out(in.size());
  fftw_execute_dft(plans_->forward, as_fftw(in_copy.data()), as_fftw(out.data()));
  return out;
}

Spectrum Fft2d::inverse(const Spectrum &in) const {
  Spectrum in_copy = in;
  Spectrum out(in.size());
  fftw_execute_dft(plans_->backward, as_fftw(in_copy.data()), as_fftw(out.data()));
  const double scale = 1.0 / static_cast<double>(height_ * width_);
  for (auto &v : out) {
    v *= scale;
  }
  return out;
}

std::vector<double> Fft2d::inverse_real(const Spectrum &in) const {
  const Spectrum out = inverse(in);
  std::vector<double> re(out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    re[i] = out[i].real();
  }
  return re;
}

std::vector<double> apply_symbol(const Fft2d &fft, std::span<const double> x, const Spectrum &symbol) {
  Spectrum xf = fft.forward(x);
  for (std::size_t k = 0; k < xf.size(); ++k) {
    xf[k] *= symbol[k];
  }
  return fft.inverse_real(xf);
}

std::vector<double> cross_correlate(const Fft2d &fft, std::span<const double> a, std::span<const double> b) {
  Spectrum af = fft.forward(a);
  const Spectrum bf = fft.forward(b);
  for (std::size_t k = 0; k < af.size(); ++k) {
    af[k] *= std::conj(bf[k]);
  }
  return fft.inverse_real(af);
}

std::vector<double> circular_convolve(const Fft2d &fft, std::span<const double> w, std::span<const double> x) {
  Spectrum wf = fft.forward(w);
  const Spectrum xf = fft.forward(x);
  for (std::size_t k = 0; k < wf.size(); ++k) {
    wf[k] *= xf[k];
  }
  return fft.inverse_real(wf);
}

} // namespace lemmse
