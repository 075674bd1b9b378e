#include "hsvc/fft.h"

#include <fftw3.h>

#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>
#include <stdexcept>

namespace hsvc::dsp {

namespace {
// FFTW's planner is not thread-safe.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

RealFft::RealFft(std::size_t n) : n_(n) {
  if (n < 2) throw std::invalid_argument("RealFft: size must be >= 2");
  std::lock_guard<std::mutex> lock(planner_mutex());
  real_ = fftw_alloc_real(n);
  auto* cplx = fftw_alloc_complex(n / 2 + 1);
  complex_ = cplx;
  forward_plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), real_, cplx, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), cplx, real_, FFTW_ESTIMATE);
}

RealFft::~RealFft() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
  fftw_free(real_);
  fftw_free(complex_);
}

void RealFft::forward(std::span<const double> in, std::span<std::complex<double>> out) {
  if (in.size() != n_ || out.size() != bins())
    throw std::invalid_argument("RealFft::forward: size mismatch");
  std::memcpy(real_, in.data(), n_ * sizeof(double));
  fftw_execute(static_cast<fftw_plan>(forward_plan_));
  const auto* c = static_cast<const fftw_complex*>(complex_);
  for (std::size_t k = 0; k < bins(); ++k) out[k] = {c[k][0], c[k][1]};
}

void RealFft::inverse(std::span<const std::complex<double>> in, std::span<double> out) {
  if (in.size() != bins() || out.size() != n_)
    throw std::invalid_argument("RealFft::inverse: size mismatch");
  auto* c = static_cast<fftw_complex*>(complex_);
  for (std::size_t k = 0; k < bins(); ++k) {
    c[k][0] = in[k].real();
    c[k][1] = in[k].imag();
  }
  // c2r ignores these imaginary parts mathematically; zero them explicitly.
  c[0][1] = 0.0;
  if (n_ % 2 == 0) c[n_ / 2][1] = 0.0;
  fftw_execute(static_cast<fftw_plan>(inverse_plan_));
  std::memcpy(out.data(), real_, n_ * sizeof(double));
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

}  // namespace hsvc::dsp
