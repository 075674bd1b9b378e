// Real-input FFT of a fixed size backed by FFTW.

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace hsvc::dsp {

class RealFft {
 public:
  explicit RealFft(std::size_t n);
  ~RealFft();
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }
  std::size_t bins() const { return n_ / 2 + 1; }

  // out[k] = sum_n in[n] exp(-2 pi i k n / N), k = 0..N/2.
  void forward(std::span<const double> in, std::span<std::complex<double>> out);
  // Unnormalized Hermitian inverse: out[n] = sum_{k=0}^{N-1} X[k] exp(+2 pi i k n / N)
  // with X extended by conjugate symmetry; imaginary parts of bins 0 and N/2
  // are ignored.
  void inverse(std::span<const std::complex<double>> in, std::span<double> out);

 private:
  std::size_t n_;
  double* real_ = nullptr;
  void* complex_ = nullptr;
  void* forward_plan_ = nullptr;
  void* inverse_plan_ = nullptr;
};

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

}  // namespace hsvc::dsp
