#include "hsvc/losses.h"

#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <string>

#include "hsvc/fft.h"

namespace hsvc::loss {

namespace {

void check_maps(const ScoreMaps& maps, const char* what) {
  if (maps.size() != kNumScoreMaps)
    throw LossError(std::string(what) + ": expected 3 score maps");
  for (const auto& m : maps)
    if (m.empty()) throw LossError(std::string(what) + ": empty score map");
}

dsp::RealFft& cached_fft(std::size_t n) {
  thread_local std::map<std::size_t, std::unique_ptr<dsp::RealFft>> cache;
  auto& slot = cache[n];
  if (!slot) slot = std::make_unique<dsp::RealFft>(n);
  return *slot;
}

std::size_t reflect(long i, long len) {
  if (i < 0) i = -i;
  if (i >= len) i = 2 * (len - 1) - i;
  return static_cast<std::size_t>(i);
}

struct Spectrogram {
  std::vector<std::complex<double>> bins;  // frames x (m/2 + 1)
  std::vector<double> magnitude;
};

Spectrogram stft(std::span<const double> x, std::size_t m, const std::vector<double>& window) {
  const std::size_t hop = m / 4;
  const auto len = static_cast<long>(x.size());
  const std::size_t frames = 1 + x.size() / hop;
  dsp::RealFft& fft = cached_fft(m);
  const std::size_t nb = fft.bins();
  Spectrogram s{std::vector<std::complex<double>>(frames * nb), std::vector<double>(frames * nb)};
  std::vector<double> frame(m);
  for (std::size_t f = 0; f < frames; ++f) {
    const long start = static_cast<long>(f * hop) - static_cast<long>(m / 2);
    for (std::size_t n = 0; n < m; ++n)
      frame[n] = x[reflect(start + static_cast<long>(n), len)] * window[n];
    fft.forward(frame, std::span(s.bins).subspan(f * nb, nb));
  }
  for (std::size_t i = 0; i < s.bins.size(); ++i) s.magnitude[i] = std::abs(s.bins[i]);
  return s;
}

}  // namespace

double adversarial_loss(const ScoreMaps& fake, ScoreMaps* grad) {
  check_maps(fake, "adversarial_loss");
  const double scale = 1.0 / static_cast<double>(fake.size());
  double total = 0.0;
  if (grad) grad->assign(fake.size(), {});
  for (std::size_t k = 0; k < fake.size(); ++k) {
    const auto& m = fake[k];
    const double inv_n = 1.0 / static_cast<double>(m.size());
    double acc = 0.0;
    for (double s : m) acc += (1.0 - s) * (1.0 - s);
    total += scale * acc * inv_n;
    if (grad) {
      auto& g = (*grad)[k];
      g.resize(m.size());
      for (std::size_t i = 0; i < m.size(); ++i) g[i] = -2.0 * (1.0 - m[i]) * inv_n * scale;
    }
  }
  return total;
}

double discriminator_loss(const ScoreMaps& real, const ScoreMaps& fake, ScoreMaps* grad_real,
                          ScoreMaps* grad_fake) {
  check_maps(real, "discriminator_loss");
  check_maps(fake, "discriminator_loss");
  const double scale = 1.0 / static_cast<double>(real.size());
  double total = 0.0;
  if (grad_real) grad_real->assign(real.size(), {});
  if (grad_fake) grad_fake->assign(fake.size(), {});
  for (std::size_t k = 0; k < real.size(); ++k) {
    const auto& r = real[k];
    const auto& f = fake[k];
    const double inv_r = 1.0 / static_cast<double>(r.size());
    const double inv_f = 1.0 / static_cast<double>(f.size());
    double acc_r = 0.0, acc_f = 0.0;
    for (double s : r) acc_r += (1.0 - s) * (1.0 - s);
    for (double s : f) acc_f += s * s;
    total += scale * (acc_r * inv_r + acc_f * inv_f);
    if (grad_real) {
      auto& g = (*grad_real)[k];
      g.resize(r.size());
      for (std::size_t i = 0; i < r.size(); ++i) g[i] = -2.0 * (1.0 - r[i]) * inv_r * scale;
    }
    if (grad_fake) {
      auto& g = (*grad_fake)[k];
      g.resize(f.size());
      for (std::size_t i = 0; i < f.size(); ++i) g[i] = 2.0 * f[i] * inv_f * scale;
    }
  }
  return total;
}

double stft_loss(std::span<const double> x, std::span<const double> x_hat,
                 std::span<const int> fft_sizes, std::vector<double>* grad) {
  if (x.size() != x_hat.size()) throw LossError("stft_loss: length mismatch");
  if (fft_sizes.empty()) throw LossError("stft_loss: no FFT sizes");
  for (int m : fft_sizes)
    if (m < 4 || m % 4 != 0 || static_cast<std::size_t>(m / 2) >= x.size())
      throw LossError("stft_loss: input too short for FFT size " + std::to_string(m));

  if (grad) grad->assign(x.size(), 0.0);
  const double scale_weight = 1.0 / static_cast<double>(fft_sizes.size());
  const auto len = static_cast<long>(x.size());
  double total = 0.0;

  for (int mi : fft_sizes) {
    const auto m = static_cast<std::size_t>(mi);
    const auto window = dsp::hann_window(m);
    const Spectrogram ref = stft(x, m, window);
    const Spectrogram est = stft(x_hat, m, window);
    const std::size_t count = ref.magnitude.size();

    double diff_sq = 0.0, ref_sq = 0.0, log_abs = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double d = ref.magnitude[i] - est.magnitude[i];
      diff_sq += d * d;
      ref_sq += ref.magnitude[i] * ref.magnitude[i];
      log_abs += std::abs(std::log(std::max(ref.magnitude[i], kMagnitudeFloor)) -
                          std::log(std::max(est.magnitude[i], kMagnitudeFloor)));
    }
    const double diff_norm = std::sqrt(diff_sq);
    const double ref_norm = std::max(std::sqrt(ref_sq), kMagnitudeFloor);
    const double n = static_cast<double>(count);
    total += scale_weight * (diff_norm / ref_norm + log_abs / n);

    if (!grad) continue;
    // d loss / d |X_hat|, then through the magnitude, the DFT and the
    // reflect padding back to x_hat.
    const std::size_t hop = m / 4;
    dsp::RealFft& fft = cached_fft(m);
    const std::size_t nb = fft.bins();
    std::vector<std::complex<double>> weighted(nb);
    std::vector<double> frame_grad(m);
    const std::size_t frames = count / nb;
    for (std::size_t f = 0; f < frames; ++f) {
      for (std::size_t k = 0; k < nb; ++k) {
        const std::size_t i = f * nb + k;
        const double mag = est.magnitude[i];
        double g = 0.0;
        if (diff_norm > 0.0) g += -(ref.magnitude[i] - mag) / (diff_norm * ref_norm);
        if (mag > kMagnitudeFloor) {
          const double delta = std::log(std::max(ref.magnitude[i], kMagnitudeFloor)) - std::log(mag);
          const double sign = delta > 0.0 ? 1.0 : (delta < 0.0 ? -1.0 : 0.0);
          g += -sign / (n * mag);
        }
        g *= scale_weight;
        std::complex<double> z = mag > 0.0 ? est.bins[i] * (g / mag) : std::complex<double>{};
        // Interior bins appear twice in the Hermitian inverse.
        if (k != 0 && !(m % 2 == 0 && k == m / 2)) z *= 0.5;
        weighted[k] = z;
      }
      // d|X_k|/du_n = Re(X_k e^{+i theta_kn}) / |X_k|, so the frame gradient is a
      // Hermitian inverse transform of the weighted bins.
      fft.inverse(weighted, frame_grad);
      const long start = static_cast<long>(f * hop) - static_cast<long>(m / 2);
      for (std::size_t t = 0; t < m; ++t)
        (*grad)[reflect(start + static_cast<long>(t), len)] += frame_grad[t] * window[t];
    }
  }
  return total;
}

double multiscale_stft_loss(std::span<const double> x, std::span<const double> x_hat,
                            std::vector<double>* grad) {
  if (x.size() != x_hat.size()) throw LossError("multiscale_stft_loss: length mismatch");
  if (x.size() < static_cast<std::size_t>(kStftSizes.front()))
    throw LossError("multiscale_stft_loss: input shorter than the largest FFT size");
  return stft_loss(x, x_hat, kStftSizes, grad);
}

double linguistic_mse(std::span<const double> c, std::span<const double> c_hat,
                      std::vector<double>* grad) {
  if (c.size() != c_hat.size()) throw LossError("linguistic_mse: shape mismatch");
  if (c.empty()) throw LossError("linguistic_mse: empty input");
  const double inv = 1.0 / static_cast<double>(c.size());
  double acc = 0.0;
  if (grad) grad->resize(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double d = c[i] - c_hat[i];
    acc += d * d;
    if (grad) (*grad)[i] = -2.0 * d * inv;
  }
  return acc * inv;
}

double linguistic_mse(const Tensor& c, const Tensor& c_hat) {
  if (!c.same_shape(c_hat)) throw LossError("linguistic_mse: shape mismatch");
  std::vector<double> a(c.values().begin(), c.values().end());
  std::vector<double> b(c_hat.values().begin(), c_hat.values().end());
  return linguistic_mse(a, b);
}

double generator_total_loss(double l_stft, double l_adv, double l_mse, double alpha,
                            double beta) {
  if (!std::isfinite(l_stft) || !std::isfinite(l_adv) || !std::isfinite(l_mse))
    throw LossError("generator_total_loss: non-finite input");
  return l_stft + alpha * l_adv + beta * l_mse;
}

}  // namespace hsvc::loss
