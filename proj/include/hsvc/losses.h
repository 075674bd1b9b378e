// Training objectives. All losses are evaluated in double precision and can
// optionally return their gradient with respect to the predicted quantity.

#pragma once

#include <array>
#include <span>
#include <stdexcept>
#include <vector>

#include "hsvc/tensor.h"

namespace hsvc::loss {

constexpr std::array<int, 6> kStftSizes{2048, 1024, 512, 256, 128, 64};
constexpr double kMagnitudeFloor = 1e-7;
constexpr double kDefaultAlpha = 2.5;
constexpr double kDefaultBeta = 2.5;
constexpr std::size_t kNumScoreMaps = 3;

class LossError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct LossReport {
  double l_stft = 0.0;
  double l_adv = 0.0;
  double l_mse = 0.0;
  double l_total = 0.0;
  double l_disc = 0.0;
};

using ScoreMaps = std::vector<std::vector<double>>;

// (1/3) sum_k mean((1 - D_k(x_hat))^2)
double adversarial_loss(const ScoreMaps& fake, ScoreMaps* grad = nullptr);

// (1/3) sum_k [mean((1 - D_k(x))^2) + mean(D_k(x_hat)^2)]
double discriminator_loss(const ScoreMaps& real, const ScoreMaps& fake,
                          ScoreMaps* grad_real = nullptr, ScoreMaps* grad_fake = nullptr);

// Mean over the given FFT sizes of spectral convergence plus mean absolute
// log-magnitude difference. Hann window, hop m / 4, centred frames with
// reflect padding of m / 2. grad (if given) is d loss / d x_hat.
double stft_loss(std::span<const double> x, std::span<const double> x_hat,
                 std::span<const int> fft_sizes, std::vector<double>* grad = nullptr);

// stft_loss over kStftSizes; inputs must have equal length >= 2048.
double multiscale_stft_loss(std::span<const double> x, std::span<const double> x_hat,
                            std::vector<double>* grad = nullptr);

// Mean squared error over all elements.
double linguistic_mse(std::span<const double> c, std::span<const double> c_hat,
                      std::vector<double>* grad = nullptr);
double linguistic_mse(const Tensor& c, const Tensor& c_hat);

// l_stft + alpha l_adv + beta l_mse
double generator_total_loss(double l_stft, double l_adv, double l_mse,
                            double alpha = kDefaultAlpha, double beta = kDefaultBeta);

}  // namespace hsvc::loss
