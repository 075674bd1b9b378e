// Explicit conditioning signals: frame-rate F0, audio-rate harmonic sine
// excitation, and A-weighted loudness.

#pragma once

#include <cstddef>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "hsvc/audio_io.h"
#include "hsvc/tensor.h"

namespace hsvc::dsp {

constexpr int kNumHarmonics = 8;
constexpr int kF0Hop = 160;
constexpr int kLoudnessHop = 64;
constexpr int kLoudnessFft = 1024;
constexpr double kLoudnessFloor = 1e-7;
constexpr double kVoicedAmplitude = 0.1;
constexpr double kNoiseStd = 0.003;
constexpr double kUnvoicedGain = 100.0;

class DspError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// values[i] is the F0 in Hz of the frame centred at sample i * hop; 0 means
// unvoiced.
struct F0Track {
  std::vector<float> values;
  int hop = kF0Hop;
  int sample_rate = audio::kSampleRate;
};

struct F0Options {
  int hop = kF0Hop;
  double fmin = 40.0;
  double fmax = 1000.0;
};

class PitchBackend {
 public:
  virtual ~PitchBackend() = default;
  virtual F0Track extract(const audio::AudioClip& clip, const F0Options& opts) const = 0;
};

// Difference-function tracker with cumulative-mean normalization, an
// absolute voicing threshold, and parabolic lag refinement.
class AutocorrelationPitch final : public PitchBackend {
 public:
  explicit AutocorrelationPitch(double threshold = 0.15, double silence_rms = 1e-4)
      : threshold_(threshold), silence_rms_(silence_rms) {}
  F0Track extract(const audio::AudioClip& clip, const F0Options& opts) const override;

  // Analysis window length (samples) needed for the lowest F0.
  static std::size_t window_length(int sample_rate, double fmin);

 private:
  double threshold_;
  double silence_rms_;
};

// One value per hop (floor(len / hop) frames). Uses AutocorrelationPitch
// when no backend is given. Requires a 16 kHz clip.
F0Track extract_f0(const audio::AudioClip& clip, int hop, double fmin, double fmax,
                   const PitchBackend* backend = nullptr);

// Piecewise-linear resampling onto target_len uniformly spaced points with
// both endpoints preserved.
std::vector<float> linear_interpolate(std::span<const float> values, std::size_t target_len);

struct SineExcitation {
  Tensor values;  // num_harmonics x T
  int num_harmonics = kNumHarmonics;
  int sample_rate = audio::kSampleRate;
};

struct ExcitationOptions {
  bool add_noise = true;
  // Initial phase per harmonic; drawn uniformly in [0, 2 pi) when absent.
  std::optional<std::vector<double>> phases;
};

// Voiced samples: 0.1 sin(sum_{k<=t} 2 pi i f_k / fs + phi_i) + n_it.
// Unvoiced samples (f_t == 0): 100 n_it, with n_it ~ N(0, 0.003^2).
// The phase accumulates over every sample, including unvoiced ones.
SineExcitation harmonic_sine_excitation(std::span<const float> f0, int num_harmonics,
                                        int sample_rate, std::mt19937_64& rng,
                                        const ExcitationOptions& opts = {});

// values[i] is the A-weighted log power (dB) of the frame centred at i * hop.
struct LoudnessTrack {
  std::vector<float> values;
  int hop = kLoudnessHop;
  int sample_rate = audio::kSampleRate;
};

// A-weighting gain in dB at the given frequency (0 dB at 1 kHz).
double a_weighting_db(double freq_hz);

// ceil(len / hop) frames; Hann-windowed power spectrum, A-weighted in the
// power domain, summed, and expressed as 10 log10(max(power, 1e-7)).
LoudnessTrack a_weighted_loudness(const audio::AudioClip& clip, int hop = kLoudnessHop,
                                  int n_fft = kLoudnessFft);

// Loudness value assigned to digital silence.
double loudness_floor_db();

// Maps dB loudness onto the generator's input range: silence -> 0, 0 dB -> 1.
float loudness_condition(float db);

}  // namespace hsvc::dsp
