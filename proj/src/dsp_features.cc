#include "hsvc/dsp_features.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "hsvc/fft.h"

namespace hsvc::dsp {

std::size_t AutocorrelationPitch::window_length(int sample_rate, double fmin) {
  return 2 * static_cast<std::size_t>(std::ceil(sample_rate / fmin));
}

F0Track AutocorrelationPitch::extract(const audio::AudioClip& clip,
                                      const F0Options& opts) const {
  const int sr = clip.sample_rate;
  const auto max_lag = static_cast<std::size_t>(std::ceil(sr / opts.fmin));
  const auto min_lag = std::max<std::size_t>(2, static_cast<std::size_t>(std::floor(sr / opts.fmax)));
  const std::size_t integration = max_lag;
  const std::size_t window = integration + max_lag;
  if (clip.samples.size() < window)
    throw DspError("extract_f0: clip shorter than one analysis window (" +
                   std::to_string(window) + " samples)");

  const std::size_t hop = static_cast<std::size_t>(opts.hop);
  const std::size_t frames = clip.samples.size() / hop;
  F0Track track{std::vector<float>(frames, 0.0f), opts.hop, sr};

  std::vector<double> frame(window);
  std::vector<double> diff(max_lag + 2);
  std::vector<double> norm(max_lag + 2);
  const auto len = static_cast<long>(clip.samples.size());

  for (std::size_t i = 0; i < frames; ++i) {
    const long start = static_cast<long>(i * hop) - static_cast<long>(window / 2);
    double energy = 0.0;
    for (std::size_t j = 0; j < window; ++j) {
      const long idx = start + static_cast<long>(j);
      frame[j] = (idx >= 0 && idx < len) ? clip.samples[static_cast<std::size_t>(idx)] : 0.0;
    }
    for (std::size_t j = 0; j < integration; ++j) energy += frame[j] * frame[j];
    if (std::sqrt(energy / static_cast<double>(integration)) < silence_rms_) continue;

    diff[0] = 0.0;
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
      double acc = 0.0;
      for (std::size_t j = 0; j < integration; ++j) {
        const double d = frame[j] - frame[j + lag];
        acc += d * d;
      }
      diff[lag] = acc;
    }
    // Cumulative-mean normalized difference.
    norm[0] = 1.0;
    double running = 0.0;
    for (std::size_t lag = 1; lag <= max_lag; ++lag) {
      running += diff[lag];
      norm[lag] = running > 0.0 ? diff[lag] * static_cast<double>(lag) / running : 1.0;
    }

    std::size_t best = 0;
    for (std::size_t lag = min_lag; lag <= max_lag; ++lag) {
      if (norm[lag] < threshold_) {
        while (lag + 1 <= max_lag && norm[lag + 1] < norm[lag]) ++lag;
        best = lag;
        break;
      }
    }
    if (best == 0) continue;

    double refined = static_cast<double>(best);
    if (best > 1 && best < max_lag) {
      const double a = norm[best - 1], b = norm[best], c = norm[best + 1];
      const double denom = a - 2.0 * b + c;
      if (denom > 0.0) refined += 0.5 * (a - c) / denom;
    }
    const double f0 = sr / refined;
    if (f0 >= opts.fmin && f0 <= opts.fmax) track.values[i] = static_cast<float>(f0);
  }
  return track;
}

F0Track extract_f0(const audio::AudioClip& clip, int hop, double fmin, double fmax,
                   const PitchBackend* backend) {
  if (clip.sample_rate != audio::kSampleRate)
    throw DspError("extract_f0: expected a 16 kHz clip");
  if (!(fmin > 0.0 && fmin < fmax)) throw DspError("extract_f0: need 0 < fmin < fmax");
  if (hop <= 0) throw DspError("extract_f0: hop must be positive");
  static const AutocorrelationPitch kDefault;
  const PitchBackend& impl = backend ? *backend : kDefault;
  return impl.extract(clip, F0Options{hop, fmin, fmax});
}

std::vector<float> linear_interpolate(std::span<const float> values, std::size_t target_len) {
  if (values.empty()) throw DspError("linear_interpolate: empty input");
  if (target_len == 0) throw DspError("linear_interpolate: target length must be >= 1");
  std::vector<float> out(target_len);
  const std::size_t n = values.size();
  if (n == 1 || target_len == 1) {
    std::fill(out.begin(), out.end(), values[0]);
    return out;
  }
  const double scale = static_cast<double>(n - 1) / static_cast<double>(target_len - 1);
  for (std::size_t j = 0; j < target_len; ++j) {
    const double pos = static_cast<double>(j) * scale;
    auto lo = static_cast<std::size_t>(pos);
    if (lo >= n - 1) lo = n - 2;
    const double frac = pos - static_cast<double>(lo);
    out[j] = static_cast<float>(values[lo] + (values[lo + 1] - values[lo]) * frac);
  }
  out.back() = values[n - 1];
  return out;
}

SineExcitation harmonic_sine_excitation(std::span<const float> f0, int num_harmonics,
                                        int sample_rate, std::mt19937_64& rng,
                                        const ExcitationOptions& opts) {
  if (num_harmonics < 1) throw DspError("harmonic_sine_excitation: K must be >= 1");
  if (sample_rate <= 0) throw DspError("harmonic_sine_excitation: invalid sample rate");
  const auto K = static_cast<std::size_t>(num_harmonics);
  const std::size_t T = f0.size();

  std::vector<double> phases(K);
  if (opts.phases) {
    if (opts.phases->size() != K)
      throw DspError("harmonic_sine_excitation: need one phase per harmonic");
    phases = *opts.phases;
  } else {
    std::uniform_real_distribution<double> uni(0.0, 2.0 * std::numbers::pi);
    for (auto& p : phases) p = uni(rng);
  }

  SineExcitation out{Tensor::matrix(K, T), num_harmonics, sample_rate};
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  std::normal_distribution<double> noise(0.0, kNoiseStd);
  double base_phase = 0.0;  // sum_{k<=t} 2 pi f_k / fs, reduced mod 2 pi
  for (std::size_t t = 0; t < T; ++t) {
    const double f = f0[t];
    base_phase = std::fmod(base_phase + kTwoPi * f / sample_rate, kTwoPi);
    for (std::size_t i = 0; i < K; ++i) {
      const double n = opts.add_noise ? noise(rng) : 0.0;
      double v;
      if (f > 0.0)
        v = kVoicedAmplitude * std::sin(static_cast<double>(i + 1) * base_phase + phases[i]) + n;
      else
        v = kUnvoicedGain * n;
      out.values.at(i, t) = static_cast<float>(v);
    }
  }
  return out;
}

double a_weighting_db(double freq_hz) {
  const double f2 = freq_hz * freq_hz;
  const double num = 12194.0 * 12194.0 * f2 * f2;
  const double den = (f2 + 20.6 * 20.6) *
                     std::sqrt((f2 + 107.7 * 107.7) * (f2 + 737.9 * 737.9)) *
                     (f2 + 12194.0 * 12194.0);
  return 20.0 * std::log10(num / den) + 2.0;
}

double loudness_floor_db() { return 10.0 * std::log10(kLoudnessFloor); }

float loudness_condition(float db) {
  const double floor_db = loudness_floor_db();
  return static_cast<float>((db - floor_db) / -floor_db);
}

LoudnessTrack a_weighted_loudness(const audio::AudioClip& clip, int hop, int n_fft) {
  if (clip.samples.empty()) throw DspError("a_weighted_loudness: empty clip");
  if (hop <= 0 || n_fft < 2) throw DspError("a_weighted_loudness: invalid hop or n_fft");
  const auto n = static_cast<std::size_t>(n_fft);
  const auto h = static_cast<std::size_t>(hop);
  const std::size_t frames = (clip.samples.size() + h - 1) / h;

  const std::vector<double> window = hann_window(n);
  double window_energy = 0.0;
  for (double w : window) window_energy += w * w;

  // Power-domain weights with one-sided bin multiplicity folded in.
  RealFft fft(n);
  std::vector<double> weights(fft.bins());
  for (std::size_t k = 0; k < fft.bins(); ++k) {
    const double freq = static_cast<double>(k) * clip.sample_rate / static_cast<double>(n);
    const double gain = k == 0 ? 0.0 : std::pow(10.0, a_weighting_db(freq) / 10.0);
    const double multiplicity = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1.0 : 2.0;
    weights[k] = gain * multiplicity / (static_cast<double>(n) * window_energy);
  }

  LoudnessTrack track{std::vector<float>(frames), hop, clip.sample_rate};
  std::vector<double> frame(n);
  std::vector<std::complex<double>> spec(fft.bins());
  const auto len = static_cast<long>(clip.samples.size());
  for (std::size_t i = 0; i < frames; ++i) {
    const long start = static_cast<long>(i * h) - static_cast<long>(n / 2);
    for (std::size_t j = 0; j < n; ++j) {
      const long idx = start + static_cast<long>(j);
      frame[j] = (idx >= 0 && idx < len) ? clip.samples[static_cast<std::size_t>(idx)] * window[j] : 0.0;
    }
    fft.forward(frame, spec);
    double power = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) power += weights[k] * std::norm(spec[k]);
    track.values[i] = static_cast<float>(10.0 * std::log10(std::max(power, kLoudnessFloor)));
  }
  return track;
}

}  // namespace hsvc::dsp
