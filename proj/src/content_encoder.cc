#include "hsvc/content_encoder.h"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include "hsvc/fft.h"

namespace hsvc::content {

namespace fs = std::filesystem;

namespace {

void put_u32(std::string& out, std::size_t pos, std::uint32_t v) {
  std::memcpy(out.data() + pos, &v, 4);
}

std::uint32_t get_u32(const std::string& in, std::size_t pos) {
  std::uint32_t v;
  std::memcpy(&v, in.data() + pos, 4);
  return v;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// kMelBins x (n_fft / 2 + 1) triangular filters spanning 0 .. sr / 2.
std::vector<std::vector<double>> mel_filterbank(std::size_t n_fft, int sample_rate) {
  const std::size_t bins = n_fft / 2 + 1;
  const double mel_hi = hz_to_mel(sample_rate / 2.0);
  std::vector<double> edges(kMelBins + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / static_cast<double>(kMelBins + 1));

  std::vector<std::vector<double>> fb(kMelBins, std::vector<double>(bins, 0.0));
  for (std::size_t m = 0; m < kMelBins; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * sample_rate / static_cast<double>(n_fft);
      if (f > lo && f < hi)
        fb[m][k] = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
    }
  }
  return fb;
}

}  // namespace

std::string encode_tensor(const Tensor& t) {
  const std::size_t rows = t.rows();
  const std::size_t cols = t.cols();
  std::string out(kTensorHeaderBytes + t.size() * 4, '\0');
  std::memcpy(out.data(), "HSVC", 4);
  put_u32(out, 4, kTensorVersion);
  put_u32(out, 8, static_cast<std::uint32_t>(rows));
  put_u32(out, 12, static_cast<std::uint32_t>(cols));
  if (!t.empty()) std::memcpy(out.data() + kTensorHeaderBytes, t.data(), t.size() * 4);
  return out;
}

Tensor decode_tensor(const std::string& bytes, const std::string& origin) {
  using Kind = TensorFileError::Kind;
  if (bytes.size() < kTensorHeaderBytes)
    throw TensorFileError(Kind::kTruncated, origin + ": truncated header");
  if (std::memcmp(bytes.data(), "HSVC", 4) != 0)
    throw TensorFileError(Kind::kBadMagic, origin + ": bad magic");
  if (get_u32(bytes, 4) != kTensorVersion)
    throw TensorFileError(Kind::kBadVersion, origin + ": unsupported version " +
                                                 std::to_string(get_u32(bytes, 4)));
  const std::size_t rows = get_u32(bytes, 8);
  const std::size_t cols = get_u32(bytes, 12);
  const std::size_t payload = rows * cols * 4;
  if (bytes.size() - kTensorHeaderBytes < payload)
    throw TensorFileError(Kind::kTruncated, origin + ": truncated payload");
  Tensor t = Tensor::matrix(rows, cols);
  if (payload) std::memcpy(t.data(), bytes.data() + kTensorHeaderBytes, payload);
  return t;
}

void write_file_atomic(const fs::path& path, const std::string& bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f)
      throw TensorFileError(TensorFileError::Kind::kIo, "cannot write " + tmp.string());
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    f.flush();
    if (!f) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw TensorFileError(TensorFileError::Kind::kIo, "write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw TensorFileError(TensorFileError::Kind::kIo, "rename failed: " + path.string());
  }
}

void save_tensor(const fs::path& path, const Tensor& t) {
  write_file_atomic(path, encode_tensor(t));
}

Tensor load_tensor(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw TensorFileError(TensorFileError::Kind::kIo, "cannot open " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_tensor(ss.str(), path.string());
}

LinguisticFeatures load_features(const fs::path& path) {
  Tensor t = load_tensor(path);
  if (t.rows() > 0 && t.cols() != kLingDim)
    throw TensorFileError(TensorFileError::Kind::kDimensionMismatch,
                          path.string() + ": expected " + std::to_string(kLingDim) +
                              " columns, found " + std::to_string(t.cols()));
  if (t.rows() == 0)
    throw TensorFileError(TensorFileError::Kind::kDimensionMismatch,
                          path.string() + ": no frames");
  for (float v : t.values())
    if (!std::isfinite(v))
      throw TensorFileError(TensorFileError::Kind::kDimensionMismatch,
                            path.string() + ": non-finite value");
  return {std::move(t)};
}

void save_features(const fs::path& path, const LinguisticFeatures& feats) {
  if (feats.values.rank() != 2 || feats.values.dim(1) != kLingDim)
    throw TensorFileError(TensorFileError::Kind::kDimensionMismatch,
                          "linguistic features must be T x 512");
  save_tensor(path, feats.values);
}

std::size_t frames_for(std::size_t samples) { return (samples + kLingHop - 1) / kLingHop; }

LinguisticFeatures pseudo_encode(const audio::AudioClip& clip, std::uint64_t seed) {
  if (clip.sample_rate != audio::kSampleRate)
    throw std::invalid_argument("pseudo_encode: expected a 16 kHz clip");
  if (clip.samples.size() < kMelWindow)
    throw std::invalid_argument("pseudo_encode: clip shorter than one analysis window");

  const std::size_t frames = frames_for(clip.samples.size());
  const auto fb = mel_filterbank(kMelWindow, clip.sample_rate);
  const auto window = dsp::hann_window(kMelWindow);
  dsp::RealFft fft(kMelWindow);

  std::vector<double> frame(kMelWindow);
  std::vector<std::complex<double>> spec(fft.bins());
  std::vector<double> power(fft.bins());
  std::vector<std::vector<double>> logmel(frames, std::vector<double>(kMelBins));
  const auto len = static_cast<long>(clip.samples.size());
  for (std::size_t i = 0; i < frames; ++i) {
    const long centre = static_cast<long>(i * kLingHop + kLingHop / 2);
    const long start = centre - static_cast<long>(kMelWindow / 2);
    for (std::size_t j = 0; j < kMelWindow; ++j) {
      const long idx = start + static_cast<long>(j);
      frame[j] = (idx >= 0 && idx < len) ? clip.samples[static_cast<std::size_t>(idx)] * window[j] : 0.0;
    }
    fft.forward(frame, spec);
    for (std::size_t k = 0; k < spec.size(); ++k) power[k] = std::norm(spec[k]);
    for (std::size_t m = 0; m < kMelBins; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < power.size(); ++k) acc += fb[m][k] * power[k];
      logmel[i][m] = std::log(std::max(acc, 1e-10));
    }
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(kMelBins)));
  std::vector<double> projection(kLingDim * kMelBins);
  for (auto& p : projection) p = normal(rng);

  std::vector<double> out(frames * kLingDim);
  for (std::size_t i = 0; i < frames; ++i)
    for (std::size_t d = 0; d < kLingDim; ++d) {
      double acc = 0.0;
      for (std::size_t m = 0; m < kMelBins; ++m) acc += projection[d * kMelBins + m] * logmel[i][m];
      out[i * kLingDim + d] = acc;
    }

  LinguisticFeatures feats{Tensor::matrix(frames, kLingDim)};
  for (std::size_t d = 0; d < kLingDim; ++d) {
    double mean = 0.0;
    for (std::size_t i = 0; i < frames; ++i) mean += out[i * kLingDim + d];
    mean /= static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t i = 0; i < frames; ++i) {
      const double c = out[i * kLingDim + d] - mean;
      var += c * c;
    }
    var /= static_cast<double>(frames);
    const double inv_std = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    for (std::size_t i = 0; i < frames; ++i)
      feats.values.at(i, d) = static_cast<float>((out[i * kLingDim + d] - mean) * inv_std);
  }
  return feats;
}

}  // namespace hsvc::content
