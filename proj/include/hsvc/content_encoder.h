// Linguistic features: the on-disk tensor format, loading of externally
// computed encoder outputs, and a deterministic log-mel pseudo-encoder.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "hsvc/audio_io.h"
#include "hsvc/tensor.h"

namespace hsvc::content {

constexpr std::size_t kLingDim = 512;
constexpr std::size_t kLingHop = 640;
constexpr std::size_t kMelBins = 80;
constexpr std::size_t kMelWindow = 2048;

// "HSVC" + u32 version + u32 rows + u32 cols, zero-padded to 44 bytes,
// followed by rows * cols little-endian float32 values in row-major order.
constexpr std::size_t kTensorHeaderBytes = 44;
constexpr std::uint32_t kTensorVersion = 1;

class TensorFileError : public std::runtime_error {
 public:
  enum class Kind { kIo, kBadMagic, kBadVersion, kDimensionMismatch, kTruncated };
  TensorFileError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Serialize a 2-D tensor (higher ranks are flattened to rows x rest).
std::string encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::string& bytes, const std::string& origin = "<memory>");

// Atomic: writes to a temporary sibling and renames over the target.
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

// Writes bytes atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& bytes);

// T_ling x 512 matrix at hop 640 / 16 kHz.
struct LinguisticFeatures {
  Tensor values;

  std::size_t frames() const { return values.rows(); }
};

LinguisticFeatures load_features(const std::filesystem::path& path);
void save_features(const std::filesystem::path& path, const LinguisticFeatures& feats);

// Number of frames for a clip of `samples` samples (padded up to the hop).
std::size_t frames_for(std::size_t samples);

// 80-bin log-mel (window 2048, hop 640) projected to 512 dimensions by a
// seed-derived random matrix, then mean/variance normalized per dimension
// over the utterance.
LinguisticFeatures pseudo_encode(const audio::AudioClip& clip, std::uint64_t seed);

}  // namespace hsvc::content
