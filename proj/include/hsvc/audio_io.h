// Audio reading/writing, resampling, segmenting, and dataset manifests.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace hsvc::audio {

constexpr int kSampleRate = 16000;
// Segment offsets are kept on the linguistic-frame grid.
constexpr std::size_t kSegmentAlign = 640;

struct AudioClip {
  std::vector<float> samples;
  int sample_rate = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
};

class AudioError : public std::runtime_error {
 public:
  enum class Kind {
    kMissingFile,
    kMalformedHeader,
    kUnsupportedEncoding,
    kUnwritable,
    kInvalidArgument,
    kEmptyDataset,
  };

  AudioError(Kind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Reads PCM16 or float32 RIFF/WAVE. Multichannel input is averaged to mono.
AudioClip read_wav(const std::filesystem::path& path);

// Writes PCM16; samples are clamped to [-1, 1] before quantization.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Kaiser-windowed sinc interpolation. Output length is
// round(len * target / source); equal rates return an exact copy.
AudioClip resample(const AudioClip& clip, int target_rate);

enum class Split { kTrain, kValid, kTest };

const char* split_name(Split split);
Split parse_split(const std::string& name);

struct ManifestEntry {
  std::string utterance_id;
  std::filesystem::path path;
  std::string singer_id;
  Split split = Split::kTrain;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

struct SplitRatios {
  double train = 0.9;
  double valid = 0.05;
  double test = 0.05;
};

class Manifest {
 public:
  Manifest() = default;
  explicit Manifest(std::vector<ManifestEntry> entries);

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::vector<ManifestEntry> select(Split split) const;

  // Line format: utterance_id<TAB>path<TAB>singer_id<TAB>split
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);

  friend bool operator==(const Manifest&, const Manifest&) = default;

 private:
  std::vector<ManifestEntry> entries_;
};

// Utterance id derived from a WAV path relative to the dataset root:
// "singer/take01.wav" -> "singer_take01".
std::string utterance_id_for(const std::filesystem::path& root,
                             const std::filesystem::path& file);

// Lists every .wav under root (recursively) in lexicographic order.
std::vector<std::filesystem::path> list_wavs(const std::filesystem::path& root);

// Splits each singer's utterances independently so every singer has training
// data. Singers with fewer than 3 utterances go entirely to train.
Manifest build_manifest(const std::filesystem::path& dataset_dir,
                        const SplitRatios& ratios, std::uint64_t seed);

// Start offset for a segment of `length` samples: a multiple of
// kSegmentAlign, uniformly drawn from the admissible offsets.
std::size_t segment_offset(std::size_t clip_length, std::size_t length,
                           std::mt19937_64& rng);

// Contiguous slice of exactly `length` samples, zero-padded at the end if
// the clip is shorter.
AudioClip sample_segment(const AudioClip& clip, std::size_t length,
                         std::mt19937_64& rng);

// Slice [offset, offset + length), zero-padded past the end of the clip.
std::vector<float> slice_padded(const std::vector<float>& samples,
                                std::size_t offset, std::size_t length);

}  // namespace hsvc::audio
