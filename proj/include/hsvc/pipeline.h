// End-to-end operations behind the command-line tool: feature extraction,
// one-shot conversion and objective evaluation.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsvc/audio_io.h"
#include "hsvc/content_encoder.h"
#include "hsvc/network.h"

namespace hsvc::pipeline {

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

constexpr double kMaxShiftSemitones = 24.0;

// Feature tracks for one utterance at their native frame rates.
struct UtteranceFeatures {
  content::LinguisticFeatures ling;  // T x 512, hop 640
  Tensor f0;                         // frames x 1, hop 160, Hz (0 = unvoiced)
  Tensor loudness;                   // frames x 1, hop 64, dB
};

// Pads the (16 kHz) clip to a whole number of linguistic frames, then
// computes all three tracks. The pseudo-encoder is skipped when ling is given.
UtteranceFeatures compute_features(const audio::AudioClip& clip, std::uint64_t encoder_seed,
                                   std::optional<content::LinguisticFeatures> ling = std::nullopt);

struct ExtractOptions {
  std::filesystem::path data_dir;
  std::filesystem::path out_dir;
  // External linguistic features named <utterance_id>.ling.bin.
  std::optional<std::filesystem::path> ling_dir;
  bool force = false;
  std::uint64_t encoder_seed = 0;
};

struct ExtractReport {
  std::vector<std::string> written;
  std::vector<std::string> skipped;
};

// Writes <id>.ling.bin, <id>.f0.bin and <id>.loud.bin per WAV. Existing
// complete sets are skipped unless force. A failed utterance leaves no files.
ExtractReport extract(const ExtractOptions& opts);

struct ConvertRequest {
  std::filesystem::path source_wav;
  std::filesystem::path reference_wav;
  std::filesystem::path checkpoint;
  std::filesystem::path output;
  double f0_shift_semitones = 0.0;
  std::optional<std::filesystem::path> source_ling;
  std::uint64_t seed = 0;
};

struct ConversionInputs {
  std::vector<float> source;  // trimmed to 640 * T
  UtteranceFeatures features;
  std::vector<float> f0;  // per sample, after shifting
};

// Trims the source to whole linguistic frames and derives its conditioning.
ConversionInputs prepare_source(const audio::AudioClip& source, std::uint64_t encoder_seed,
                                double f0_shift_semitones,
                                std::optional<content::LinguisticFeatures> ling = std::nullopt);

// Converts with an in-memory generator; reference only supplies speaker stats.
audio::AudioClip convert_clip(const nn::GeneratorParams& gen, const audio::AudioClip& source,
                              const audio::AudioClip& reference, double f0_shift_semitones,
                              std::uint64_t encoder_seed, std::uint64_t seed,
                              std::optional<content::LinguisticFeatures> ling = std::nullopt);

// Reads the files named in req, converts, writes req.output and returns it.
audio::AudioClip convert(const ConvertRequest& req);

// Speaker stats of a clip, trimmed to whole linguistic frames.
nn::SpeakerStats clip_speaker_stats(const nn::GeneratorParams& gen, const audio::AudioClip& clip);

struct EvalRequest {
  std::filesystem::path converted_wav;
  std::filesystem::path source_wav;
  std::filesystem::path reference_wav;
  std::filesystem::path checkpoint;
};

struct EvalReport {
  double stft_loss = 0.0;
  // Absent when no frame is voiced in both tracks.
  std::optional<double> f0_rmse_cents;
  std::size_t voiced_frames = 0;
  // Per-block L2 distance between converted and reference speaker stats.
  std::vector<double> stat_distance;
};

EvalReport evaluate(const nn::GeneratorParams& gen, const audio::AudioClip& converted,
                    const audio::AudioClip& source, const audio::AudioClip& reference);
EvalReport evaluate(const EvalRequest& req);

std::string format_eval(const EvalReport& r);

// RMSE in cents over frames voiced in both tracks (compared up to the
// shorter length).
std::optional<double> f0_rmse_cents(const std::vector<float>& a, const std::vector<float>& b,
                                    std::size_t* voiced = nullptr);

// Pearson correlation over frames voiced in both tracks; absent with fewer
// than two such frames or zero variance.
std::optional<double> voiced_pearson(const std::vector<float>& a, const std::vector<float>& b);

// Per-block L2 distance.
std::vector<double> stat_distance(const nn::SpeakerStats& a, const nn::SpeakerStats& b);

}  // namespace hsvc::pipeline
