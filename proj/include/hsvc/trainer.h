// Adversarial training: configuration, batches, the optimization step,
// checkpointed training loop, and a single-clip overfitting harness.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "hsvc/audio_io.h"
#include "hsvc/content_encoder.h"
#include "hsvc/losses.h"
#include "hsvc/network.h"

namespace hsvc::train {

class TrainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when an utterance's feature file is absent and on-the-fly feature
// computation is disabled.
class MissingFeatureError : public TrainError {
 public:
  MissingFeatureError(std::string utterance_id, const std::string& what)
      : TrainError(what), utterance_id_(std::move(utterance_id)) {}
  const std::string& utterance_id() const { return utterance_id_; }

 private:
  std::string utterance_id_;
};

struct TrainConfig {
  int batch_size = 32;
  double segment_seconds = 1.0;
  double lr_initial = 0.001;
  std::int64_t lr_halving_interval = 100000;
  std::int64_t disc_start_step = 100000;
  double alpha = loss::kDefaultAlpha;
  double beta = loss::kDefaultBeta;
  std::int64_t total_steps = 200000;
  std::uint64_t seed = 0;
  std::string arch = "full";
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::int64_t checkpoint_every = 10000;
  // Global gradient-norm clip per network; 0 disables.
  double grad_clip = 0.0;
  // Compute features that are missing from the feature directory.
  bool pseudo_encoder = true;
  // Projection seed of the pseudo-encoder; conversion must reuse it.
  std::uint64_t encoder_seed = 0;

  // Desk-scale preset: tiny arch, batch 2, 0.25 s segments.
  static TrainConfig tiny();

  // Segment length rounded down to a multiple of the linguistic hop.
  std::size_t segment_samples() const;
  nn::ArchConfig arch_config() const;
  // Throws TrainError on invalid values; returns non-fatal warnings.
  std::vector<std::string> validate() const;

  // Flat "key = value" text; keys are the field names above.
  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig load(const std::filesystem::path& path);
};

// lr_initial * 0.5^floor(step / lr_halving_interval)
double lr_schedule(std::int64_t step, const TrainConfig& cfg);

struct AdamMoments {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

struct TrainState {
  std::int64_t step = 0;
  nn::GeneratorParams generator;
  nn::DiscriminatorParams discriminator;
  AdamMoments gen_moments;
  AdamMoments disc_moments;
  std::mt19937_64 rng;
};

TrainState init_state(const TrainConfig& cfg);

// Container includes the arch echo, the training config, step, rng state,
// both parameter sets and both optimizer moment sets.
nn::Checkpoint state_to_checkpoint(const TrainState& state, const TrainConfig& cfg);
TrainState state_from_checkpoint(const nn::Checkpoint& ckpt);
// Config echo stored in a checkpoint (defaults for absent keys).
TrainConfig config_from_checkpoint(const nn::Checkpoint& ckpt);
void save_state(const std::filesystem::path& path, const TrainState& state,
                const TrainConfig& cfg);
TrainState load_state(const std::filesystem::path& path);

// One utterance with all conditioning at audio rate, padded to a whole
// number of linguistic frames.
struct Utterance {
  std::string id;
  std::vector<float> audio;
  content::LinguisticFeatures ling;
  std::vector<float> f0;        // Hz per sample
  std::vector<float> loudness;  // generator-scaled loudness per sample
};

// Computes every feature from audio (pseudo-encoder for content).
Utterance prepare_utterance(const std::string& id, const audio::AudioClip& clip,
                            std::uint64_t encoder_seed);

// Assembles an utterance from audio plus stored feature tracks.
Utterance assemble_utterance(const std::string& id, std::vector<float> audio,
                             content::LinguisticFeatures ling, const std::vector<float>& f0_frames,
                             const std::vector<float>& loud_frames);

struct Dataset {
  std::vector<Utterance> utterances;
};

// Loads the train split: audio resampled to 16 kHz; features read from
// `<features_dir>/<id>.{ling,f0,loud}.bin` or computed when cfg.pseudo_encoder.
Dataset load_dataset(const audio::Manifest& manifest, const std::filesystem::path& features_dir,
                     const TrainConfig& cfg);

struct TrainingExample {
  Tensor audio;     // 1 x N
  Tensor ling;      // 512 x (N / 640)
  Tensor sine;      // 8 x N
  Tensor loudness;  // 1 x N
};

using TrainingBatch = std::vector<TrainingExample>;

TrainingBatch make_batch(const Dataset& data, const TrainConfig& cfg, std::mt19937_64& rng);

// One generator update (and a discriminator update once step >=
// disc_start_step). Throws TrainError naming the offending term if a loss
// is non-finite.
loss::LossReport train_step(TrainState& state, const TrainingBatch& batch, const TrainConfig& cfg);

// Loss values of the current parameters on a batch, without any update.
loss::LossReport evaluate_batch(const TrainState& state, const TrainingBatch& batch,
                                const TrainConfig& cfg);

struct TrainLoopOptions {
  std::filesystem::path output_dir;
  std::optional<std::filesystem::path> resume_from;
  // Receives one CSV metrics line per step (also appended to metrics.csv).
  std::function<void(const std::string&)> on_metrics;
};

struct TrainLoopResult {
  std::filesystem::path final_checkpoint;
  std::vector<std::filesystem::path> checkpoints;
  std::vector<loss::LossReport> reports;
};

TrainLoopResult train_loop(const TrainConfig& cfg, const Dataset& data,
                           const TrainLoopOptions& opts);

std::string metrics_header();
std::string metrics_line(std::int64_t step, double lr, const loss::LossReport& r);

struct OverfitResult {
  std::vector<loss::LossReport> reports;
  std::vector<double> stft_curve;
  TrainState state;
};

// Trains on a single clip with the discriminator disabled.
OverfitResult overfit_single_clip(const audio::AudioClip& clip, TrainConfig cfg,
                                  std::int64_t steps);

}  // namespace hsvc::train
