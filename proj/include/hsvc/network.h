// Generator (up-sampling stream, speaker down-sampling stream, sine and
// loudness condition streams) and the multi-scale discriminator.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hsvc/autograd.h"
#include "hsvc/ops.h"
#include "hsvc/tensor.h"

namespace hsvc::nn {

constexpr float kLeakySlope = 0.2f;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Channel, factor and dilation tables. The down-sampling streams mirror the
// up-sampling stream: down block k has the channels of up block (n - 1 - k).
struct ArchConfig {
  std::string name = "full";
  int ling_dim = 512;
  int pre_channels = 384;
  std::vector<int> up_channels{288, 192, 96, 48, 24};
  std::vector<int> up_factors{2, 4, 4, 4, 5};
  std::vector<int> up_dilations{1, 3, 9, 27};
  std::vector<int> down_dilations{1, 2, 4};
  int sine_channels = 8;
  int loudness_channels = 1;

  int disc_scales = 3;
  int disc_pool = 2;
  // Output channels of layers 1..6; layer 7 emits the 1-channel score map.
  std::vector<int> disc_channels{16, 64, 256, 1024, 1024, 1024};
  std::vector<int> disc_kernels{15, 41, 41, 41, 41, 5, 3};
  std::vector<int> disc_strides{1, 4, 4, 4, 4, 1, 1};
  std::vector<int> disc_groups{1, 4, 16, 64, 256, 1, 1};

  static ArchConfig full();
  // Channels divided by 8 and a narrow discriminator, for CPU tests.
  static ArchConfig tiny();
  static ArchConfig preset(const std::string& name);

  std::size_t blocks() const { return up_channels.size(); }
  std::size_t hop() const;
  std::vector<int> down_channels() const;
  std::vector<int> down_factors() const;
  // Factors of the condition-stream chain, applied from audio rate.
  std::vector<int> condition_factors() const;
  std::size_t disc_min_length() const;

  // Throws ShapeError on inconsistent tables.
  void validate() const;

  std::string to_text() const;
  static ArchConfig from_text(const std::string& text);

  friend bool operator==(const ArchConfig&, const ArchConfig&) = default;
};

struct ConvParams {
  Var weight;
  Var bias;
};

struct UpBlockParams {
  int factor = 1;
  std::vector<int> dilations;
  ConvParams upconv;
  std::vector<ConvParams> res;
};

struct DownBlockParams {
  int factor = 1;
  std::vector<int> dilations;
  ConvParams conv;
  std::vector<ConvParams> res;
};

struct SpeakerStreamParams {
  std::vector<DownBlockParams> blocks;
  ConvParams ling_head;
};

struct ConditionStreamParams {
  std::vector<DownBlockParams> blocks;
  // heads[j] is tapped after blocks[j] and emits (gamma; xi) stacked on rows.
  std::vector<ConvParams> heads;
};

using NamedParams = std::vector<std::pair<std::string, Var>>;

// Parameter collections own their leaf nodes; copies would alias them, so
// they are move-only. Use clone() for an independent copy.
struct GeneratorParams {
  ArchConfig arch;
  ConvParams pre;
  std::vector<UpBlockParams> up;
  ConvParams post;
  SpeakerStreamParams speaker;
  ConditionStreamParams sine;
  ConditionStreamParams loudness;

  GeneratorParams() = default;
  GeneratorParams(GeneratorParams&&) = default;
  GeneratorParams& operator=(GeneratorParams&&) = default;
  GeneratorParams(const GeneratorParams&) = delete;
  GeneratorParams& operator=(const GeneratorParams&) = delete;

  NamedParams named() const;
  GeneratorParams clone() const;
};

struct DiscLayer {
  ConvParams conv;
  Conv1dSpec spec;
  bool activation = true;
};

struct DiscriminatorParams {
  ArchConfig arch;
  std::vector<std::vector<DiscLayer>> scales;

  DiscriminatorParams() = default;
  DiscriminatorParams(DiscriminatorParams&&) = default;
  DiscriminatorParams& operator=(DiscriminatorParams&&) = default;
  DiscriminatorParams(const DiscriminatorParams&) = delete;
  DiscriminatorParams& operator=(const DiscriminatorParams&) = delete;

  NamedParams named() const;
  DiscriminatorParams clone() const;
};

struct ModelParams {
  GeneratorParams generator;
  DiscriminatorParams discriminator;
};

// Weights ~ N(0, g^2 / fan_in) with g = 0.1 for FiLM heads, 0.3 for residual
// convs and 1 elsewhere; biases zero. Deterministic given the rng state.
ModelParams init_params(const ArchConfig& arch, std::mt19937_64& rng);

// Structure only (all tensors zero).
GeneratorParams make_generator(const ArchConfig& arch);
DiscriminatorParams make_discriminator(const ArchConfig& arch);

std::size_t parameter_count(const NamedParams& params);

// --- Plain-tensor forms of the normalization and modulation primitives ---

struct FiLMOutput {
  Tensor gamma;
  Tensor xi;
};

// (gamma_F + gamma_L) * U + xi_F + xi_L
Tensor film_modulate(const Tensor& u, const FiLMOutput& sine, const FiLMOutput& loudness);

struct MeanNormalized {
  Tensor normalized;
  std::vector<float> mean;
};

// Subtracts the per-channel time mean; no variance scaling.
MeanNormalized instance_mean_normalize(const Tensor& h);

// Mean-normalize then add mu_target per channel.
Tensor adain_mean(const Tensor& h, std::span<const float> mu_target);

// --- Differentiable forward passes ---

struct FiLMVars {
  Var gamma;
  Var xi;
};

Var adain_mean(const Var& h, const Var& mu_target);

// LeakyReLU -> transposed conv (stride f, kernel 2f) -> residual dilated
// stack, each layer FiLM -> LeakyReLU -> conv -> +residual -> AdaIN.
Var upsample_block(const Var& h, const FiLMVars& sine, const FiLMVars& loudness,
                   const Var& mu_target, const UpBlockParams& params);

// Strided conv (stride f, kernel 2f) -> residual dilated stack with
// LeakyReLU pre-activations. Requires T % f == 0.
Var downsample_block(const Var& h, const DownBlockParams& params);

struct SpeakerStreamOutput {
  // Per-block time means (C x 1), shallowest block first.
  std::vector<Var> means;
  // ling_dim x T_ling
  Var predicted_ling;
};

SpeakerStreamOutput speaker_stream_forward(const Var& audio, const SpeakerStreamParams& params,
                                           std::size_t hop);

// FiLM pairs ordered to match up blocks 1..n (coarsest rate first).
std::vector<FiLMVars> condition_stream_forward(const Var& signal,
                                               const ConditionStreamParams& params,
                                               std::size_t hop);

// ling: ling_dim x T_ling; sine: K x (hop T_ling); loudness: 1 x (hop T_ling);
// stats: speaker means shallowest-first as produced by the speaker stream.
// Returns 1 x (hop T_ling) audio.
Var generator_forward(const Var& ling, const Var& sine, const Var& loudness,
                      const std::vector<Var>& stats, const GeneratorParams& params);

// Score maps of D_1 (raw), D_2 (pooled once), D_3 (pooled twice).
std::vector<Var> discriminator_forward(const Var& audio, const DiscriminatorParams& params);

// --- Hierarchical speaker representation ---

struct SpeakerStats {
  std::vector<std::vector<float>> means;  // shallowest block first

  void validate(const ArchConfig& arch) const;
  friend bool operator==(const SpeakerStats&, const SpeakerStats&) = default;
};

SpeakerStats to_speaker_stats(const SpeakerStreamOutput& out);
std::vector<Var> stats_vars(const SpeakerStats& stats);

// Inference helpers over plain buffers.
Var audio_var(std::span<const float> samples);
SpeakerStats extract_speaker_stats(const GeneratorParams& params, std::span<const float> audio);

// --- Checkpoint container ---
//
// "HSVCCKPT" + u32 version, then a length-prefixed UTF-8 metadata block
// (key=value lines), then u32 count of entries, each a length-prefixed name
// and a length-prefixed tensor blob in the binary tensor format.
struct Checkpoint {
  std::map<std::string, std::string> meta;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor& tensor(const std::string& name) const;
  bool has_tensor(const std::string& name) const;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint_file(const std::filesystem::path& path);

// Adds parameter tensors under their canonical names.
void append_params(Checkpoint& ckpt, const NamedParams& params);
// Copies tensors by canonical name into params, validating element counts.
void restore_params(const Checkpoint& ckpt, const NamedParams& params);

// Convenience for inference: arch echo in meta plus generator/discriminator.
Checkpoint make_model_checkpoint(const GeneratorParams& gen, const DiscriminatorParams& disc);
GeneratorParams load_generator(const Checkpoint& ckpt);

}  // namespace hsvc::nn
