#include "hsvc/pipeline.h"

#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "hsvc/dsp_features.h"
#include "hsvc/losses.h"
#include "hsvc/trainer.h"

namespace hsvc::pipeline {

namespace {

audio::AudioClip to_16k(const audio::AudioClip& clip) {
  return clip.sample_rate == audio::kSampleRate ? clip : audio::resample(clip, audio::kSampleRate);
}

audio::AudioClip read_16k(const std::filesystem::path& path) {
  return to_16k(audio::read_wav(path));
}

// Drops the trailing partial linguistic frame.
std::vector<float> trim_to_frames(const std::vector<float>& samples) {
  const std::size_t len = samples.size() / content::kLingHop * content::kLingHop;
  return {samples.begin(), samples.begin() + static_cast<std::ptrdiff_t>(len)};
}

Tensor column(const std::vector<float>& v) { return Tensor({v.size(), 1}, std::vector<float>(v)); }

}  // namespace

UtteranceFeatures compute_features(const audio::AudioClip& clip, std::uint64_t encoder_seed,
                                   std::optional<content::LinguisticFeatures> ling) {
  if (clip.sample_rate != audio::kSampleRate)
    throw PipelineError("compute_features: expected a 16 kHz clip");
  audio::AudioClip padded = clip;
  padded.samples = audio::slice_padded(
      clip.samples, 0, content::frames_for(clip.samples.size()) * content::kLingHop);
  UtteranceFeatures f;
  f.ling = ling ? std::move(*ling) : content::pseudo_encode(padded, encoder_seed);
  f.f0 = column(dsp::extract_f0(padded, dsp::kF0Hop, 40.0, 1000.0).values);
  f.loudness = column(dsp::a_weighted_loudness(padded).values);
  return f;
}

ExtractReport extract(const ExtractOptions& opts) {
  const auto wavs = audio::list_wavs(opts.data_dir);
  if (wavs.empty())
    throw audio::AudioError(audio::AudioError::Kind::kEmptyDataset,
                            "no .wav files under " + opts.data_dir.string());
  std::filesystem::create_directories(opts.out_dir);
  ExtractReport report;
  for (const auto& wav : wavs) {
    const std::string id = audio::utterance_id_for(opts.data_dir, wav);
    const std::vector<std::filesystem::path> outputs{opts.out_dir / (id + ".ling.bin"),
                                                     opts.out_dir / (id + ".f0.bin"),
                                                     opts.out_dir / (id + ".loud.bin")};
    bool complete = true;
    for (const auto& p : outputs) complete = complete && std::filesystem::exists(p);
    if (complete && !opts.force) {
      report.skipped.push_back(id);
      continue;
    }
    try {
      std::optional<content::LinguisticFeatures> external;
      if (opts.ling_dir) external = content::load_features(*opts.ling_dir / (id + ".ling.bin"));
      const UtteranceFeatures f = compute_features(read_16k(wav), opts.encoder_seed, external);
      content::save_features(outputs[0], f.ling);
      content::save_tensor(outputs[1], f.f0);
      content::save_tensor(outputs[2], f.loudness);
    } catch (...) {
      std::error_code ec;
      for (const auto& p : outputs) std::filesystem::remove(p, ec);
      throw;
    }
    report.written.push_back(id);
  }
  return report;
}

ConversionInputs prepare_source(const audio::AudioClip& source, std::uint64_t encoder_seed,
                                double f0_shift_semitones,
                                std::optional<content::LinguisticFeatures> ling) {
  if (!(std::abs(f0_shift_semitones) <= kMaxShiftSemitones))
    throw PipelineError("f0 shift must lie within [-24, 24] semitones");
  audio::AudioClip clip = to_16k(source);
  clip.samples = trim_to_frames(clip.samples);
  if (clip.samples.empty()) throw PipelineError("source is shorter than one linguistic frame");
  if (ling) {
    // External features define the frame count.
    clip.samples = audio::slice_padded(clip.samples, 0, ling->frames() * content::kLingHop);
  }
  ConversionInputs in;
  in.features = compute_features(clip, encoder_seed, std::move(ling));
  in.source = std::move(clip.samples);
  std::vector<float> f0 = in.features.f0.values();
  if (f0_shift_semitones != 0.0) {
    const auto ratio = static_cast<float>(std::pow(2.0, f0_shift_semitones / 12.0));
    for (float& v : f0) v *= ratio;
  }
  in.f0 = dsp::linear_interpolate(f0, in.source.size());
  return in;
}

nn::SpeakerStats clip_speaker_stats(const nn::GeneratorParams& gen, const audio::AudioClip& clip) {
  const std::vector<float> samples = trim_to_frames(to_16k(clip).samples);
  if (samples.empty())
    throw PipelineError("reference must contain at least " + std::to_string(content::kLingHop) +
                        " samples");
  return nn::extract_speaker_stats(gen, samples);
}

audio::AudioClip convert_clip(const nn::GeneratorParams& gen, const audio::AudioClip& source,
                              const audio::AudioClip& reference, double f0_shift_semitones,
                              std::uint64_t encoder_seed, std::uint64_t seed,
                              std::optional<content::LinguisticFeatures> ling) {
  const ConversionInputs in = prepare_source(source, encoder_seed, f0_shift_semitones,
                                             std::move(ling));
  if (in.features.ling.values.cols() != static_cast<std::size_t>(gen.arch.ling_dim))
    throw PipelineError("linguistic feature dimension does not match the checkpoint");
  const nn::SpeakerStats stats = clip_speaker_stats(gen, reference);
  stats.validate(gen.arch);

  const std::size_t len = in.source.size();
  std::mt19937_64 rng(seed);
  const auto sine = dsp::harmonic_sine_excitation(in.f0, gen.arch.sine_channels,
                                                  audio::kSampleRate, rng);
  const auto loud_db = dsp::linear_interpolate(in.features.loudness.values(), len);
  Tensor loud({1, len});
  for (std::size_t t = 0; t < len; ++t) loud[t] = dsp::loudness_condition(loud_db[t]);

  const nn::Var ling_t = nn::transpose(nn::constant(in.features.ling.values));
  const nn::Var out = nn::generator_forward(ling_t, nn::constant(sine.values),
                                            nn::constant(std::move(loud)), nn::stats_vars(stats),
                                            gen);
  return {out->value.values(), audio::kSampleRate};
}

audio::AudioClip convert(const ConvertRequest& req) {
  const nn::Checkpoint ckpt = nn::load_checkpoint_file(req.checkpoint);
  const nn::GeneratorParams gen = nn::load_generator(ckpt);
  const train::TrainConfig cfg = train::config_from_checkpoint(ckpt);
  std::optional<content::LinguisticFeatures> ling;
  if (req.source_ling) ling = content::load_features(*req.source_ling);
  audio::AudioClip out = convert_clip(gen, read_16k(req.source_wav), read_16k(req.reference_wav),
                                      req.f0_shift_semitones, cfg.encoder_seed, req.seed,
                                      std::move(ling));
  audio::write_wav(req.output, out);
  return out;
}

std::optional<double> f0_rmse_cents(const std::vector<float>& a, const std::vector<float>& b,
                                    std::size_t* voiced) {
  const std::size_t n = std::min(a.size(), b.size());
  double acc = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] <= 0.0f || b[i] <= 0.0f) continue;
    const double cents = 1200.0 * std::log2(static_cast<double>(a[i]) / b[i]);
    acc += cents * cents;
    ++count;
  }
  if (voiced) *voiced = count;
  if (count == 0) return std::nullopt;
  return std::sqrt(acc / static_cast<double>(count));
}

std::optional<double> voiced_pearson(const std::vector<float>& a, const std::vector<float>& b) {
  const std::size_t n = std::min(a.size(), b.size());
  std::vector<double> x, y;
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i] <= 0.0f || b[i] <= 0.0f) continue;
    x.push_back(a[i]);
    y.push_back(b[i]);
  }
  if (x.size() < 2) return std::nullopt;
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

std::vector<double> stat_distance(const nn::SpeakerStats& a, const nn::SpeakerStats& b) {
  if (a.means.size() != b.means.size()) throw PipelineError("stat_distance: block count mismatch");
  std::vector<double> out;
  for (std::size_t k = 0; k < a.means.size(); ++k) {
    if (a.means[k].size() != b.means[k].size())
      throw PipelineError("stat_distance: dimension mismatch in block " + std::to_string(k));
    double acc = 0.0;
    for (std::size_t i = 0; i < a.means[k].size(); ++i) {
      const double d = static_cast<double>(a.means[k][i]) - b.means[k][i];
      acc += d * d;
    }
    out.push_back(std::sqrt(acc));
  }
  return out;
}

EvalReport evaluate(const nn::GeneratorParams& gen, const audio::AudioClip& converted,
                    const audio::AudioClip& source, const audio::AudioClip& reference) {
  const audio::AudioClip conv16 = to_16k(converted);
  const audio::AudioClip src16 = to_16k(source);
  EvalReport r;
  const std::size_t n = std::min(conv16.size(), src16.size());
  if (n < static_cast<std::size_t>(loss::kStftSizes.front()))
    throw PipelineError("evaluate: clips must overlap by at least 2048 samples");
  const std::vector<double> x(src16.samples.begin(), src16.samples.begin() + static_cast<std::ptrdiff_t>(n));
  const std::vector<double> y(conv16.samples.begin(), conv16.samples.begin() + static_cast<std::ptrdiff_t>(n));
  r.stft_loss = loss::multiscale_stft_loss(x, y);
  const auto f0_conv = dsp::extract_f0(conv16, dsp::kF0Hop, 40.0, 1000.0);
  const auto f0_src = dsp::extract_f0(src16, dsp::kF0Hop, 40.0, 1000.0);
  r.f0_rmse_cents = f0_rmse_cents(f0_conv.values, f0_src.values, &r.voiced_frames);
  r.stat_distance = stat_distance(clip_speaker_stats(gen, conv16), clip_speaker_stats(gen, reference));
  return r;
}

EvalReport evaluate(const EvalRequest& req) {
  const nn::GeneratorParams gen = nn::load_generator(nn::load_checkpoint_file(req.checkpoint));
  return evaluate(gen, audio::read_wav(req.converted_wav), audio::read_wav(req.source_wav),
                  audio::read_wav(req.reference_wav));
}

std::string format_eval(const EvalReport& r) {
  std::ostringstream os;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", r.stft_loss);
  os << "stft_loss=" << buf;
  if (r.f0_rmse_cents) {
    std::snprintf(buf, sizeof buf, "%.3f", *r.f0_rmse_cents);
    os << " f0_rmse_cents=" << buf;
  } else {
    os << " f0_rmse_cents=absent";
  }
  os << " voiced_frames=" << r.voiced_frames;
  for (std::size_t k = 0; k < r.stat_distance.size(); ++k) {
    std::snprintf(buf, sizeof buf, "%.6g", r.stat_distance[k]);
    os << " stat_l2_" << k << '=' << buf;
  }
  return os.str();
}

}  // namespace hsvc::pipeline
