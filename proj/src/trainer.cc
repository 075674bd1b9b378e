#include "hsvc/trainer.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include "hsvc/dsp_features.h"

namespace hsvc::train {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw TrainError("config: " + key + " must be true or false, got '" + v + "'");
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<double> to_double(const std::vector<float>& v) { return {v.begin(), v.end()}; }

Tensor from_double(const std::vector<double>& v, std::vector<std::size_t> shape) {
  std::vector<float> f(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) f[i] = static_cast<float>(v[i]);
  return Tensor(std::move(shape), std::move(f));
}

AdamMoments zero_moments(const nn::NamedParams& params) {
  AdamMoments m;
  for (const auto& [name, var] : params) {
    m.m.emplace_back(var->value.shape(), 0.0f);
    m.v.emplace_back(var->value.shape(), 0.0f);
  }
  return m;
}

void clear_grads(const nn::NamedParams& params) {
  for (const auto& [name, var] : params) var->grad = Tensor();
}

void adam_update(const nn::NamedParams& params, AdamMoments& moments, double lr,
                 std::int64_t step, const TrainConfig& cfg) {
  double scale = 1.0;
  if (cfg.grad_clip > 0.0) {
    double sq = 0.0;
    for (const auto& [name, var] : params)
      for (float g : var->grad.values()) sq += static_cast<double>(g) * g;
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
  }
  const double t = static_cast<double>(step + 1);
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i].second->value;
    const Tensor& grad = params[i].second->grad;
    Tensor& m = moments.m[i];
    Tensor& v = moments.v[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grad.empty() ? 0.0 : scale * grad[j];
      const double mj = cfg.adam_beta1 * m[j] + (1.0 - cfg.adam_beta1) * g;
      const double vj = cfg.adam_beta2 * v[j] + (1.0 - cfg.adam_beta2) * g * g;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      p[j] = static_cast<float>(p[j] - lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.adam_eps));
    }
  }
  clear_grads(params);
}

loss::ScoreMaps score_values(const std::vector<nn::Var>& scores) {
  loss::ScoreMaps maps;
  for (const auto& s : scores) maps.push_back(to_double(s->value.values()));
  return maps;
}

void require_finite(double v, const char* term, std::int64_t step) {
  if (!std::isfinite(v))
    throw TrainError(std::string("non-finite ") + term + " at step " + std::to_string(step));
}

void append_moments(nn::Checkpoint& ckpt, const std::string& prefix, const nn::NamedParams& params,
                    const AdamMoments& moments) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& m = moments.m[i];
    const Tensor& v = moments.v[i];
    const std::size_t rows = m.dim(0);
    ckpt.tensors.emplace_back(prefix + ".m." + params[i].first,
                              Tensor({rows, m.size() / rows}, std::vector<float>(m.values())));
    ckpt.tensors.emplace_back(prefix + ".v." + params[i].first,
                              Tensor({rows, v.size() / rows}, std::vector<float>(v.values())));
  }
}

void restore_moments(const nn::Checkpoint& ckpt, const std::string& prefix,
                     const nn::NamedParams& params, AdamMoments& moments) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto [kind, dst] : {std::pair{".m.", &moments.m[i]}, std::pair{".v.", &moments.v[i]}}) {
      const Tensor& stored = ckpt.tensor(prefix + kind + params[i].first);
      if (stored.size() != dst->size())
        throw nn::CheckpointError("checkpoint: optimizer tensor size mismatch for " +
                                  params[i].first);
      std::copy(stored.values().begin(), stored.values().end(), dst->values().begin());
    }
  }
}

}  // namespace

// --- Config ---

TrainConfig TrainConfig::tiny() {
  TrainConfig c;
  c.arch = "tiny";
  c.batch_size = 2;
  c.segment_seconds = 0.25;
  c.total_steps = 2000;
  c.disc_start_step = 1000;
  c.checkpoint_every = 500;
  return c;
}

std::size_t TrainConfig::segment_samples() const {
  const double samples = segment_seconds * audio::kSampleRate;
  const auto frames = static_cast<std::size_t>(std::floor(samples / content::kLingHop));
  return frames * content::kLingHop;
}

nn::ArchConfig TrainConfig::arch_config() const { return nn::ArchConfig::preset(arch); }

std::vector<std::string> TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw TrainError("config: " + what); };
  if (batch_size < 1) fail("batch_size must be positive");
  if (!(segment_seconds > 0.0)) fail("segment_seconds must be positive");
  if (!(lr_initial > 0.0)) fail("lr_initial must be positive");
  if (lr_halving_interval < 1) fail("lr_halving_interval must be positive");
  if (disc_start_step < 0) fail("disc_start_step must be non-negative");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) fail("alpha and beta must be non-negative");
  if (total_steps < 0) fail("total_steps must be non-negative");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
    fail("adam betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be positive");
  if (checkpoint_every < 0) fail("checkpoint_every must be non-negative");
  if (!(grad_clip >= 0.0)) fail("grad_clip must be non-negative");
  nn::ArchConfig a;
  try {
    a = arch_config();
  } catch (const nn::ShapeError& e) {
    fail(e.what());
  }
  const std::size_t seg = segment_samples();
  if (seg < static_cast<std::size_t>(loss::kStftSizes.front()))
    fail("segment of " + std::to_string(seg) + " samples is shorter than the largest FFT size");

  std::vector<std::string> warnings;
  if (disc_start_step > total_steps)
    warnings.push_back("disc_start_step exceeds total_steps; the discriminator never trains");
  else if (seg < a.disc_min_length())
    fail("segment of " + std::to_string(seg) + " samples is shorter than the discriminator needs (" +
         std::to_string(a.disc_min_length()) + ")");
  return warnings;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "batch_size = " << batch_size << '\n'
     << "segment_seconds = " << format_double(segment_seconds) << '\n'
     << "lr_initial = " << format_double(lr_initial) << '\n'
     << "lr_halving_interval = " << lr_halving_interval << '\n'
     << "disc_start_step = " << disc_start_step << '\n'
     << "alpha = " << format_double(alpha) << '\n'
     << "beta = " << format_double(beta) << '\n'
     << "total_steps = " << total_steps << '\n'
     << "seed = " << seed << '\n'
     << "arch = " << arch << '\n'
     << "adam_beta1 = " << format_double(adam_beta1) << '\n'
     << "adam_beta2 = " << format_double(adam_beta2) << '\n'
     << "adam_eps = " << format_double(adam_eps) << '\n'
     << "checkpoint_every = " << checkpoint_every << '\n'
     << "grad_clip = " << format_double(grad_clip) << '\n'
     << "pseudo_encoder = " << (pseudo_encoder ? "true" : "false") << '\n'
     << "encoder_seed = " << encoder_seed << '\n';
  return os.str();
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw TrainError("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    try {
      if (key == "batch_size") c.batch_size = std::stoi(val);
      else if (key == "segment_seconds") c.segment_seconds = std::stod(val);
      else if (key == "lr_initial") c.lr_initial = std::stod(val);
      else if (key == "lr_halving_interval") c.lr_halving_interval = std::stoll(val);
      else if (key == "disc_start_step") c.disc_start_step = std::stoll(val);
      else if (key == "alpha") c.alpha = std::stod(val);
      else if (key == "beta") c.beta = std::stod(val);
      else if (key == "total_steps") c.total_steps = std::stoll(val);
      else if (key == "seed") c.seed = std::stoull(val);
      else if (key == "arch") c.arch = val;
      else if (key == "adam_beta1") c.adam_beta1 = std::stod(val);
      else if (key == "adam_beta2") c.adam_beta2 = std::stod(val);
      else if (key == "adam_eps") c.adam_eps = std::stod(val);
      else if (key == "checkpoint_every") c.checkpoint_every = std::stoll(val);
      else if (key == "grad_clip") c.grad_clip = std::stod(val);
      else if (key == "pseudo_encoder") c.pseudo_encoder = parse_bool(key, val);
      else if (key == "encoder_seed") c.encoder_seed = std::stoull(val);
      else throw TrainError("config: unknown key '" + key + "'");
    } catch (const std::logic_error&) {
      throw TrainError("config: invalid value for " + key + ": '" + val + "'");
    }
  }
  return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw TrainError("cannot open config " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return from_text(ss.str());
}

double lr_schedule(std::int64_t step, const TrainConfig& cfg) {
  if (step < 0) throw TrainError("lr_schedule: negative step");
  return cfg.lr_initial * std::pow(0.5, static_cast<double>(step / cfg.lr_halving_interval));
}

// --- State ---

TrainState init_state(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  nn::ModelParams p = nn::init_params(cfg.arch_config(), rng);
  TrainState s;
  s.gen_moments = zero_moments(p.generator.named());
  s.disc_moments = zero_moments(p.discriminator.named());
  s.generator = std::move(p.generator);
  s.discriminator = std::move(p.discriminator);
  s.rng = rng;
  return s;
}

nn::Checkpoint state_to_checkpoint(const TrainState& state, const TrainConfig& cfg) {
  nn::Checkpoint ckpt = nn::make_model_checkpoint(state.generator, state.discriminator);
  ckpt.meta["train.step"] = std::to_string(state.step);
  std::ostringstream rng;
  rng << state.rng;
  ckpt.meta["train.rng"] = rng.str();
  std::istringstream lines(cfg.to_text());
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find('=');
    ckpt.meta["config." + trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  append_moments(ckpt, "adam.gen", state.generator.named(), state.gen_moments);
  append_moments(ckpt, "adam.disc", state.discriminator.named(), state.disc_moments);
  return ckpt;
}

TrainState state_from_checkpoint(const nn::Checkpoint& ckpt) {
  TrainState s;
  s.generator = nn::load_generator(ckpt);
  s.discriminator = nn::make_discriminator(s.generator.arch);
  nn::restore_params(ckpt, s.discriminator.named());
  s.gen_moments = zero_moments(s.generator.named());
  s.disc_moments = zero_moments(s.discriminator.named());
  restore_moments(ckpt, "adam.gen", s.generator.named(), s.gen_moments);
  restore_moments(ckpt, "adam.disc", s.discriminator.named(), s.disc_moments);
  const auto step = ckpt.meta.find("train.step");
  const auto rng = ckpt.meta.find("train.rng");
  if (step == ckpt.meta.end() || rng == ckpt.meta.end())
    throw nn::CheckpointError("checkpoint: missing training state (step or rng)");
  try {
    s.step = std::stoll(step->second);
  } catch (const std::logic_error&) {
    throw nn::CheckpointError("checkpoint: corrupt step counter");
  }
  std::istringstream rs(rng->second);
  rs >> s.rng;
  if (!rs) throw nn::CheckpointError("checkpoint: corrupt rng state");
  return s;
}

TrainConfig config_from_checkpoint(const nn::Checkpoint& ckpt) {
  std::string text;
  for (const auto& [k, v] : ckpt.meta)
    if (k.rfind("config.", 0) == 0) text += k.substr(7) + " = " + v + "\n";
  return TrainConfig::from_text(text);
}

void save_state(const std::filesystem::path& path, const TrainState& state,
                const TrainConfig& cfg) {
  nn::save_checkpoint_file(path, state_to_checkpoint(state, cfg));
}

TrainState load_state(const std::filesystem::path& path) {
  return state_from_checkpoint(nn::load_checkpoint_file(path));
}

// --- Data ---

Utterance assemble_utterance(const std::string& id, std::vector<float> audio,
                             content::LinguisticFeatures ling, const std::vector<float>& f0_frames,
                             const std::vector<float>& loud_frames) {
  if (ling.frames() == 0) throw TrainError(id + ": empty linguistic features");
  if (f0_frames.empty() || loud_frames.empty()) throw TrainError(id + ": empty feature track");
  const std::size_t len = ling.frames() * content::kLingHop;
  Utterance u;
  u.id = id;
  u.audio = audio::slice_padded(audio, 0, len);
  u.ling = std::move(ling);
  u.f0 = dsp::linear_interpolate(f0_frames, len);
  const auto loud_db = dsp::linear_interpolate(loud_frames, len);
  u.loudness.resize(len);
  for (std::size_t t = 0; t < len; ++t) u.loudness[t] = dsp::loudness_condition(loud_db[t]);
  return u;
}

Utterance prepare_utterance(const std::string& id, const audio::AudioClip& clip,
                            std::uint64_t encoder_seed) {
  audio::AudioClip padded = clip.sample_rate == audio::kSampleRate
                                ? clip
                                : audio::resample(clip, audio::kSampleRate);
  padded.samples = audio::slice_padded(
      padded.samples, 0, content::frames_for(padded.samples.size()) * content::kLingHop);
  auto ling = content::pseudo_encode(padded, encoder_seed);
  const auto f0 = dsp::extract_f0(padded, dsp::kF0Hop, 40.0, 1000.0);
  const auto loud = dsp::a_weighted_loudness(padded);
  return assemble_utterance(id, std::move(padded.samples), std::move(ling), f0.values,
                            loud.values);
}

Dataset load_dataset(const audio::Manifest& manifest, const std::filesystem::path& features_dir,
                     const TrainConfig& cfg) {
  Dataset data;
  for (const auto& entry : manifest.select(audio::Split::kTrain)) {
    const std::string& id = entry.utterance_id;
    const auto ling_path = features_dir / (id + ".ling.bin");
    const auto f0_path = features_dir / (id + ".f0.bin");
    const auto loud_path = features_dir / (id + ".loud.bin");
    const bool have_all = std::filesystem::exists(ling_path) && std::filesystem::exists(f0_path) &&
                          std::filesystem::exists(loud_path);
    if (!have_all && !cfg.pseudo_encoder)
      throw MissingFeatureError(id, "missing feature file for utterance " + id + " in " +
                                        features_dir.string());
    audio::AudioClip clip = audio::read_wav(entry.path);
    if (clip.sample_rate != audio::kSampleRate) clip = audio::resample(clip, audio::kSampleRate);
    if (!have_all) {
      data.utterances.push_back(prepare_utterance(id, clip, cfg.encoder_seed));
      continue;
    }
    auto ling = content::load_features(ling_path);
    const Tensor f0 = content::load_tensor(f0_path);
    const Tensor loud = content::load_tensor(loud_path);
    data.utterances.push_back(assemble_utterance(id, std::move(clip.samples), std::move(ling),
                                                 f0.values(), loud.values()));
  }
  if (data.utterances.empty())
    throw audio::AudioError(audio::AudioError::Kind::kEmptyDataset, "no training utterances");
  return data;
}

TrainingBatch make_batch(const Dataset& data, const TrainConfig& cfg, std::mt19937_64& rng) {
  if (data.utterances.empty()) throw TrainError("make_batch: empty dataset");
  const std::size_t seg = cfg.segment_samples();
  const std::size_t frames = seg / content::kLingHop;
  const std::size_t dim = content::kLingDim;
  std::uniform_int_distribution<std::size_t> pick(0, data.utterances.size() - 1);
  TrainingBatch batch;
  for (int b = 0; b < cfg.batch_size; ++b) {
    const Utterance& u = data.utterances[pick(rng)];
    const std::size_t offset = audio::segment_offset(u.audio.size(), seg, rng);
    const std::size_t frame0 = offset / content::kLingHop;
    TrainingExample ex;
    ex.audio = Tensor({1, seg}, audio::slice_padded(u.audio, offset, seg));
    ex.ling = Tensor::matrix(dim, frames);
    for (std::size_t t = 0; t < frames && frame0 + t < u.ling.frames(); ++t)
      for (std::size_t d = 0; d < dim; ++d) ex.ling.at(d, t) = u.ling.values.at(frame0 + t, d);
    const auto f0 = audio::slice_padded(u.f0, offset, seg);
    ex.sine = dsp::harmonic_sine_excitation(f0, dsp::kNumHarmonics, audio::kSampleRate, rng).values;
    ex.loudness = Tensor({1, seg}, audio::slice_padded(u.loudness, offset, seg));
    batch.push_back(std::move(ex));
  }
  return batch;
}

// --- Optimization ---

loss::LossReport train_step(TrainState& state, const TrainingBatch& batch, const TrainConfig& cfg) {
  if (batch.empty()) throw TrainError("train_step: empty batch");
  const double lr = lr_schedule(state.step, cfg);
  const bool use_disc = state.step >= cfg.disc_start_step;
  const auto gen_params = state.generator.named();
  const auto disc_params = state.discriminator.named();
  const std::size_t hop = state.generator.arch.hop();
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  loss::LossReport report;
  std::vector<nn::Var> fakes;
  for (const auto& ex : batch) {
    const nn::Var target = nn::constant(ex.audio);
    const auto spk = nn::speaker_stream_forward(target, state.generator.speaker, hop);
    const nn::Var& pred = spk.predicted_ling;
    if (!pred->value.same_shape(ex.ling))
      throw TrainError("train_step: predicted linguistic features " + pred->value.shape_string() +
                       " do not match " + ex.ling.shape_string());
    std::vector<double> g_mse;
    const double l_mse =
        loss::linguistic_mse(to_double(ex.ling.values()), to_double(pred->value.values()), &g_mse);

    const nn::Var fake = nn::generator_forward(nn::constant(ex.ling), nn::constant(ex.sine),
                                               nn::constant(ex.loudness), spk.means,
                                               state.generator);
    std::vector<double> g_stft;
    const double l_stft = loss::multiscale_stft_loss(to_double(ex.audio.values()),
                                                     to_double(fake->value.values()), &g_stft);
    require_finite(l_stft, "l_stft", state.step);
    require_finite(l_mse, "l_mse", state.step);

    std::vector<std::pair<nn::Var, Tensor>> seeds;
    for (double& g : g_stft) g *= inv_b;
    for (double& g : g_mse) g *= cfg.beta * inv_b;
    seeds.emplace_back(fake, from_double(g_stft, fake->value.shape()));
    seeds.emplace_back(pred, from_double(g_mse, pred->value.shape()));

    double l_adv = 0.0;
    if (use_disc) {
      const auto scores = nn::discriminator_forward(fake, state.discriminator);
      loss::ScoreMaps g_adv;
      l_adv = loss::adversarial_loss(score_values(scores), &g_adv);
      require_finite(l_adv, "l_adv", state.step);
      for (std::size_t k = 0; k < scores.size(); ++k) {
        for (double& g : g_adv[k]) g *= cfg.alpha * inv_b;
        seeds.emplace_back(scores[k], from_double(g_adv[k], scores[k]->value.shape()));
      }
    }
    nn::backward(seeds);

    report.l_stft += l_stft * inv_b;
    report.l_mse += l_mse * inv_b;
    report.l_adv += l_adv * inv_b;
    fakes.push_back(nn::detach(fake));
  }
  report.l_total = loss::generator_total_loss(report.l_stft, report.l_adv, report.l_mse,
                                              cfg.alpha, cfg.beta);

  // The generator's adversarial term reached the discriminator leaves too.
  clear_grads(disc_params);
  if (use_disc) {
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto real = nn::discriminator_forward(nn::constant(batch[i].audio), state.discriminator);
      const auto fake = nn::discriminator_forward(fakes[i], state.discriminator);
      loss::ScoreMaps g_real, g_fake;
      const double l_disc =
          loss::discriminator_loss(score_values(real), score_values(fake), &g_real, &g_fake);
      require_finite(l_disc, "l_disc", state.step);
      std::vector<std::pair<nn::Var, Tensor>> seeds;
      for (std::size_t k = 0; k < real.size(); ++k) {
        for (double& g : g_real[k]) g *= inv_b;
        for (double& g : g_fake[k]) g *= inv_b;
        seeds.emplace_back(real[k], from_double(g_real[k], real[k]->value.shape()));
        seeds.emplace_back(fake[k], from_double(g_fake[k], fake[k]->value.shape()));
      }
      nn::backward(seeds);
      report.l_disc += l_disc * inv_b;
    }
  }

  adam_update(gen_params, state.gen_moments, lr, state.step, cfg);
  if (use_disc) adam_update(disc_params, state.disc_moments, lr, state.step, cfg);
  ++state.step;
  return report;
}

loss::LossReport evaluate_batch(const TrainState& state, const TrainingBatch& batch,
                                const TrainConfig& cfg) {
  if (batch.empty()) throw TrainError("evaluate_batch: empty batch");
  const bool use_disc = state.step >= cfg.disc_start_step;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  loss::LossReport report;
  for (const auto& ex : batch) {
    const nn::Var target = nn::constant(ex.audio);
    const auto spk =
        nn::speaker_stream_forward(target, state.generator.speaker, state.generator.arch.hop());
    report.l_mse += inv_b * loss::linguistic_mse(ex.ling, spk.predicted_ling->value);
    const nn::Var fake = nn::generator_forward(nn::constant(ex.ling), nn::constant(ex.sine),
                                               nn::constant(ex.loudness), spk.means,
                                               state.generator);
    report.l_stft += inv_b * loss::multiscale_stft_loss(to_double(ex.audio.values()),
                                                        to_double(fake->value.values()));
    if (use_disc) {
      report.l_adv += inv_b * loss::adversarial_loss(
                                  score_values(nn::discriminator_forward(fake, state.discriminator)));
      report.l_disc += inv_b * loss::discriminator_loss(
                                   score_values(nn::discriminator_forward(target, state.discriminator)),
                                   score_values(nn::discriminator_forward(fake, state.discriminator)));
    }
  }
  report.l_total = loss::generator_total_loss(report.l_stft, report.l_adv, report.l_mse,
                                              cfg.alpha, cfg.beta);
  return report;
}

// --- Loop ---

std::string metrics_header() { return "step,lr,l_stft,l_adv,l_mse,l_total,l_disc"; }

std::string metrics_line(std::int64_t step, double lr, const loss::LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g",
                static_cast<long long>(step), lr, r.l_stft, r.l_adv, r.l_mse, r.l_total, r.l_disc);
  return buf;
}

TrainLoopResult train_loop(const TrainConfig& cfg, const Dataset& data,
                           const TrainLoopOptions& opts) {
  cfg.validate();
  std::filesystem::create_directories(opts.output_dir);
  TrainState state = opts.resume_from ? load_state(*opts.resume_from) : init_state(cfg);
  if (!(state.generator.arch == cfg.arch_config()))
    throw TrainError("resume: checkpoint architecture does not match config arch " + cfg.arch);

  const auto metrics_path = opts.output_dir / "metrics.csv";
  const bool fresh = !opts.resume_from || !std::filesystem::exists(metrics_path);
  std::ofstream metrics(metrics_path, fresh ? std::ios::trunc : std::ios::app);
  if (!metrics) throw TrainError("cannot write " + metrics_path.string());
  if (fresh) metrics << metrics_header() << '\n';

  TrainLoopResult result;
  while (state.step < cfg.total_steps) {
    const std::int64_t step = state.step;
    const double lr = lr_schedule(step, cfg);
    const TrainingBatch batch = make_batch(data, cfg, state.rng);
    const loss::LossReport report = train_step(state, batch, cfg);
    result.reports.push_back(report);
    const std::string line = metrics_line(step, lr, report);
    metrics << line << '\n';
    metrics.flush();
    if (!metrics) throw TrainError("failed writing " + metrics_path.string());
    if (opts.on_metrics) opts.on_metrics(line);
    if (cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0) {
      const auto path = opts.output_dir / ("ckpt_" + std::to_string(state.step) + ".bin");
      save_state(path, state, cfg);
      result.checkpoints.push_back(path);
    }
  }
  result.final_checkpoint = opts.output_dir / "final.bin";
  save_state(result.final_checkpoint, state, cfg);
  return result;
}

OverfitResult overfit_single_clip(const audio::AudioClip& clip, TrainConfig cfg,
                                  std::int64_t steps) {
  cfg.disc_start_step = std::numeric_limits<std::int64_t>::max();
  cfg.total_steps = steps;
  cfg.validate();
  audio::AudioClip c16 =
      clip.sample_rate == audio::kSampleRate ? clip : audio::resample(clip, audio::kSampleRate);
  if (c16.size() < cfg.segment_samples())
    throw TrainError("overfit_single_clip: clip shorter than one segment");
  Dataset data;
  data.utterances.push_back(prepare_utterance("overfit", c16, cfg.encoder_seed));

  OverfitResult out{{}, {}, init_state(cfg)};
  for (std::int64_t i = 0; i < steps; ++i) {
    const TrainingBatch batch = make_batch(data, cfg, out.state.rng);
    const loss::LossReport r = train_step(out.state, batch, cfg);
    out.reports.push_back(r);
    out.stft_curve.push_back(r.l_stft);
  }
  return out;
}

}  // namespace hsvc::train
