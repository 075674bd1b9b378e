#include "hsvc/network.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "hsvc/content_encoder.h"

namespace hsvc::nn {

namespace {

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stoi(item));
  return out;
}

ConvParams conv_params(std::size_t out, std::size_t in_per_group, std::size_t kernel) {
  return {parameter(Tensor({out, in_per_group, kernel})), parameter(Tensor({out}))};
}

// Transposed conv weight layout: in x out x kernel.
ConvParams convt_params(std::size_t in, std::size_t out, std::size_t kernel) {
  return {parameter(Tensor({in, out, kernel})), parameter(Tensor({out}))};
}

DownBlockParams make_down_block(int in, int out, int factor, const std::vector<int>& dilations) {
  DownBlockParams b;
  b.factor = factor;
  b.dilations = dilations;
  b.conv = conv_params(static_cast<std::size_t>(out), static_cast<std::size_t>(in),
                       static_cast<std::size_t>(2 * factor));
  for (std::size_t j = 0; j < dilations.size(); ++j)
    b.res.push_back(conv_params(static_cast<std::size_t>(out), static_cast<std::size_t>(out), 3));
  return b;
}

ConditionStreamParams make_condition_stream(const ArchConfig& arch, int in_channels) {
  ConditionStreamParams p;
  const auto channels = arch.down_channels();
  const auto factors = arch.condition_factors();
  int in = in_channels;
  for (std::size_t j = 0; j < channels.size(); ++j) {
    p.blocks.push_back(make_down_block(in, channels[j], factors[j], arch.down_dilations));
    p.heads.push_back(conv_params(2 * static_cast<std::size_t>(channels[j]),
                                  static_cast<std::size_t>(channels[j]), 1));
    in = channels[j];
  }
  return p;
}

void name_conv(NamedParams& out, const std::string& prefix, const ConvParams& c) {
  out.emplace_back(prefix + ".weight", c.weight);
  out.emplace_back(prefix + ".bias", c.bias);
}

void name_down_block(NamedParams& out, const std::string& prefix, const DownBlockParams& b) {
  name_conv(out, prefix + ".conv", b.conv);
  for (std::size_t j = 0; j < b.res.size(); ++j)
    name_conv(out, prefix + ".res." + std::to_string(j) + ".conv", b.res[j]);
}

void name_condition_stream(NamedParams& out, const std::string& prefix,
                           const ConditionStreamParams& p) {
  for (std::size_t j = 0; j < p.blocks.size(); ++j)
    name_down_block(out, prefix + ".down." + std::to_string(j), p.blocks[j]);
  for (std::size_t j = 0; j < p.heads.size(); ++j)
    name_conv(out, prefix + ".head." + std::to_string(j), p.heads[j]);
}

void copy_values(const NamedParams& from, const NamedParams& to) {
  for (std::size_t i = 0; i < from.size(); ++i) to[i].second->value = from[i].second->value;
}

Var conv_same(const Var& x, const ConvParams& p, int dilation = 1) {
  const int k = static_cast<int>(p.weight->value.dim(2));
  const int pad = dilation * (k - 1) / 2;
  return conv1d(x, p.weight, p.bias, {1, dilation, pad, pad, 1});
}

void check(bool cond, const std::string& what) {
  if (!cond) throw ShapeError(what);
}

}  // namespace

// --- ArchConfig ---

ArchConfig ArchConfig::full() { return ArchConfig{}; }

ArchConfig ArchConfig::tiny() {
  ArchConfig a;
  a.name = "tiny";
  a.pre_channels = 48;
  a.up_channels = {36, 24, 12, 6, 3};
  a.disc_channels = {4, 8, 16, 32, 32, 32};
  a.disc_kernels = {15, 11, 11, 11, 11, 5, 3};
  a.disc_strides = {1, 4, 4, 4, 2, 1, 1};
  a.disc_groups = {1, 2, 4, 8, 8, 1, 1};
  return a;
}

ArchConfig ArchConfig::preset(const std::string& name) {
  if (name == "full") return full();
  if (name == "tiny") return tiny();
  throw ShapeError("unknown arch preset: " + name);
}

std::size_t ArchConfig::hop() const {
  std::size_t h = 1;
  for (int f : up_factors) h *= static_cast<std::size_t>(f);
  return h;
}

std::vector<int> ArchConfig::down_channels() const {
  return {up_channels.rbegin(), up_channels.rend()};
}

std::vector<int> ArchConfig::down_factors() const {
  return {up_factors.rbegin(), up_factors.rend()};
}

std::vector<int> ArchConfig::condition_factors() const {
  std::vector<int> f{1};
  const auto down = down_factors();
  f.insert(f.end(), down.begin(), down.end() - 1);
  return f;
}

std::size_t ArchConfig::disc_min_length() const {
  std::size_t stride = 1;
  for (int s : disc_strides) stride *= static_cast<std::size_t>(s);
  std::size_t pool = 1;
  for (int i = 1; i < disc_scales; ++i) pool *= static_cast<std::size_t>(disc_pool);
  return 4 * stride * pool;
}

void ArchConfig::validate() const {
  check(ling_dim > 0 && pre_channels > 0, "arch: ling_dim and pre_channels must be positive");
  check(!up_channels.empty() && up_channels.size() == up_factors.size(),
        "arch: up_channels and up_factors must have equal, non-zero length");
  for (int c : up_channels) check(c > 0, "arch: channels must be positive");
  for (int f : up_factors) check(f > 0, "arch: factors must be positive");
  for (int d : up_dilations) check(d > 0, "arch: dilations must be positive");
  for (int d : down_dilations) check(d > 0, "arch: dilations must be positive");
  check(hop() == content::kLingHop, "arch: up-sampling factors must multiply to " +
                                        std::to_string(content::kLingHop));
  check(sine_channels > 0 && loudness_channels > 0, "arch: condition channels must be positive");
  check(disc_scales == 3 && disc_pool >= 1, "arch: the discriminator has exactly 3 scales");
  check(disc_channels.size() == 6 && disc_kernels.size() == 7 && disc_strides.size() == 7 &&
            disc_groups.size() == 7,
        "arch: discriminator tables must describe 7 layers");
  for (std::size_t l = 0; l < 7; ++l) {
    const int in = l == 0 ? 1 : disc_channels[l - 1];
    const int out = l < 6 ? disc_channels[l] : 1;
    check(disc_kernels[l] > 0 && disc_strides[l] > 0 && disc_groups[l] > 0,
          "arch: discriminator kernel/stride/groups must be positive");
    check(in % disc_groups[l] == 0 && out % disc_groups[l] == 0,
          "arch: discriminator groups must divide layer " + std::to_string(l) + " channels");
  }
}

std::string ArchConfig::to_text() const {
  std::ostringstream os;
  os << "arch.name=" << name << '\n'
     << "arch.ling_dim=" << ling_dim << '\n'
     << "arch.pre_channels=" << pre_channels << '\n'
     << "arch.up_channels=" << join(up_channels) << '\n'
     << "arch.up_factors=" << join(up_factors) << '\n'
     << "arch.up_dilations=" << join(up_dilations) << '\n'
     << "arch.down_dilations=" << join(down_dilations) << '\n'
     << "arch.sine_channels=" << sine_channels << '\n'
     << "arch.loudness_channels=" << loudness_channels << '\n'
     << "arch.disc_scales=" << disc_scales << '\n'
     << "arch.disc_pool=" << disc_pool << '\n'
     << "arch.disc_channels=" << join(disc_channels) << '\n'
     << "arch.disc_kernels=" << join(disc_kernels) << '\n'
     << "arch.disc_strides=" << join(disc_strides) << '\n'
     << "arch.disc_groups=" << join(disc_groups) << '\n';
  return os.str();
}

ArchConfig ArchConfig::from_text(const std::string& text) {
  ArchConfig a;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "arch.name") a.name = val;
    else if (key == "arch.ling_dim") a.ling_dim = std::stoi(val);
    else if (key == "arch.pre_channels") a.pre_channels = std::stoi(val);
    else if (key == "arch.up_channels") a.up_channels = split_ints(val);
    else if (key == "arch.up_factors") a.up_factors = split_ints(val);
    else if (key == "arch.up_dilations") a.up_dilations = split_ints(val);
    else if (key == "arch.down_dilations") a.down_dilations = split_ints(val);
    else if (key == "arch.sine_channels") a.sine_channels = std::stoi(val);
    else if (key == "arch.loudness_channels") a.loudness_channels = std::stoi(val);
    else if (key == "arch.disc_scales") a.disc_scales = std::stoi(val);
    else if (key == "arch.disc_pool") a.disc_pool = std::stoi(val);
    else if (key == "arch.disc_channels") a.disc_channels = split_ints(val);
    else if (key == "arch.disc_kernels") a.disc_kernels = split_ints(val);
    else if (key == "arch.disc_strides") a.disc_strides = split_ints(val);
    else if (key == "arch.disc_groups") a.disc_groups = split_ints(val);
  }
  a.validate();
  return a;
}

// --- Parameter structures ---

GeneratorParams make_generator(const ArchConfig& arch) {
  arch.validate();
  GeneratorParams g;
  g.arch = arch;
  const auto ling = static_cast<std::size_t>(arch.ling_dim);
  g.pre = conv_params(static_cast<std::size_t>(arch.pre_channels), ling, 3);
  int in = arch.pre_channels;
  for (std::size_t k = 0; k < arch.blocks(); ++k) {
    UpBlockParams b;
    b.factor = arch.up_factors[k];
    b.dilations = arch.up_dilations;
    const auto out = static_cast<std::size_t>(arch.up_channels[k]);
    b.upconv = convt_params(static_cast<std::size_t>(in), out, 2 * static_cast<std::size_t>(b.factor));
    for (std::size_t j = 0; j < b.dilations.size(); ++j) b.res.push_back(conv_params(out, out, 3));
    g.up.push_back(std::move(b));
    in = arch.up_channels[k];
  }
  g.post = conv_params(1, static_cast<std::size_t>(in), 3);

  const auto down_ch = arch.down_channels();
  const auto down_f = arch.down_factors();
  int sin = 1;
  for (std::size_t k = 0; k < down_ch.size(); ++k) {
    g.speaker.blocks.push_back(make_down_block(sin, down_ch[k], down_f[k], arch.down_dilations));
    sin = down_ch[k];
  }
  g.speaker.ling_head = conv_params(ling, static_cast<std::size_t>(sin), 3);
  g.sine = make_condition_stream(arch, arch.sine_channels);
  g.loudness = make_condition_stream(arch, arch.loudness_channels);
  return g;
}

DiscriminatorParams make_discriminator(const ArchConfig& arch) {
  arch.validate();
  DiscriminatorParams d;
  d.arch = arch;
  for (int s = 0; s < arch.disc_scales; ++s) {
    std::vector<DiscLayer> layers;
    for (std::size_t l = 0; l < 7; ++l) {
      const int in = l == 0 ? 1 : arch.disc_channels[l - 1];
      const int out = l < 6 ? arch.disc_channels[l] : 1;
      const int k = arch.disc_kernels[l];
      const int groups = arch.disc_groups[l];
      DiscLayer layer;
      layer.conv = conv_params(static_cast<std::size_t>(out), static_cast<std::size_t>(in / groups),
                               static_cast<std::size_t>(k));
      layer.spec = {arch.disc_strides[l], 1, (k - 1) / 2, (k - 1) / 2, groups};
      layer.activation = l < 6;
      layers.push_back(std::move(layer));
    }
    d.scales.push_back(std::move(layers));
  }
  return d;
}

NamedParams GeneratorParams::named() const {
  NamedParams out;
  name_conv(out, "gen.pre", pre);
  for (std::size_t k = 0; k < up.size(); ++k) {
    const std::string prefix = "gen.up." + std::to_string(k);
    name_conv(out, prefix + ".upconv", up[k].upconv);
    for (std::size_t j = 0; j < up[k].res.size(); ++j)
      name_conv(out, prefix + ".res." + std::to_string(j) + ".conv", up[k].res[j]);
  }
  name_conv(out, "gen.post", post);
  for (std::size_t k = 0; k < speaker.blocks.size(); ++k)
    name_down_block(out, "gen.spk.down." + std::to_string(k), speaker.blocks[k]);
  name_conv(out, "gen.spk.ling_head", speaker.ling_head);
  name_condition_stream(out, "gen.sine", sine);
  name_condition_stream(out, "gen.loud", loudness);
  return out;
}

GeneratorParams GeneratorParams::clone() const {
  GeneratorParams g = make_generator(arch);
  copy_values(named(), g.named());
  return g;
}

NamedParams DiscriminatorParams::named() const {
  NamedParams out;
  for (std::size_t s = 0; s < scales.size(); ++s)
    for (std::size_t l = 0; l < scales[s].size(); ++l)
      name_conv(out, "disc." + std::to_string(s) + ".layer." + std::to_string(l),
                scales[s][l].conv);
  return out;
}

DiscriminatorParams DiscriminatorParams::clone() const {
  DiscriminatorParams d = make_discriminator(arch);
  copy_values(named(), d.named());
  return d;
}

namespace {

// Init scale for FiLM heads and residual-branch convs.
constexpr double kFilmHeadInitGain = 0.1;
constexpr double kResidualInitGain = 0.3;

std::size_t fan_in(const std::string& name, const Tensor& w) {
  if (name.find(".upconv.") != std::string::npos) {
    // in x out x (2 * stride): each output sample sees in * 2 taps.
    return w.dim(0) * 2;
  }
  return w.dim(1) * w.dim(2);
}

void init_named(const NamedParams& params, std::mt19937_64& rng) {
  for (const auto& [name, var] : params) {
    Tensor& v = var->value;
    if (v.rank() == 3) {
      double gain = 1.0;
      if (name.find(".head.") != std::string::npos) gain = kFilmHeadInitGain;
      else if (name.find(".res.") != std::string::npos) gain = kResidualInitGain;
      const double std_dev = gain / std::sqrt(static_cast<double>(fan_in(name, v)));
      std::normal_distribution<double> normal(0.0, std_dev);
      for (auto& x : v.values()) x = static_cast<float>(normal(rng));
    } else {
      v.fill(0.0f);
    }
  }
}

}  // namespace

ModelParams init_params(const ArchConfig& arch, std::mt19937_64& rng) {
  ModelParams p{make_generator(arch), make_discriminator(arch)};
  init_named(p.generator.named(), rng);
  init_named(p.discriminator.named(), rng);
  return p;
}

std::size_t parameter_count(const NamedParams& params) {
  std::size_t n = 0;
  for (const auto& [name, var] : params) n += var->value.size();
  return n;
}

// --- Plain-tensor primitives ---

Tensor film_modulate(const Tensor& u, const FiLMOutput& sine, const FiLMOutput& loudness) {
  for (const Tensor* t : {&sine.gamma, &sine.xi, &loudness.gamma, &loudness.xi})
    check(t->same_shape(u), "film_modulate: shape mismatch " + t->shape_string() + " vs " +
                                u.shape_string());
  Tensor out(u.shape());
  for (std::size_t i = 0; i < u.size(); ++i)
    out[i] = (sine.gamma[i] + loudness.gamma[i]) * u[i] + sine.xi[i] + loudness.xi[i];
  return out;
}

MeanNormalized instance_mean_normalize(const Tensor& h) {
  check(h.rank() == 2 && h.dim(1) >= 1, "instance_mean_normalize: expected C x T, T >= 1");
  Var mu = time_mean(constant(h));
  MeanNormalized out{h, std::vector<float>(mu->value.values())};
  for (std::size_t c = 0; c < h.dim(0); ++c) {
    float* r = out.normalized.row(c);
    for (std::size_t t = 0; t < h.dim(1); ++t) r[t] -= out.mean[c];
  }
  return out;
}

Tensor adain_mean(const Tensor& h, std::span<const float> mu_target) {
  check(h.rank() == 2 && mu_target.size() == h.dim(0),
        "adain_mean: target dimension " + std::to_string(mu_target.size()) +
            " does not match channels of " + h.shape_string());
  Tensor column = Tensor::matrix(h.dim(0), 1);
  std::copy(mu_target.begin(), mu_target.end(), column.data());
  return adain_mean(constant(h), constant(std::move(column)))->value;
}

// --- Differentiable forwards ---

Var adain_mean(const Var& h, const Var& mu_target) {
  check(mu_target->value.size() == h->value.dim(0),
        "adain_mean: target dimension does not match channels");
  return add_column(sub_column(h, time_mean(h)), mu_target);
}

Var upsample_block(const Var& h, const FiLMVars& sine, const FiLMVars& loudness,
                   const Var& mu_target, const UpBlockParams& params) {
  const int f = params.factor;
  const std::size_t out_len = h->value.dim(1) * static_cast<std::size_t>(f);
  const std::size_t out_ch = params.upconv.weight->value.dim(1);
  for (const Var* v : {&sine.gamma, &sine.xi, &loudness.gamma, &loudness.xi})
    check((*v)->value.rank() == 2 && (*v)->value.dim(0) == out_ch &&
              (*v)->value.dim(1) == out_len,
          "upsample_block: condition " + (*v)->value.shape_string() + " does not match output " +
              std::to_string(out_ch) + " x " + std::to_string(out_len));
  check(mu_target->value.size() == out_ch, "upsample_block: speaker mean dimension mismatch");

  Var x = leaky_relu(h, kLeakySlope);
  x = conv_transpose1d(x, params.upconv.weight, params.upconv.bias, f, f / 2, f - f / 2);
  for (std::size_t j = 0; j < params.res.size(); ++j) {
    Var y = film(x, sine.gamma, sine.xi, loudness.gamma, loudness.xi);
    y = leaky_relu(y, kLeakySlope);
    y = conv_same(y, params.res[j], params.dilations[j]);
    x = add(x, y);
  }
  return adain_mean(x, mu_target);
}

Var downsample_block(const Var& h, const DownBlockParams& params) {
  const int f = params.factor;
  check(h->value.rank() == 2 && h->value.dim(1) % static_cast<std::size_t>(f) == 0,
        "downsample_block: length " + std::to_string(h->value.cols()) +
            " not divisible by factor " + std::to_string(f));
  Var x = conv1d(h, params.conv.weight, params.conv.bias, {f, 1, f / 2, f - f / 2, 1});
  for (std::size_t j = 0; j < params.res.size(); ++j) {
    Var y = leaky_relu(x, kLeakySlope);
    y = conv_same(y, params.res[j], params.dilations[j]);
    x = add(x, y);
  }
  return x;
}

SpeakerStreamOutput speaker_stream_forward(const Var& audio, const SpeakerStreamParams& params,
                                           std::size_t hop) {
  check(audio->value.rank() == 2 && audio->value.dim(0) == 1,
        "speaker_stream_forward: expected 1 x T audio");
  check(audio->value.dim(1) > 0 && audio->value.dim(1) % hop == 0,
        "speaker_stream_forward: length " + std::to_string(audio->value.cols()) +
            " not a positive multiple of " + std::to_string(hop));
  SpeakerStreamOutput out;
  Var h = audio;
  for (const auto& block : params.blocks) {
    h = downsample_block(h, block);
    Var mu = time_mean(h);
    out.means.push_back(mu);
    h = sub_column(h, mu);
  }
  out.predicted_ling = conv_same(h, params.ling_head);
  return out;
}

std::vector<FiLMVars> condition_stream_forward(const Var& signal,
                                               const ConditionStreamParams& params,
                                               std::size_t hop) {
  check(signal->value.rank() == 2, "condition_stream_forward: expected C x T signal");
  check(signal->value.dim(1) > 0 && signal->value.dim(1) % hop == 0,
        "condition_stream_forward: length " + std::to_string(signal->value.cols()) +
            " not a positive multiple of " + std::to_string(hop));
  check(!params.blocks.empty() &&
            signal->value.dim(0) == params.blocks.front().conv.weight->value.dim(1),
        "condition_stream_forward: channel mismatch");
  std::vector<FiLMVars> taps;
  Var h = signal;
  for (std::size_t j = 0; j < params.blocks.size(); ++j) {
    h = downsample_block(h, params.blocks[j]);
    Var both = conv1d(h, params.heads[j].weight, params.heads[j].bias, {});
    const std::size_t ch = h->value.dim(0);
    taps.push_back({slice_rows(both, 0, ch), slice_rows(both, ch, 2 * ch)});
  }
  std::reverse(taps.begin(), taps.end());
  return taps;
}

Var generator_forward(const Var& ling, const Var& sine, const Var& loudness,
                      const std::vector<Var>& stats, const GeneratorParams& params) {
  const ArchConfig& arch = params.arch;
  const std::size_t hop = arch.hop();
  check(ling->value.rank() == 2 && ling->value.dim(0) == static_cast<std::size_t>(arch.ling_dim),
        "generator_forward: linguistic features must be " + std::to_string(arch.ling_dim) +
            " x T, got " + ling->value.shape_string());
  const std::size_t audio_len = ling->value.dim(1) * hop;
  check(sine->value.rank() == 2 && sine->value.dim(1) == audio_len,
        "generator_forward: sine excitation length must be " + std::to_string(audio_len));
  check(loudness->value.rank() == 2 && loudness->value.dim(1) == audio_len,
        "generator_forward: loudness length must be " + std::to_string(audio_len));
  check(stats.size() == params.up.size(), "generator_forward: expected " +
                                              std::to_string(params.up.size()) + " stat vectors");

  const auto sine_films = condition_stream_forward(sine, params.sine, hop);
  const auto loud_films = condition_stream_forward(loudness, params.loudness, hop);
  Var h = conv_same(ling, params.pre);
  const std::size_t n = params.up.size();
  for (std::size_t k = 0; k < n; ++k)
    h = upsample_block(h, sine_films[k], loud_films[k], stats[n - 1 - k], params.up[k]);
  h = leaky_relu(h, kLeakySlope);
  h = conv_same(h, params.post);
  return tanh(h);
}

std::vector<Var> discriminator_forward(const Var& audio, const DiscriminatorParams& params) {
  check(audio->value.rank() == 2 && audio->value.dim(0) == 1,
        "discriminator_forward: expected 1 x T audio");
  const std::size_t min_len = params.arch.disc_min_length();
  check(audio->value.dim(1) >= min_len, "discriminator_forward: input shorter than " +
                                            std::to_string(min_len) + " samples");
  std::vector<Var> scores;
  Var x = audio;
  for (std::size_t s = 0; s < params.scales.size(); ++s) {
    if (s > 0) x = avg_pool(x, params.arch.disc_pool);
    Var h = x;
    for (const auto& layer : params.scales[s]) {
      h = conv1d(h, layer.conv.weight, layer.conv.bias, layer.spec);
      if (layer.activation) h = leaky_relu(h, kLeakySlope);
    }
    scores.push_back(h);
  }
  return scores;
}

// --- Speaker stats ---

void SpeakerStats::validate(const ArchConfig& arch) const {
  const auto dims = arch.down_channels();
  check(means.size() == dims.size(), "speaker stats: expected " + std::to_string(dims.size()) +
                                         " vectors, got " + std::to_string(means.size()));
  for (std::size_t k = 0; k < dims.size(); ++k) {
    check(means[k].size() == static_cast<std::size_t>(dims[k]),
          "speaker stats: vector " + std::to_string(k) + " must have " +
              std::to_string(dims[k]) + " entries");
    for (float v : means[k]) check(std::isfinite(v), "speaker stats: non-finite value");
  }
}

SpeakerStats to_speaker_stats(const SpeakerStreamOutput& out) {
  SpeakerStats s;
  for (const auto& m : out.means) s.means.push_back(m->value.values());
  return s;
}

std::vector<Var> stats_vars(const SpeakerStats& stats) {
  std::vector<Var> out;
  for (const auto& m : stats.means)
    out.push_back(constant(Tensor({m.size(), 1}, std::vector<float>(m))));
  return out;
}

Var audio_var(std::span<const float> samples) {
  return constant(Tensor({1, samples.size()}, std::vector<float>(samples.begin(), samples.end())));
}

SpeakerStats extract_speaker_stats(const GeneratorParams& params, std::span<const float> audio) {
  return to_speaker_stats(speaker_stream_forward(audio_var(audio), params.speaker,
                                                 params.arch.hop()));
}

// --- Checkpoint container ---

namespace {

constexpr char kCheckpointMagic[8] = {'H', 'S', 'V', 'C', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kCheckpointVersion = 1;

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

void put_u64(std::string& out, std::uint64_t v) {
  char b[8];
  std::memcpy(b, &v, 8);
  out.append(b, 8);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint: truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointError("checkpoint: missing tensor " + name);
}

bool Checkpoint::has_tensor(const std::string& name) const {
  return std::any_of(tensors.begin(), tensors.end(),
                     [&](const auto& p) { return p.first == name; });
}

std::string encode_checkpoint(const Checkpoint& ckpt) {
  std::string out(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  std::string meta;
  for (const auto& [k, v] : ckpt.meta) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw CheckpointError("checkpoint: metadata keys/values must be single-line");
    meta += k + "=" + v + "\n";
  }
  put_u64(out, meta.size());
  out += meta;
  put_u32(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    const std::string blob = content::encode_tensor(t);
    put_u64(out, blob.size());
    out += blob;
  }
  return out;
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw CheckpointError("checkpoint: bad magic");
  Reader r(bytes);
  r.str(8);
  if (r.u32() != kCheckpointVersion) throw CheckpointError("checkpoint: unsupported version");
  Checkpoint ckpt;
  const std::string meta = r.str(r.u64());
  std::stringstream ss(meta);
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw CheckpointError("checkpoint: bad metadata line");
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    const std::string blob = r.str(r.u64());
    ckpt.tensors.emplace_back(std::move(name), content::decode_tensor(blob, "checkpoint"));
  }
  if (!r.done()) throw CheckpointError("checkpoint: trailing bytes");
  return ckpt;
}

void save_checkpoint_file(const std::filesystem::path& path, const Checkpoint& ckpt) {
  content::write_file_atomic(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return decode_checkpoint(ss.str());
}

void append_params(Checkpoint& ckpt, const NamedParams& params) {
  for (const auto& [name, var] : params) {
    const Tensor& v = var->value;
    // Stored as rows x (product of remaining dims).
    ckpt.tensors.emplace_back(name, Tensor({v.dim(0), v.size() / v.dim(0)},
                                           std::vector<float>(v.values())));
  }
}

void restore_params(const Checkpoint& ckpt, const NamedParams& params) {
  for (const auto& [name, var] : params) {
    const Tensor& stored = ckpt.tensor(name);
    Tensor& dst = var->value;
    if (stored.size() != dst.size() || stored.rows() != dst.dim(0))
      throw CheckpointError("checkpoint: tensor " + name + " has shape " +
                            stored.shape_string() + ", expected " + dst.shape_string());
    std::copy(stored.values().begin(), stored.values().end(), dst.values().begin());
  }
}

Checkpoint make_model_checkpoint(const GeneratorParams& gen, const DiscriminatorParams& disc) {
  Checkpoint ckpt;
  std::stringstream ss(gen.arch.to_text());
  std::string line;
  while (std::getline(ss, line)) {
    const auto eq = line.find('=');
    ckpt.meta[line.substr(0, eq)] = line.substr(eq + 1);
  }
  append_params(ckpt, gen.named());
  append_params(ckpt, disc.named());
  return ckpt;
}

GeneratorParams load_generator(const Checkpoint& ckpt) {
  std::string arch_text;
  for (const auto& [k, v] : ckpt.meta)
    if (k.rfind("arch.", 0) == 0) arch_text += k + "=" + v + "\n";
  if (arch_text.empty()) throw CheckpointError("checkpoint: missing architecture echo");
  GeneratorParams gen = make_generator(ArchConfig::from_text(arch_text));
  restore_params(ckpt, gen.named());
  return gen;
}

}  // namespace hsvc::nn
