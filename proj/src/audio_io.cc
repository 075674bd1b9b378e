#include "hsvc/audio_io.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>

namespace hsvc::audio {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "WAV and tensor I/O assume a little-endian host");

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t pos) {
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  return v;
}

template <typename T>
void append_le(std::string& out, T v) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &v, sizeof(T));
  out.append(bytes, sizeof(T));
}

}  // namespace

AudioClip read_wav(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw AudioError(AudioError::Kind::kMissingFile,
                     "cannot open audio file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)),
                        std::istreambuf_iterator<char>());

  auto malformed = [&](const std::string& why) {
    return AudioError(AudioError::Kind::kMalformedHeader,
                      path.string() + ": " + why);
  };
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0)
    throw malformed("not a RIFF/WAVE file");

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  const char* data = nullptr;
  std::size_t data_bytes = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t chunk_size = read_le<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (chunk_size < 16 || body + chunk_size > buf.size())
        throw malformed("truncated fmt chunk");
      format = read_le<std::uint16_t>(buf, body);
      channels = read_le<std::uint16_t>(buf, body + 2);
      rate = read_le<std::uint32_t>(buf, body + 4);
      bits = read_le<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) {
        if (chunk_size < 40) throw malformed("truncated extensible fmt chunk");
        // First two bytes of the subformat GUID carry the base format tag.
        format = read_le<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data = buf.data() + body;
      // Some writers leave the data size at 0 or 0xFFFFFFFF for streams.
      data_bytes = std::min<std::size_t>(chunk_size, buf.size() - body);
    }
    pos = body + chunk_size + (chunk_size & 1u);
  }
  if (!have_fmt) throw malformed("missing fmt chunk");
  if (data == nullptr) throw malformed("missing data chunk");
  if (channels == 0 || rate == 0) throw malformed("zero channels or sample rate");

  const bool pcm16 = format == kFormatPcm && bits == 16;
  const bool f32 = format == kFormatFloat && bits == 32;
  if (!pcm16 && !f32)
    throw AudioError(AudioError::Kind::kUnsupportedEncoding,
                     path.string() + ": unsupported encoding (format " +
                         std::to_string(format) + ", " + std::to_string(bits) +
                         " bits)");

  const std::size_t bytes_per_sample = bits / 8;
  const std::size_t frame_bytes = bytes_per_sample * channels;
  const std::size_t frames = data_bytes / frame_bytes;

  AudioClip clip;
  clip.sample_rate = static_cast<int>(rate);
  clip.samples.resize(frames);
  for (std::size_t i = 0; i < frames; ++i) {
    double acc = 0.0;
    const char* frame = data + i * frame_bytes;
    for (std::size_t c = 0; c < channels; ++c) {
      if (pcm16) {
        std::int16_t s;
        std::memcpy(&s, frame + c * 2, 2);
        acc += s / 32768.0;
      } else {
        float s;
        std::memcpy(&s, frame + c * 4, 4);
        if (!std::isfinite(s)) throw malformed("non-finite float sample");
        acc += std::clamp(s, -1.0f, 1.0f);
      }
    }
    clip.samples[i] = static_cast<float>(acc / channels);
  }
  return clip;
}

void write_wav(const fs::path& path, const AudioClip& clip) {
  if (clip.sample_rate <= 0)
    throw AudioError(AudioError::Kind::kInvalidArgument, "sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(clip.samples.size() * 2);

  std::string out;
  out.reserve(44 + data_bytes);
  out.append("RIFF");
  append_le<std::uint32_t>(out, 36 + data_bytes);
  out.append("WAVEfmt ");
  append_le<std::uint32_t>(out, 16);
  append_le<std::uint16_t>(out, kFormatPcm);
  append_le<std::uint16_t>(out, 1);
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate));
  append_le<std::uint32_t>(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
  append_le<std::uint16_t>(out, 2);
  append_le<std::uint16_t>(out, 16);
  out.append("data");
  append_le<std::uint32_t>(out, data_bytes);
  for (float s : clip.samples) {
    const double clamped = std::clamp(static_cast<double>(s), -1.0, 1.0);
    const double q = std::clamp(std::round(clamped * 32768.0), -32768.0, 32767.0);
    append_le<std::int16_t>(out, static_cast<std::int16_t>(q));
  }

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f)
    throw AudioError(AudioError::Kind::kUnwritable, "cannot write " + path.string());
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!f)
    throw AudioError(AudioError::Kind::kUnwritable, "write failed: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  if (target_rate <= 0 || clip.sample_rate <= 0)
    throw AudioError(AudioError::Kind::kInvalidArgument, "sample rates must be positive");
  if (target_rate == clip.sample_rate) return clip;

  const auto src = static_cast<std::uint64_t>(clip.sample_rate);
  const auto dst = static_cast<std::uint64_t>(target_rate);
  const std::size_t in_len = clip.samples.size();
  const std::size_t out_len = static_cast<std::size_t>((in_len * dst + src / 2) / src);

  // Cutoff relative to the input Nyquist; 0.95 leaves room for the
  // transition band of the Kaiser window.
  const double ratio = static_cast<double>(dst) / static_cast<double>(src);
  const double cutoff = 0.95 * std::min(1.0, ratio);
  constexpr double kZeroCrossings = 32.0;
  constexpr double kBeta = 8.6;
  const double half_width = kZeroCrossings / cutoff;
  const double i0_beta = std::cyl_bessel_i(0.0, kBeta);

  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);
  for (std::size_t n = 0; n < out_len; ++n) {
    const double t = static_cast<double>(n) / ratio;
    const auto lo = static_cast<long>(std::ceil(t - half_width));
    const auto hi = static_cast<long>(std::floor(t + half_width));
    double acc = 0.0;
    for (long k = std::max(lo, 0L); k <= hi && k < static_cast<long>(in_len); ++k) {
      const double d = t - static_cast<double>(k);
      const double r = d / half_width;
      const double window = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
      const double x = std::numbers::pi * cutoff * d;
      const double sinc = d == 0.0 ? 1.0 : std::sin(x) / x;
      acc += clip.samples[static_cast<std::size_t>(k)] * cutoff * sinc * window;
    }
    out.samples[n] = static_cast<float>(std::clamp(acc, -1.0, 1.0));
  }
  return out;
}

const char* split_name(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kValid: return "valid";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& name) {
  if (name == "train") return Split::kTrain;
  if (name == "valid") return Split::kValid;
  if (name == "test") return Split::kTest;
  throw AudioError(AudioError::Kind::kInvalidArgument, "unknown split tag: " + name);
}

Manifest::Manifest(std::vector<ManifestEntry> entries) : entries_(std::move(entries)) {
  std::map<std::string, int> seen;
  for (const auto& e : entries_)
    if (seen[e.utterance_id]++ > 0)
      throw AudioError(AudioError::Kind::kInvalidArgument,
                       "duplicate utterance id: " + e.utterance_id);
}

std::vector<ManifestEntry> Manifest::select(Split split) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries_)
    if (e.split == split) out.push_back(e);
  return out;
}

void Manifest::save(const fs::path& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw AudioError(AudioError::Kind::kUnwritable, "cannot write " + path.string());
  for (const auto& e : entries_)
    f << e.utterance_id << '\t' << e.path.string() << '\t' << e.singer_id << '\t'
      << split_name(e.split) << '\n';
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw AudioError(AudioError::Kind::kMissingFile, "cannot open " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) fields.push_back(field);
    if (fields.size() != 4)
      throw AudioError(AudioError::Kind::kMalformedHeader, "bad manifest line: " + line);
    entries.push_back({fields[0], fields[1], fields[2], parse_split(fields[3])});
  }
  return Manifest(std::move(entries));
}

std::string utterance_id_for(const fs::path& root, const fs::path& file) {
  fs::path rel = fs::relative(file, root);
  rel.replace_extension();
  std::string id = rel.generic_string();
  std::replace(id.begin(), id.end(), '/', '_');
  return id;
}

std::vector<fs::path> list_wavs(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::is_directory(root)) return out;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".wav") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

Manifest build_manifest(const fs::path& dataset_dir, const SplitRatios& ratios,
                        std::uint64_t seed) {
  if (ratios.train < 0 || ratios.valid < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.valid + ratios.test - 1.0) > 1e-9)
    throw AudioError(AudioError::Kind::kInvalidArgument,
                     "split ratios must be non-negative and sum to 1");

  std::map<std::string, std::vector<fs::path>> by_singer;
  for (const auto& wav : list_wavs(dataset_dir)) {
    const fs::path rel = fs::relative(wav, dataset_dir);
    const std::string singer =
        rel.has_parent_path() ? rel.begin()->string() : std::string("default");
    by_singer[singer].push_back(wav);
  }
  if (by_singer.empty())
    throw AudioError(AudioError::Kind::kEmptyDataset,
                     "no WAV files under " + dataset_dir.string());

  std::mt19937_64 rng(seed);
  std::vector<ManifestEntry> entries;
  for (auto& [singer, files] : by_singer) {
    std::shuffle(files.begin(), files.end(), rng);
    const std::size_t n = files.size();
    std::size_t n_valid = 0, n_test = 0;
    if (n < 3) {
      if (ratios.valid > 0 || ratios.test > 0)
        std::cerr << "warning: singer '" << singer << "' has " << n
                  << " utterance(s); all assigned to train\n";
    } else {
      n_valid = static_cast<std::size_t>(std::llround(n * ratios.valid));
      n_test = static_cast<std::size_t>(std::llround(n * ratios.test));
      // Keep at least one training utterance per singer.
      while (n_valid + n_test >= n) {
        if (n_test >= n_valid && n_test > 0) --n_test;
        else --n_valid;
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      Split split = Split::kTrain;
      if (i < n_valid) split = Split::kValid;
      else if (i < n_valid + n_test) split = Split::kTest;
      entries.push_back({utterance_id_for(dataset_dir, files[i]), files[i], singer, split});
    }
  }
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.utterance_id < b.utterance_id; });
  return Manifest(std::move(entries));
}

std::size_t segment_offset(std::size_t clip_length, std::size_t length,
                           std::mt19937_64& rng) {
  if (clip_length <= length) return 0;
  const std::size_t slots = (clip_length - length) / kSegmentAlign;
  std::uniform_int_distribution<std::size_t> pick(0, slots);
  return pick(rng) * kSegmentAlign;
}

std::vector<float> slice_padded(const std::vector<float>& samples, std::size_t offset,
                                std::size_t length) {
  std::vector<float> out(length, 0.0f);
  if (offset < samples.size()) {
    const std::size_t n = std::min(length, samples.size() - offset);
    std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(offset), n, out.begin());
  }
  return out;
}

AudioClip sample_segment(const AudioClip& clip, std::size_t length, std::mt19937_64& rng) {
  if (length < 1)
    throw AudioError(AudioError::Kind::kInvalidArgument, "segment length must be >= 1");
  const std::size_t offset = segment_offset(clip.samples.size(), length, rng);
  return {slice_padded(clip.samples, offset, length), clip.sample_rate};
}

}  // namespace hsvc::audio
