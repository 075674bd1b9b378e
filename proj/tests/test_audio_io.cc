#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

#include "hsvc/audio_io.h"
#include "test_support.h"

using namespace hsvc::audio;
namespace fs = std::filesystem;

namespace {

void put16(std::string& s, std::uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); }
void put32(std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); }

// Hand-assembled RIFF file, independent of write_wav.
std::string riff(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                 std::uint16_t bits, const std::string& payload) {
  std::string fmt;
  put16(fmt, format);
  put16(fmt, channels);
  put32(fmt, rate);
  put32(fmt, rate * channels * bits / 8);
  put16(fmt, static_cast<std::uint16_t>(channels * bits / 8));
  put16(fmt, bits);
  std::string body = "WAVE";
  body += "fmt ";
  put32(body, static_cast<std::uint32_t>(fmt.size()));
  body += fmt;
  body += "data";
  put32(body, static_cast<std::uint32_t>(payload.size()));
  body += payload;
  std::string out = "RIFF";
  put32(out, static_cast<std::uint32_t>(body.size()));
  return out + body;
}

fs::path write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
  return p;
}

std::size_t peak_bin(const std::vector<float>& x) {
  const std::size_t n = x.size();
  double best = -1.0;
  std::size_t arg = 0;
  for (std::size_t k = 1; k < n / 2; ++k) {
    std::complex<double> acc;
    for (std::size_t t = 0; t < n; ++t)
      acc += static_cast<double>(x[t]) * std::polar(1.0, -2.0 * std::numbers::pi * k * t / n);
    if (std::abs(acc) > best) {
      best = std::abs(acc);
      arg = k;
    }
  }
  return arg;
}

}  // namespace

TEST_CASE("read_wav decodes hand-built PCM16") {
  const auto dir = testing::temp_dir("audio_pcm");
  std::string payload;
  for (int i = 0; i < 16000; ++i) put16(payload, 0);
  const auto silent = read_wav(write_bytes(dir / "silence.wav", riff(1, 1, 16000, 16, payload)));
  CHECK(silent.sample_rate == 16000);
  REQUIRE(silent.size() == 16000);
  for (float v : silent.samples) CHECK(v == 0.0f);

  std::string half;
  put16(half, 16384);
  CHECK(read_wav(write_bytes(dir / "half.wav", riff(1, 1, 16000, 16, half))).samples[0] == 0.5f);
}

TEST_CASE("read_wav averages channels and accepts float32") {
  const auto dir = testing::temp_dir("audio_stereo");
  std::string stereo;
  put16(stereo, 16384);
  put16(stereo, 0);
  const auto clip = read_wav(write_bytes(dir / "s.wav", riff(1, 2, 22050, 16, stereo)));
  CHECK(clip.sample_rate == 22050);
  REQUIRE(clip.size() == 1);
  CHECK(clip.samples[0] == doctest::Approx(0.25));

  std::string f32;
  const float vals[] = {0.125f, -0.75f};
  f32.append(reinterpret_cast<const char*>(vals), sizeof vals);
  const auto fc = read_wav(write_bytes(dir / "f.wav", riff(3, 1, 16000, 32, f32)));
  REQUIRE(fc.size() == 2);
  CHECK(fc.samples[0] == 0.125f);
  CHECK(fc.samples[1] == -0.75f);
}

TEST_CASE("read_wav error kinds are distinct") {
  const auto dir = testing::temp_dir("audio_errors");
  auto kind_of = [](const fs::path& p) {
    try {
      read_wav(p);
    } catch (const AudioError& e) {
      return e.kind();
    }
    FAIL("expected AudioError");
    return AudioError::Kind::kInvalidArgument;
  };
  CHECK(kind_of(dir / "absent.wav") == AudioError::Kind::kMissingFile);
  CHECK(kind_of(write_bytes(dir / "junk.wav", "not a wave file at all")) ==
        AudioError::Kind::kMalformedHeader);
  std::string p8(4, '\0');
  CHECK(kind_of(write_bytes(dir / "u8.wav", riff(1, 1, 16000, 8, p8))) ==
        AudioError::Kind::kUnsupportedEncoding);
}

TEST_CASE("write_wav round trip within quantization bound") {
  const auto dir = testing::temp_dir("audio_roundtrip");
  AudioClip tone{testing::tone(440.0, 1.0, 0.8), 16000};
  write_wav(dir / "tone.wav", tone);
  const auto back = read_wav(dir / "tone.wav");
  REQUIRE(back.size() == tone.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < tone.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(back.samples[i]) - tone.samples[i]));
  CHECK(worst <= 1.0 / 32768.0);

  AudioClip random{testing::noise(4000, 7, 0.3), 16000};
  for (auto& v : random.samples) v = std::clamp(v, -1.0f, 1.0f);
  write_wav(dir / "rand.wav", random);
  const auto rb = read_wav(dir / "rand.wav");
  for (std::size_t i = 0; i < random.size(); ++i)
    CHECK(std::abs(rb.samples[i] - random.samples[i]) <= 1.0f / 32768.0f);

  AudioClip silence{std::vector<float>(100, 0.0f), 16000};
  write_wav(dir / "zero.wav", silence);
  CHECK(read_wav(dir / "zero.wav").samples == silence.samples);
}

TEST_CASE("write_wav clamps out-of-range input") {
  const auto dir = testing::temp_dir("audio_clamp");
  write_wav(dir / "loud.wav", AudioClip{{1.5f, -1.5f}, 16000});
  const auto back = read_wav(dir / "loud.wav");
  CHECK(back.samples[0] == doctest::Approx(32767.0 / 32768.0));
  CHECK(back.samples[1] == -1.0f);
}

TEST_CASE("write_wav to an unwritable path") {
  try {
    write_wav("/nonexistent_dir_hsvc/x.wav", AudioClip{{0.0f}, 16000});
    FAIL("expected failure");
  } catch (const AudioError& e) {
    CHECK(e.kind() == AudioError::Kind::kUnwritable);
  }
}

TEST_CASE("resample length, identity and spectral peak") {
  AudioClip tone48{testing::tone(440.0, 1.0, 0.5, 48000), 48000};
  const auto down = resample(tone48, 16000);
  CHECK(down.sample_rate == 16000);
  CHECK(down.size() == 16000);

  const auto same = resample(tone48, 48000);
  CHECK(same.samples == tone48.samples);

  // 4096-sample analysis: bin width 16000 / 4096 Hz.
  std::vector<float> window(down.samples.begin() + 4000, down.samples.begin() + 4000 + 4096);
  const double bin_hz = 16000.0 / 4096.0;
  const double peak_hz = static_cast<double>(peak_bin(window)) * bin_hz;
  CHECK(std::abs(peak_hz - 440.0) <= bin_hz);

  for (auto [src, dst, len] : {std::tuple{44100, 16000, 44100}, {22050, 16000, 1001},
                               {8000, 16000, 333}, {16000, 44100, 160}}) {
    AudioClip c{std::vector<float>(static_cast<std::size_t>(len), 0.1f), src};
    const auto expect = static_cast<std::size_t>(std::llround(static_cast<double>(len) * dst / src));
    CHECK(resample(c, dst).size() == expect);
  }
  CHECK_THROWS_AS(resample(tone48, 0), AudioError);
}

namespace {

fs::path make_corpus(const std::string& name, int singers, int per_singer) {
  const auto dir = testing::temp_dir(name);
  for (int s = 0; s < singers; ++s) {
    const auto sd = dir / ("singer" + std::to_string(s));
    fs::create_directories(sd);
    for (int u = 0; u < per_singer; ++u)
      write_wav(sd / ("take" + std::to_string(u) + ".wav"),
                AudioClip{std::vector<float>(64, 0.0f), 16000});
  }
  return dir;
}

}  // namespace

TEST_CASE("build_manifest splits per singer") {
  const auto dir = make_corpus("manifest", 12, 20);
  const Manifest m = build_manifest(dir, {}, 42);
  REQUIRE(m.size() == 240);
  std::map<std::string, std::map<Split, int>> counts;
  std::set<std::string> ids;
  for (const auto& e : m.entries()) {
    counts[e.singer_id][e.split]++;
    ids.insert(e.utterance_id);
    CHECK(fs::exists(e.path));
  }
  CHECK(ids.size() == 240);
  CHECK(counts.size() == 12);
  for (auto& [singer, c] : counts) {
    CHECK(c[Split::kTrain] == 18);
    CHECK(c[Split::kValid] == 1);
    CHECK(c[Split::kTest] == 1);
  }
  CHECK(build_manifest(dir, {}, 42) == m);
  CHECK_FALSE(build_manifest(dir, {}, 43) == m);

  const Manifest all_train = build_manifest(dir, {1.0, 0.0, 0.0}, 1);
  for (const auto& e : all_train.entries()) CHECK(e.split == Split::kTrain);
  CHECK(utterance_id_for(dir, dir / "singer3" / "take7.wav") == "singer3_take7");
}

TEST_CASE("build_manifest edge cases") {
  const auto small = make_corpus("manifest_small", 2, 2);
  const Manifest m = build_manifest(small, {}, 0);
  for (const auto& e : m.entries()) CHECK(e.split == Split::kTrain);

  const auto empty = testing::temp_dir("manifest_empty");
  CHECK_THROWS_AS(build_manifest(empty, {}, 0), AudioError);
}

TEST_CASE("manifest persistence round trip") {
  const auto dir = make_corpus("manifest_io", 3, 5);
  const Manifest m = build_manifest(dir, {}, 5);
  m.save(dir / "manifest.tsv");
  CHECK(Manifest::load(dir / "manifest.tsv") == m);
  std::ifstream f(dir / "manifest.tsv");
  std::string line;
  std::getline(f, line);
  CHECK(std::count(line.begin(), line.end(), '\t') == 3);
}

TEST_CASE("sample_segment alignment and padding") {
  AudioClip two{testing::noise(32000, 3), 16000};
  std::mt19937_64 rng(9);
  for (int i = 0; i < 50; ++i) {
    std::mt19937_64 probe = rng;
    const std::size_t off = segment_offset(two.size(), 16000, probe);
    CHECK(off % 640 == 0);
    CHECK(off <= 16000);
    const auto seg = sample_segment(two, 16000, rng);
    REQUIRE(seg.size() == 16000);
    CHECK(std::equal(seg.samples.begin(), seg.samples.end(), two.samples.begin() + off));
  }

  AudioClip half{testing::noise(8000, 4), 16000};
  std::mt19937_64 r2(1);
  const auto padded = sample_segment(half, 16000, r2);
  REQUIRE(padded.size() == 16000);
  CHECK(std::equal(half.samples.begin(), half.samples.end(), padded.samples.begin()));
  for (std::size_t i = 8000; i < 16000; ++i) CHECK(padded.samples[i] == 0.0f);

  std::mt19937_64 a(77), b(77);
  CHECK(sample_segment(two, 3840, a).samples == sample_segment(two, 3840, b).samples);
}
