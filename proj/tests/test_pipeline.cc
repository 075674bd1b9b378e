#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "hsvc/dsp_features.h"
#include "hsvc/pipeline.h"
#include "hsvc/trainer.h"
#include "test_support.h"

using namespace hsvc;
using namespace hsvc::pipeline;
namespace fs = std::filesystem;

namespace {

// A freshly initialized tiny model saved as a full training checkpoint.
fs::path tiny_checkpoint(const fs::path& dir) {
  const train::TrainConfig cfg = train::TrainConfig::tiny();
  const train::TrainState s = train::init_state(cfg);
  train::save_state(dir / "model.bin", s, cfg);
  return dir / "model.bin";
}

int run_cli(const std::string& args) {
  const int status = std::system((std::string(HSVC_CLI_PATH) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("extract writes three tracks per utterance") {
  const auto dir = testing::temp_dir("pipeline_extract");
  fs::create_directories(dir / "data" / "s1");
  audio::write_wav(dir / "data" / "s1" / "a.wav", {testing::sung_melody({220.0}, 1.0), 16000});
  audio::write_wav(dir / "data" / "s1" / "b.wav", {testing::tone(300.0, 0.5), 16000});

  ExtractOptions opts{dir / "data", dir / "feat", std::nullopt, false, 0};
  const auto r = extract(opts);
  CHECK(r.written == std::vector<std::string>{"s1_a", "s1_b"});
  const auto ling = content::load_features(dir / "feat" / "s1_a.ling.bin");
  CHECK(ling.values.shape() == std::vector<std::size_t>{25, 512});
  CHECK(content::load_tensor(dir / "feat" / "s1_a.f0.bin").shape() == std::vector<std::size_t>{100, 1});
  CHECK(content::load_tensor(dir / "feat" / "s1_a.loud.bin").shape() == std::vector<std::size_t>{250, 1});
  // 0.5 s pads to 13 frames of 640.
  CHECK(content::load_features(dir / "feat" / "s1_b.ling.bin").frames() == 13);

  const auto again = extract(opts);
  CHECK(again.written.empty());
  CHECK(again.skipped.size() == 2);
  opts.force = true;
  CHECK(extract(opts).written.size() == 2);

  // External linguistic features are used verbatim.
  fs::create_directories(dir / "ext");
  const content::LinguisticFeatures ext{testing::random_tensor({25, 512}, 3)};
  content::save_features(dir / "ext" / "s1_a.ling.bin", ext);
  fs::remove(dir / "data" / "s1" / "b.wav");
  ExtractOptions with_ling{dir / "data", dir / "feat2", dir / "ext", false, 0};
  extract(with_ling);
  CHECK(content::load_features(dir / "feat2" / "s1_a.ling.bin").values == ext.values);

  // A failing utterance leaves none of its files behind.
  std::ofstream(dir / "ext" / "s1_a.ling.bin", std::ios::binary | std::ios::trunc) << "junk";
  ExtractOptions failing{dir / "data", dir / "feat3", dir / "ext", false, 0};
  CHECK_THROWS(extract(failing));
  CHECK_FALSE(fs::exists(dir / "feat3" / "s1_a.ling.bin"));
  CHECK_FALSE(fs::exists(dir / "feat3" / "s1_a.f0.bin"));
  CHECK_FALSE(fs::exists(dir / "feat3" / "s1_a.loud.bin"));

  CHECK_THROWS_AS(extract({dir / "nothing", dir / "x", std::nullopt, false, 0}), audio::AudioError);
}

TEST_CASE("convert: length, determinism and argument errors") {
  const auto dir = testing::temp_dir("pipeline_convert");
  const auto ckpt = tiny_checkpoint(dir);
  audio::write_wav(dir / "src.wav", {testing::sung_melody({220.0, 247.0, 262.0}, 1.0), 16000});
  audio::write_wav(dir / "ref.wav", {testing::sung_melody({330.0}, 1.0, 0.3), 16000});
  audio::write_wav(dir / "short.wav", {testing::tone(300.0, 0.03), 16000});

  ConvertRequest req{dir / "src.wav", dir / "ref.wav", ckpt, dir / "out.wav", 0.0, std::nullopt, 1};
  const auto out = convert(req);
  CHECK(out.size() == 48000);
  CHECK(out.sample_rate == 16000);
  CHECK(audio::read_wav(dir / "out.wav").size() == 48000);
  for (float v : out.samples) CHECK(std::abs(v) <= 1.0f);
  CHECK(convert(req).samples == out.samples);

  ConvertRequest shifted = req;
  shifted.f0_shift_semitones = 12.0;
  CHECK_FALSE(convert(shifted).samples == out.samples);

  ConvertRequest bad = req;
  bad.f0_shift_semitones = 24.5;
  CHECK_THROWS_AS(convert(bad), PipelineError);
  bad = req;
  bad.reference_wav = dir / "short.wav";
  CHECK_THROWS_AS(convert(bad), PipelineError);

  // Source lengths that are not whole frames are trimmed.
  const auto gen = nn::load_generator(nn::load_checkpoint_file(ckpt));
  const auto odd = convert_clip(gen, {testing::tone(220.0, 1.03), 16000},
                                audio::read_wav(dir / "ref.wav"), 0.0, 0, 0);
  CHECK(odd.size() == 16000);

  const auto in = prepare_source({testing::tone(200.0, 1.0), 16000}, 0, 12.0);
  double voiced_mean = 0.0;
  std::size_t n = 0;
  for (float f : in.f0)
    if (f > 0.0f) voiced_mean += f, ++n;
  REQUIRE(n > 0);
  CHECK(voiced_mean / n == doctest::Approx(400.0).epsilon(0.03));
}

TEST_CASE("evaluation metrics") {
  const std::vector<float> a(50, 200.0f);
  std::size_t voiced = 0;
  CHECK(f0_rmse_cents(a, a, &voiced) == 0.0);
  CHECK(voiced == 50);
  std::vector<float> up(50, static_cast<float>(200.0 * std::pow(2.0, 1.0 / 12.0)));
  CHECK(*f0_rmse_cents(up, a) == doctest::Approx(100.0).epsilon(1e-4));
  CHECK_FALSE(f0_rmse_cents(std::vector<float>(50, 0.0f), a).has_value());
  std::vector<float> ramp(50);
  for (std::size_t i = 0; i < 50; ++i) ramp[i] = 150.0f + static_cast<float>(i);
  CHECK(*voiced_pearson(ramp, ramp) == doctest::Approx(1.0));
  CHECK_FALSE(voiced_pearson(a, a).has_value());

  const auto dir = testing::temp_dir("pipeline_eval");
  const auto gen = nn::load_generator(nn::load_checkpoint_file(tiny_checkpoint(dir)));
  const audio::AudioClip src{testing::tone(220.0, 1.0), 16000};
  const audio::AudioClip ref{testing::sung_melody({300.0}, 1.0), 16000};
  const auto same = evaluate(gen, src, src, ref);
  CHECK(same.stft_loss == 0.0);
  REQUIRE(same.f0_rmse_cents.has_value());
  CHECK(*same.f0_rmse_cents == 0.0);

  const audio::AudioClip semitone{testing::tone(220.0 * std::pow(2.0, 1.0 / 12.0), 1.0), 16000};
  const auto s = evaluate(gen, semitone, src, ref);
  REQUIRE(s.f0_rmse_cents.has_value());
  CHECK(std::abs(*s.f0_rmse_cents - 100.0) <= 5.0);

  const auto silent = evaluate(gen, {std::vector<float>(16000, 0.0f), 16000}, src, ref);
  CHECK_FALSE(silent.f0_rmse_cents.has_value());
  CHECK(format_eval(silent).find("f0_rmse_cents=absent") != std::string::npos);

  const auto self = evaluate(gen, ref, src, ref);
  REQUIRE(self.stat_distance.size() == 5);
  for (double d : self.stat_distance) CHECK(d == 0.0);
  const auto stats = clip_speaker_stats(gen, ref);
  for (double d : stat_distance(stats, stats)) CHECK(d == 0.0);
  CHECK(stat_distance(stats, clip_speaker_stats(gen, src))[0] > 0.0);
}

TEST_CASE("command-line tool") {
  const auto dir = testing::temp_dir("pipeline_cli");
  fs::create_directories(dir / "data" / "s1");
  audio::write_wav(dir / "data" / "s1" / "a.wav", {testing::sung_melody({220.0}, 1.0), 16000});
  std::ofstream(dir / "cfg.txt") << train::TrainConfig::tiny().to_text() << "pseudo_encoder = 0\n";

  CHECK(run_cli("train " + (dir / "data").string() + " --config " + (dir / "cfg.txt").string() +
                " --features " + (dir / "feat").string() + " --out " + (dir / "run").string()) == 2);
  CHECK(run_cli("extract " + (dir / "data").string() + " " + (dir / "feat").string()) == 0);
  CHECK(fs::exists(dir / "feat" / "s1_a.ling.bin"));

  const auto ckpt = tiny_checkpoint(dir);
  audio::write_wav(dir / "src.wav", {testing::tone(220.0, 1.0), 16000});
  const std::string conv = "convert --source " + (dir / "src.wav").string() + " --reference " +
                           (dir / "data" / "s1" / "a.wav").string() + " --checkpoint " +
                           ckpt.string() + " --output " + (dir / "out.wav").string();
  CHECK(run_cli(conv) == 0);
  CHECK(audio::read_wav(dir / "out.wav").size() == 16000);
  CHECK(run_cli(conv + " --f0-shift 30") != 0);
  CHECK(run_cli("eval --converted " + (dir / "out.wav").string() + " --source " +
                (dir / "src.wav").string() + " --reference " + (dir / "src.wav").string() +
                " --checkpoint " + ckpt.string()) == 0);
  CHECK(run_cli("bogus") != 0);
}
