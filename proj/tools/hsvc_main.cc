// hsvc: extract | train | convert | eval

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include "hsvc/audio_io.h"
#include "hsvc/pipeline.h"
#include "hsvc/trainer.h"

namespace fs = std::filesystem;
using namespace hsvc;

namespace {

constexpr int kExitMissingFeature = 2;

fs::path cache_dir(const std::string& flag, const fs::path& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv("HIERSVC_CACHE"); env && *env) return env;
  return fallback;
}

int run_extract(const std::string& data_dir, const std::string& out_flag,
                const std::string& ling_dir, bool force, std::uint64_t seed) {
  pipeline::ExtractOptions opts;
  opts.data_dir = data_dir;
  opts.out_dir = cache_dir(out_flag, fs::path(data_dir) / "features");
  if (!ling_dir.empty()) opts.ling_dir = fs::path(ling_dir);
  opts.force = force;
  opts.encoder_seed = seed;
  const auto report = pipeline::extract(opts);
  for (const auto& id : report.written) std::cout << "wrote " << id << '\n';
  for (const auto& id : report.skipped) std::cout << "skipped " << id << '\n';
  std::cout << "extracted " << report.written.size() << ", skipped " << report.skipped.size()
            << " -> " << opts.out_dir.string() << '\n';
  return 0;
}

int run_train(const std::string& data_dir, const std::string& config, const std::string& out_dir,
              const std::string& features_flag, const std::string& resume,
              std::optional<std::uint64_t> seed) {
  train::TrainConfig cfg = config.empty() ? train::TrainConfig{} : train::TrainConfig::load(config);
  if (seed) cfg.seed = *seed;
  for (const auto& w : cfg.validate()) std::cerr << "warning: " << w << '\n';

  const auto manifest = audio::build_manifest(data_dir, {}, cfg.seed);
  fs::create_directories(out_dir);
  manifest.save(fs::path(out_dir) / "manifest.tsv");
  const auto data =
      train::load_dataset(manifest, cache_dir(features_flag, fs::path(data_dir) / "features"), cfg);

  train::TrainLoopOptions opts;
  opts.output_dir = out_dir;
  if (!resume.empty()) opts.resume_from = fs::path(resume);
  opts.on_metrics = [](const std::string& line) { std::cout << line << '\n'; };
  std::cout << train::metrics_header() << '\n';
  const auto result = train::train_loop(cfg, data, opts);
  std::cout << "final checkpoint " << result.final_checkpoint.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Singing voice conversion with a hierarchical speaker representation"};
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  std::string config;
  bool force = false;

  auto* extract = app.add_subcommand("extract", "Compute per-utterance feature files");
  std::string data_dir, out_dir, ling_dir;
  extract->add_option("data_dir", data_dir, "Directory of WAV files")->required();
  extract->add_option("out_dir", out_dir, "Feature directory (default $HIERSVC_CACHE or <data_dir>/features)");
  extract->add_option("--ling-dir", ling_dir, "External linguistic features (<id>.ling.bin)");
  extract->add_flag("--force", force, "Recompute existing files");
  extract->add_option("--seed", seed, "Pseudo-encoder projection seed");

  auto* trn = app.add_subcommand("train", "Train a model");
  std::string train_data, train_out = "run", features, resume;
  trn->add_option("data_dir", train_data, "Directory of WAV files")->required();
  trn->add_option("--config", config, "key = value training config");
  trn->add_option("--out", train_out, "Output directory for checkpoints and metrics");
  trn->add_option("--features", features, "Feature directory (default $HIERSVC_CACHE or <data_dir>/features)");
  trn->add_option("--resume", resume, "Checkpoint to resume from");
  trn->add_option("--seed", seed, "Overrides the config seed");

  auto* conv = app.add_subcommand("convert", "Convert a source to a reference singer");
  pipeline::ConvertRequest req;
  std::string source_ling;
  conv->add_option("--source", req.source_wav, "Source WAV")->required()->check(CLI::ExistingFile);
  conv->add_option("--reference", req.reference_wav, "Reference WAV")->required()->check(CLI::ExistingFile);
  conv->add_option("--checkpoint", req.checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  conv->add_option("--output", req.output, "Output WAV")->required();
  conv->add_option("--f0-shift", req.f0_shift_semitones, "Pitch shift in semitones")
      ->check(CLI::Range(-pipeline::kMaxShiftSemitones, pipeline::kMaxShiftSemitones));
  conv->add_option("--ling", source_ling, "External linguistic features for the source");
  conv->add_option("--seed", seed, "Excitation noise seed");

  auto* eval = app.add_subcommand("eval", "Objective metrics for a conversion");
  pipeline::EvalRequest ereq;
  eval->add_option("--converted", ereq.converted_wav)->required()->check(CLI::ExistingFile);
  eval->add_option("--source", ereq.source_wav)->required()->check(CLI::ExistingFile);
  eval->add_option("--reference", ereq.reference_wav)->required()->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", ereq.checkpoint)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);

  try {
    if (extract->parsed()) return run_extract(data_dir, out_dir, ling_dir, force, seed.value_or(0));
    if (trn->parsed()) return run_train(train_data, config, train_out, features, resume, seed);
    if (conv->parsed()) {
      if (!source_ling.empty()) req.source_ling = fs::path(source_ling);
      req.seed = seed.value_or(0);
      const auto out = pipeline::convert(req);
      std::cout << "wrote " << req.output.string() << " (" << out.size() << " samples)\n";
      return 0;
    }
    if (eval->parsed()) {
      std::cout << pipeline::format_eval(pipeline::evaluate(ereq)) << '\n';
      return 0;
    }
  } catch (const train::MissingFeatureError& e) {
    std::cerr << "error: " << e.what() << " (utterance " << e.utterance_id() << ")\n";
    return kExitMissingFeature;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
