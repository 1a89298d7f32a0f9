#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>

#include "advspeech/config.hpp"
#include "advspeech/io.hpp"
#include "advspeech/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;
constexpr int kExitPartial = 4;

int default_workers() {
  if (const char* env = std::getenv("ADVSPEECH_WORKERS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

struct CliOptions {
  std::string config_path;
  std::string out_dir = "run";
  std::optional<std::uint64_t> seed;
  int workers = 0;
  bool overwrite = false;
};

void snapshot_config(const advspeech::ExperimentConfig& cfg, const advspeech::Workspace& ws,
                     const std::string& command) {
  const auto dir = ws.root / "resolved";
  std::filesystem::create_directories(dir);
  advspeech::write_text_file(dir / (command + ".ini"), cfg.to_ini());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial robustness workbench for a toy differentiable speech recognizer"};
  app.require_subcommand(1);

  CliOptions opts;
  app.add_option("--config", opts.config_path, "Experiment config file (INI)");
  app.add_option("--seed", opts.seed, "Master seed; overrides every stage seed in the config");
  app.add_option("--workers", opts.workers,
                 "Worker threads for per-utterance stages (default: ADVSPEECH_WORKERS or cores)");
  app.add_option("--out", opts.out_dir, "Output directory for the run");
  app.add_flag("--overwrite", opts.overwrite, "Regenerate outputs that already exist");

  auto* synth = app.add_subcommand("synth-corpus", "Synthesize the corpus");
  auto* train_asr = app.add_subcommand("train-asr", "Train the clean recognizer");
  auto* gen_attacks = app.add_subcommand("gen-attacks", "Generate the offline attack dataset");
  auto* train_denoiser = app.add_subcommand("train-denoiser", "Train the offline denoiser");
  auto* finetune = app.add_subcommand("finetune", "Adversarially fine-tune a defense variant");
  std::string variant = "asr";
  finetune->add_option("--variant", variant, "asr | joint | joint-frozen")
      ->check(CLI::IsMember({"asr", "joint", "joint-frozen"}));
  auto* evaluate = app.add_subcommand("evaluate", "Run the full attack/defense WER grid");
  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end-to-end");

  CLI11_PARSE(app, argc, argv);

  advspeech::ExperimentConfig cfg;
  try {
    if (!opts.config_path.empty()) {
      cfg = advspeech::ExperimentConfig::from_file(opts.config_path);
    }
    if (opts.seed) cfg.override_seeds(*opts.seed);
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitValidation;
  }

  advspeech::Workspace ws;
  ws.root = opts.out_dir;
  ws.overwrite = opts.overwrite;
  ws.workers = opts.workers > 0 ? opts.workers : default_workers();

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    std::filesystem::create_directories(ws.root);
    snapshot_config(cfg, ws, command);

    if (synth->parsed()) {
      advspeech::stage_synth_corpus(cfg, ws);
    } else if (train_asr->parsed()) {
      advspeech::Corpus corpus = advspeech::Corpus::load(ws.corpus_dir());
      advspeech::stage_train_asr(cfg, ws, corpus);
    } else if (gen_attacks->parsed()) {
      advspeech::Corpus corpus = advspeech::Corpus::load(ws.corpus_dir());
      advspeech::AsrModel asr = advspeech::AsrModel::load(ws.asr_dir());
      advspeech::stage_gen_attacks(cfg, ws, corpus, asr);
    } else if (train_denoiser->parsed()) {
      advspeech::Corpus corpus = advspeech::Corpus::load(ws.corpus_dir());
      advspeech::AttackDataset dataset = advspeech::AttackDataset::load(ws.attacks_dir());
      advspeech::stage_train_denoiser(cfg, ws, corpus, dataset);
    } else if (finetune->parsed()) {
      advspeech::Corpus corpus = advspeech::Corpus::load(ws.corpus_dir());
      advspeech::FinetuneStage which = advspeech::FinetuneStage::kAsr;
      if (variant == "joint") which = advspeech::FinetuneStage::kJoint;
      if (variant == "joint-frozen") which = advspeech::FinetuneStage::kJointFrozen;
      advspeech::stage_finetune(cfg, ws, corpus, which);
    } else if (evaluate->parsed()) {
      advspeech::Corpus corpus = advspeech::Corpus::load(ws.corpus_dir());
      if (!advspeech::stage_evaluate(cfg, ws, corpus)) return kExitPartial;
    } else if (pipeline->parsed()) {
      if (!advspeech::run_pipeline(cfg, ws)) return kExitPartial;
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << command << ": " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
