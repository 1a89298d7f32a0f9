#include "advspeech/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "advspeech/io.hpp"
#include "advspeech/rng.hpp"

namespace advspeech {

namespace fs = std::filesystem;

namespace {

bool marker_exists(const fs::path& marker) { return fs::exists(marker); }

void notice(const std::string& stage, const std::string& what) {
  std::cout << "[" << stage << "] " << what << "\n";
}

std::string format_wer(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::string format_eps(double v) {
  std::ostringstream ss;
  ss << v;
  return ss.str();
}

}  // namespace

Corpus stage_synth_corpus(const ExperimentConfig& cfg, const Workspace& ws) {
  const fs::path marker = ws.corpus_dir() / "meta.json";
  if (marker_exists(marker) && !ws.overwrite) {
    notice("synth-corpus", "exists, skipping (use --overwrite to regenerate)");
    return Corpus::load(ws.corpus_dir());
  }
  notice("synth-corpus", "synthesizing " + std::to_string(cfg.corpus.n_train) + "+" +
                             std::to_string(cfg.corpus.n_test) + " utterances");
  Corpus corpus = synthesize_corpus(cfg.corpus);
  corpus.save(ws.corpus_dir());
  return corpus;
}

AsrModel stage_train_asr(const ExperimentConfig& cfg, const Workspace& ws, const Corpus& corpus) {
  const fs::path marker = ws.asr_dir() / "asr.json";
  if (marker_exists(marker) && !ws.overwrite) {
    notice("train-asr", "exists, skipping");
    return AsrModel::load(ws.asr_dir());
  }
  notice("train-asr", "training recognizer for " + std::to_string(cfg.asr.epochs) + " epochs");
  AsrModel model(corpus.vocab, cfg.asr_config(), cfg.asr.seed);
  TrainOptions opts;
  opts.epochs = cfg.asr.epochs;
  opts.lr = cfg.asr.lr;
  opts.seed = cfg.asr.seed;
  opts.average_last_checkpoints = cfg.asr.checkpoint_averaging;
  const TrainLog log = train_asr(model, corpus.train, opts);
  notice("train-asr", "final epoch loss " + std::to_string(log.epoch_loss.back()));
  model.save(ws.asr_dir());
  return model;
}

AttackDataset stage_gen_attacks(const ExperimentConfig& cfg, const Workspace& ws,
                                const Corpus& corpus, const AsrModel& asr) {
  const fs::path marker = ws.attacks_dir() / "manifest.jsonl";
  if (marker_exists(marker) && !ws.overwrite) {
    notice("gen-attacks", "exists, skipping");
    return AttackDataset::load(ws.attacks_dir());
  }
  notice("gen-attacks", "generating " + std::to_string(cfg.attacks.n_pairs) + " offline rows");
  AsrModel attack_view = asr.deep_clone();
  attack_view.set_requires_grad(false);
  ModelChain chain;
  chain.asr = &attack_view;
  OfflineAttackOptions opts;
  opts.n_pairs = cfg.attacks.n_pairs;
  opts.seed = cfg.attacks.seed;
  return generate_offline_attacks(chain, corpus, ws.attacks_dir(), opts);
}

std::vector<AttackRow> holdout_rows(const ExperimentConfig& cfg, const AttackDataset& dataset) {
  // every k-th row is held out, k from the holdout fraction
  std::vector<AttackRow> out;
  if (cfg.attacks.holdout_fraction <= 0.0) return out;
  const auto k = static_cast<std::size_t>(std::max(1.0, 1.0 / cfg.attacks.holdout_fraction));
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    if (i % k == 0) out.push_back(dataset.rows[i]);
  }
  return out;
}

std::vector<AttackRow> training_rows(const ExperimentConfig& cfg, const AttackDataset& dataset) {
  if (cfg.attacks.holdout_fraction <= 0.0) return dataset.rows;
  const auto k = static_cast<std::size_t>(std::max(1.0, 1.0 / cfg.attacks.holdout_fraction));
  std::vector<AttackRow> out;
  for (std::size_t i = 0; i < dataset.rows.size(); ++i) {
    if (i % k != 0) out.push_back(dataset.rows[i]);
  }
  return out;
}

DenoiserModel stage_train_denoiser(const ExperimentConfig& cfg, const Workspace& ws,
                                   const Corpus& corpus, const AttackDataset& dataset) {
  const fs::path marker = ws.denoiser_dir() / "denoiser.json";
  if (marker_exists(marker) && !ws.overwrite) {
    notice("train-denoiser", "exists, skipping");
    return DenoiserModel::load(ws.denoiser_dir());
  }
  const std::vector<WaveformPair> pairs = dataset_pairs(dataset, corpus, training_rows(cfg, dataset));
  notice("train-denoiser", "training on " + std::to_string(pairs.size()) + " pairs");
  DenoiserModel model(cfg.denoiser_config(), cfg.denoiser.seed);
  DenoiserTrainOptions opts;
  opts.epochs = cfg.denoiser.epochs;
  opts.lr = cfg.denoiser.lr;
  opts.seed = cfg.denoiser.seed;
  const auto losses = train_denoiser_offline(model, pairs, opts);
  notice("train-denoiser", "loss " + std::to_string(losses.front()) + " -> " +
                               std::to_string(losses.back()));
  model.save(ws.denoiser_dir());
  return model;
}

void stage_finetune(const ExperimentConfig& cfg, const Workspace& ws, const Corpus& corpus,
                    FinetuneStage which) {
  const FinetuneConfig ft = cfg.finetune_config();
  switch (which) {
    case FinetuneStage::kAsr: {
      if (marker_exists(ws.advft_asr_dir() / "asr.json") && !ws.overwrite) {
        notice("finetune", "asr variant exists, skipping");
        return;
      }
      notice("finetune", "adversarially fine-tuning recognizer");
      AsrModel model = AsrModel::load(ws.asr_dir());
      adv_finetune_asr(model, corpus.train, ft);
      model.save(ws.advft_asr_dir());
      return;
    }
    case FinetuneStage::kJoint: {
      if (marker_exists(ws.advft_joint_asr_dir() / "asr.json") &&
          marker_exists(ws.advft_joint_denoiser_dir() / "denoiser.json") && !ws.overwrite) {
        notice("finetune", "joint variant exists, skipping");
        return;
      }
      notice("finetune", "adversarially fine-tuning denoiser+recognizer jointly");
      AsrModel model = AsrModel::load(ws.asr_dir());
      DenoiserModel denoiser = DenoiserModel::load(ws.denoiser_dir());
      adv_finetune_joint(denoiser, model, corpus.train, ft);
      model.save(ws.advft_joint_asr_dir());
      denoiser.save(ws.advft_joint_denoiser_dir());
      return;
    }
    case FinetuneStage::kJointFrozen: {
      if (marker_exists(ws.advft_frozen_denoiser_dir() / "denoiser.json") && !ws.overwrite) {
        notice("finetune", "joint-frozen variant exists, skipping");
        return;
      }
      notice("finetune", "adversarially fine-tuning denoiser with frozen recognizer");
      AsrModel model = AsrModel::load(ws.asr_dir());
      DenoiserModel denoiser = DenoiserModel::load(ws.denoiser_dir());
      adv_finetune_joint_frozen(denoiser, model, corpus.train, ft);
      denoiser.save(ws.advft_frozen_denoiser_dir());
      return;
    }
  }
}

SystemRegistry::SystemRegistry(const ExperimentConfig& cfg, const Workspace& ws)
    : sigma_(cfg.smoothing.sigma), cfg_(cfg), ws_(ws) {}

std::shared_ptr<AsrModel> SystemRegistry::load_asr(const fs::path& dir) const {
  if (!fs::exists(dir / "asr.json")) {
    throw std::invalid_argument("missing recognizer checkpoint: " + dir.string());
  }
  auto m = std::make_shared<AsrModel>(AsrModel::load(dir));
  m->set_requires_grad(false);  // evaluation shares models across workers
  return m;
}

std::shared_ptr<DenoiserModel> SystemRegistry::load_denoiser(const fs::path& dir) const {
  if (!fs::exists(dir / "denoiser.json")) {
    throw std::invalid_argument("missing denoiser checkpoint: " + dir.string());
  }
  auto m = std::make_shared<DenoiserModel>(DenoiserModel::load(dir));
  m->set_requires_grad(false);
  return m;
}

SystemSpec SystemRegistry::system(const std::string& key) {
  SystemSpec spec;
  spec.key = key;
  if (key == "baseline") {
    if (!baseline_) baseline_ = load_asr(ws_.asr_dir());
    spec.label = "Baseline";
    spec.chain.asr = baseline_.get();
  } else if (key == "rs") {
    if (!baseline_) baseline_ = load_asr(ws_.asr_dir());
    std::ostringstream label;
    label << "RS" << sigma_;
    spec.label = label.str();
    spec.chain.asr = baseline_.get();
    spec.chain.smoothing.sigma = sigma_;
  } else if (key == "denoiser") {
    if (!baseline_) baseline_ = load_asr(ws_.asr_dir());
    if (!denoiser_offline_) denoiser_offline_ = load_denoiser(ws_.denoiser_dir());
    spec.label = "DENOISER";
    spec.chain.asr = baseline_.get();
    spec.chain.denoiser = denoiser_offline_.get();
  } else if (key == "advft_asr") {
    if (!advft_asr_) advft_asr_ = load_asr(ws_.advft_asr_dir());
    spec.label = "ADV-FINETUNE-ASR";
    spec.chain.asr = advft_asr_.get();
  } else if (key == "advft_joint") {
    if (!advft_joint_asr_) advft_joint_asr_ = load_asr(ws_.advft_joint_asr_dir());
    if (!advft_joint_denoiser_) {
      advft_joint_denoiser_ = load_denoiser(ws_.advft_joint_denoiser_dir());
    }
    spec.label = "ADV-FINETUNE-JOINT";
    spec.chain.asr = advft_joint_asr_.get();
    spec.chain.denoiser = advft_joint_denoiser_.get();
  } else if (key == "advft_joint_frozen") {
    if (!baseline_) baseline_ = load_asr(ws_.asr_dir());
    if (!advft_frozen_denoiser_) {
      advft_frozen_denoiser_ = load_denoiser(ws_.advft_frozen_denoiser_dir());
    }
    spec.label = "ADV-FINETUNE-JOINT-ASRfrozen";
    spec.chain.asr = baseline_.get();
    spec.chain.denoiser = advft_frozen_denoiser_.get();
  } else {
    throw std::invalid_argument("unknown system '" + key + "'");
  }
  return spec;
}

bool stage_evaluate(const ExperimentConfig& cfg, const Workspace& ws, const Corpus& corpus) {
  fs::create_directories(ws.results_dir());
  SystemRegistry registry(cfg, ws);

  struct CellPlan {
    std::string attack;  // FGSM or PGD
    double epsilon;
    std::int64_t iterations;
  };
  std::vector<CellPlan> plan;
  for (const double e : cfg.evaluate.epsilons) plan.push_back({"FGSM", e, 1});
  for (const double e : cfg.evaluate.epsilons) plan.push_back({"PGD", e, cfg.evaluate.pgd_iterations});
  for (const double e : cfg.evaluate.long_epsilons) {
    plan.push_back({"PGD", e, cfg.evaluate.long_iterations});
  }

  // One target phrase per test utterance, shared by every cell.
  std::vector<Transcript> pool;
  for (const Utterance& u : corpus.train) pool.push_back(u.words);
  std::vector<Transcript> targets;
  for (const Utterance& u : corpus.test) {
    targets.push_back(assign_target(u, pool, Rng::mix(cfg.evaluate.seed, "targets")));
  }

  std::ostringstream csv;
  csv << "system,norm,epsilon,iterations,benign_wer,gt_wer,tgt_wer,n_utts\n";
  std::vector<SystemCell> boxplot_cells;
  bool complete = true;

  for (const std::string& key : cfg.evaluate.systems) {
    const SystemSpec sys = registry.system(key);
    for (const CellPlan& cell : plan) {
      AttackSpec spec;
      spec.norm = Norm::kLinf;
      spec.epsilon = cell.epsilon * corpus.epsilon_scale();
      spec.iterations = cell.iterations;
      if (cell.attack == "FGSM") spec.step = spec.epsilon;
      spec.mode = AttackMode::kTargeted;
      const std::uint64_t cell_seed =
          Rng::mix(cfg.evaluate.seed, sys.label + "/" + cell.attack + "/" +
                                          format_eps(cell.epsilon) + "/" +
                                          std::to_string(cell.iterations));
      const WerReport report = evaluate_cell(sys.chain, nullptr, corpus.test, targets, spec,
                                             corpus.config, corpus.vocab, cell_seed, ws.workers);
      if (report.n_failed > 0) {
        complete = false;
        std::cerr << "[evaluate] partial cell: " << sys.label << " " << cell.attack << " eps "
                  << format_eps(cell.epsilon) << " (" << report.n_failed << " failures)\n";
      }
      csv << sys.label << ",Linf," << format_eps(cell.epsilon) << "," << cell.iterations << ","
          << format_wer(report.benign_wer()) << "," << format_wer(report.gt_wer()) << ","
          << format_wer(report.target->wer_percent()) << "," << report.n_utts << "\n";
      boxplot_cells.push_back({sys.label, cell.epsilon, report.gt_wer()});
      notice("evaluate", sys.label + " " + cell.attack + "-" + std::to_string(cell.iterations) +
                             " eps " + format_eps(cell.epsilon) + ": GT " +
                             format_wer(report.gt_wer()) + " TGT " +
                             format_wer(report.target->wer_percent()));
    }
  }
  write_text_file(ws.results_csv(), csv.str());

  std::ostringstream box;
  box << "system,min,q1,median,q3,max,n_settings\n";
  for (const BoxplotStats& s :
       summarize_boxplot(boxplot_cells, cfg.evaluate.boxplot_exclude_epsilon)) {
    box << s.system << "," << format_wer(s.min) << "," << format_wer(s.q1) << ","
        << format_wer(s.median) << "," << format_wer(s.q3) << "," << format_wer(s.max) << ","
        << s.n_settings << "\n";
  }
  write_text_file(ws.boxplot_csv(), box.str());
  return complete;
}

bool run_pipeline(const ExperimentConfig& cfg, const Workspace& ws) {
  Corpus corpus = stage_synth_corpus(cfg, ws);
  AsrModel asr = stage_train_asr(cfg, ws, corpus);
  AttackDataset dataset = stage_gen_attacks(cfg, ws, corpus, asr);
  stage_train_denoiser(cfg, ws, corpus, dataset);
  stage_finetune(cfg, ws, corpus, FinetuneStage::kAsr);
  stage_finetune(cfg, ws, corpus, FinetuneStage::kJoint);
  stage_finetune(cfg, ws, corpus, FinetuneStage::kJointFrozen);
  return stage_evaluate(cfg, ws, corpus);
}

}  // namespace advspeech
