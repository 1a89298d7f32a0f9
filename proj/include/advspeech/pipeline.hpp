#pragma once

#include <filesystem>
#include <string>

#include "advspeech/config.hpp"
#include "advspeech/corpus.hpp"
#include "advspeech/defense.hpp"
#include "advspeech/denoiser.hpp"
#include "advspeech/eval.hpp"

namespace advspeech {

// On-disk layout of one experiment run. Stages skip themselves when their
// outputs already exist (unless overwrite is set) and announce the skip.
struct Workspace {
  std::filesystem::path root;
  bool overwrite = false;
  int workers = 1;

  std::filesystem::path corpus_dir() const { return root / "corpus"; }
  std::filesystem::path asr_dir() const { return root / "models" / "asr_baseline"; }
  std::filesystem::path attacks_dir() const { return root / "attacks"; }
  std::filesystem::path denoiser_dir() const { return root / "models" / "denoiser_offline"; }
  std::filesystem::path advft_asr_dir() const { return root / "models" / "advft_asr"; }
  std::filesystem::path advft_joint_asr_dir() const { return root / "models" / "advft_joint_asr"; }
  std::filesystem::path advft_joint_denoiser_dir() const {
    return root / "models" / "advft_joint_denoiser";
  }
  std::filesystem::path advft_frozen_denoiser_dir() const {
    return root / "models" / "advft_frozen_denoiser";
  }
  std::filesystem::path results_dir() const { return root / "results"; }
  std::filesystem::path results_csv() const { return results_dir() / "results.csv"; }
  std::filesystem::path boxplot_csv() const { return results_dir() / "boxplot.csv"; }
};

Corpus stage_synth_corpus(const ExperimentConfig& cfg, const Workspace& ws);
AsrModel stage_train_asr(const ExperimentConfig& cfg, const Workspace& ws, const Corpus& corpus);
AttackDataset stage_gen_attacks(const ExperimentConfig& cfg, const Workspace& ws,
                                const Corpus& corpus, const AsrModel& asr);
DenoiserModel stage_train_denoiser(const ExperimentConfig& cfg, const Workspace& ws,
                                   const Corpus& corpus, const AttackDataset& dataset);

enum class FinetuneStage { kAsr, kJoint, kJointFrozen };
void stage_finetune(const ExperimentConfig& cfg, const Workspace& ws, const Corpus& corpus,
                    FinetuneStage which);

// Rows of the offline dataset reserved for held-out checks (never trained on).
std::vector<AttackRow> holdout_rows(const ExperimentConfig& cfg, const AttackDataset& dataset);
std::vector<AttackRow> training_rows(const ExperimentConfig& cfg, const AttackDataset& dataset);

struct SystemSpec {
  std::string key;    // config name
  std::string label;  // CSV label
  ModelChain chain;
};

// Loads the checkpoints a system needs; throws if they are missing. The
// returned chains borrow the models owned by the registry.
class SystemRegistry {
 public:
  SystemRegistry(const ExperimentConfig& cfg, const Workspace& ws);
  SystemSpec system(const std::string& key);

 private:
  double sigma_;
  std::shared_ptr<AsrModel> baseline_;
  std::shared_ptr<AsrModel> advft_asr_;
  std::shared_ptr<AsrModel> advft_joint_asr_;
  std::shared_ptr<DenoiserModel> denoiser_offline_;
  std::shared_ptr<DenoiserModel> advft_joint_denoiser_;
  std::shared_ptr<DenoiserModel> advft_frozen_denoiser_;

  const ExperimentConfig& cfg_;
  const Workspace& ws_;
  std::shared_ptr<AsrModel> load_asr(const std::filesystem::path& dir) const;
  std::shared_ptr<DenoiserModel> load_denoiser(const std::filesystem::path& dir) const;
};

// Full grid evaluation; writes results.csv and boxplot.csv. Returns true if
// every cell completed on all utterances (false marks a partial run).
bool stage_evaluate(const ExperimentConfig& cfg, const Workspace& ws, const Corpus& corpus);

// All stages in order. Returns the evaluate stage's completeness flag.
bool run_pipeline(const ExperimentConfig& cfg, const Workspace& ws);

}  // namespace advspeech
