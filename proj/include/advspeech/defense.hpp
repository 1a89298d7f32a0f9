#pragma once

#include <cstdint>
#include <vector>

#include "advspeech/asr.hpp"
#include "advspeech/attack.hpp"
#include "advspeech/denoiser.hpp"

namespace advspeech {

enum class FinetuneVariant { kAsrOnly, kJoint, kJointFrozen };

struct FinetuneConfig {
  std::int64_t epochs = 3;
  std::int64_t pgd_iterations = 7;
  // Per-minibatch Linf budget sampled log-uniformly from [eps_min, eps_max];
  // eps_max <= 0 disables the inner attack (delta = 0).
  double eps_min = 1e-4;
  double eps_max = 0.02;
  float lr = 1e-4f;  // outer step, one tenth of the clean-training default
  std::uint64_t seed = 0;
};

struct FinetuneLog {
  std::vector<double> epoch_loss;
};

// Adversarial fine-tuning: per minibatch, run untargeted PGD ascent on the
// training loss against the current chain, then take an optimizer step on
// the loss at x + delta. All variants refuse models that were never trained
// on clean data. update_theta/update_phi select which parameter set the
// outer minimizer touches; the inner attack always differentiates through
// every stage present in the chain.
FinetuneLog adv_finetune(DenoiserModel* denoiser, AsrModel& asr,
                         const std::vector<Utterance>& corpus, const FinetuneConfig& cfg,
                         bool update_theta, bool update_phi);

// Eq-style wrappers for the three evaluated variants.
FinetuneLog adv_finetune_asr(AsrModel& asr, const std::vector<Utterance>& corpus,
                             const FinetuneConfig& cfg);
FinetuneLog adv_finetune_joint(DenoiserModel& denoiser, AsrModel& asr,
                               const std::vector<Utterance>& corpus, const FinetuneConfig& cfg);
// Updates only the denoiser; the recognizer is bit-identical afterwards.
FinetuneLog adv_finetune_joint_frozen(DenoiserModel& denoiser, AsrModel& asr,
                                      const std::vector<Utterance>& corpus,
                                      const FinetuneConfig& cfg);

}  // namespace advspeech
