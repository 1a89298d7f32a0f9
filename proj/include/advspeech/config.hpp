#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "advspeech/corpus.hpp"
#include "advspeech/defense.hpp"
#include "advspeech/denoiser.hpp"

namespace advspeech {

// All knobs for the experiment pipeline, grouped per module. Parsed from a
// sectioned key=value file; unknown sections or keys are hard errors.
struct ExperimentConfig {
  CorpusConfig corpus;

  struct AsrSection {
    std::int64_t conv_channels = 32;
    std::int64_t conv_layers = 3;
    std::int64_t kernel = 5;
    std::int64_t epochs = 12;
    float lr = 1e-3f;
    bool checkpoint_averaging = true;
    std::uint64_t seed = 52;
  } asr;

  struct DenoiserSection {
    std::string preset = "desk";  // desk | paper-shape
    std::int64_t epochs = 10;
    float lr = 1e-3f;
    std::uint64_t seed = 7;
  } denoiser;

  struct AttacksSection {
    std::int64_t n_pairs = 300;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 99;
  } attacks;

  struct FinetuneSection {
    std::int64_t epochs = 3;
    std::int64_t pgd_iterations = 7;
    double eps_min = 1e-4;
    double eps_max = 0.02;
    double lr_divisor = 10.0;  // outer lr = asr.lr / lr_divisor
    std::uint64_t seed = 31;
  } finetune;

  struct SmoothingSection {
    double sigma = 0.001;
  } smoothing;

  struct EvaluateSection {
    std::vector<double> epsilons{0.0001, 0.001, 0.01, 0.1, 0.2};
    std::int64_t pgd_iterations = 7;
    std::vector<double> long_epsilons{0.01, 0.1};
    std::int64_t long_iterations = 100;
    std::vector<std::string> systems{"baseline",   "rs",          "denoiser",
                                     "advft_asr",  "advft_joint", "advft_joint_frozen"};
    std::optional<double> boxplot_exclude_epsilon = 0.2;
    std::uint64_t seed = 405;
  } evaluate;

  AsrConfig asr_config() const;
  DenoiserConfig denoiser_config() const;
  FinetuneConfig finetune_config() const;

  // Re-derives every stage seed from one master seed.
  void override_seeds(std::uint64_t master);

  std::string to_ini() const;
  static ExperimentConfig from_ini(const std::string& text);
  static ExperimentConfig from_file(const std::filesystem::path& path);
};

}  // namespace advspeech
