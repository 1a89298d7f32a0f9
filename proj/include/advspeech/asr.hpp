#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advspeech/stft.hpp"
#include "advspeech/tensor.hpp"
#include "advspeech/wer.hpp"

namespace advspeech {

// Word inventory. Index 0 is always the SIL silence token.
class Vocab {
 public:
  static constexpr std::int64_t kSil = 0;
  static constexpr const char* kSilToken = "<sil>";

  Vocab() = default;
  explicit Vocab(std::vector<std::string> words);  // content words, SIL prepended

  std::int64_t size() const { return static_cast<std::int64_t>(tokens_.size()); }
  const std::string& token(std::int64_t index) const { return tokens_.at(static_cast<std::size_t>(index)); }
  std::int64_t index(const std::string& token) const;  // throws on unknown token
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
};

struct Utterance {
  std::string id;
  std::vector<float> waveform;            // mono samples in [-1, 1]
  Transcript words;
  std::vector<std::int64_t> frame_labels; // one token index per posterior frame
};

// Merge consecutive repeats, drop SIL.
Transcript collapse_frame_labels(const std::vector<std::int64_t>& labels, const Vocab& vocab);

struct AsrConfig {
  StftConfig frontend{64, 16, Window::kHann};
  std::int64_t conv_channels = 32;
  std::int64_t conv_layers = 3;
  std::int64_t kernel = 5;
};

// Differentiable recognizer: log-magnitude STFT frontend, a stack of 1-D
// conv layers with relu, linear projection, log-softmax per frame.
class AsrModel {
 public:
  AsrModel() = default;
  AsrModel(const Vocab& vocab, const AsrConfig& cfg, std::uint64_t seed);

  const Vocab& vocab() const { return vocab_; }
  const AsrConfig& config() const { return cfg_; }
  std::int64_t frame_rate() const { return cfg_.frontend.frame_shift; }
  std::int64_t trained_epochs() const { return trained_epochs_; }
  void set_trained_epochs(std::int64_t e) { trained_epochs_ = e; }

  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool v);

  // Posterior frame count for a waveform of this length.
  std::int64_t frames_for(std::int64_t samples) const;

  // x: [samples] -> log posteriors [frames, vocab]
  Tensor forward(const Tensor& x) const;

  AsrModel deep_clone() const;

  void save(const std::filesystem::path& dir) const;
  static AsrModel load(const std::filesystem::path& dir);

 private:
  Vocab vocab_;
  AsrConfig cfg_;
  std::int64_t trained_epochs_ = 0;
  std::vector<Tensor> conv_w_;  // per layer [out, in, k]
  std::vector<Tensor> conv_b_;  // per layer [out]
  Tensor proj_w_;               // [channels, vocab]
  Tensor proj_b_;               // [vocab]
};

// Mean framewise cross entropy of the labels under the log posteriors.
Tensor asr_loss(const Tensor& log_posteriors, const std::vector<std::int64_t>& frame_labels);

// Per-frame argmax (ties toward the lower index), collapse repeats, drop SIL.
Transcript decode(const Tensor& log_posteriors, const Vocab& vocab);

struct TrainOptions {
  std::int64_t epochs = 12;
  float lr = 1e-3f;
  std::uint64_t seed = 0;
  bool average_last_checkpoints = true;  // average the last min(5, epochs)
  std::int64_t max_checkpoint_window = 5;
};

struct TrainLog {
  std::vector<double> epoch_loss;
};

// Single-worker minibatch training (one utterance per step). Deterministic
// under a fixed seed; aborts with a diagnostic if the loss diverges.
TrainLog train_asr(AsrModel& model, const std::vector<Utterance>& corpus, const TrainOptions& opts);

}  // namespace advspeech
