#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "advspeech/stft.hpp"
#include "advspeech/tensor.hpp"

namespace advspeech {

struct DenoiserConfig {
  std::int64_t enc_dim = 32;
  std::int64_t enc_kernel = 16;
  std::int64_t enc_stride = 8;
  std::int64_t separator_layers = 8;   // dilation doubles per layer
  std::int64_t separator_kernel = 3;

  static DenoiserConfig desk();         // default, trains in minutes
  static DenoiserConfig paper_shape();  // enc_dim 128, 16 layers
};

// Time-domain denoiser: conv encoder, dilated-conv separator with residual
// connections, sigmoid mask over the encodings, transposed-conv decoder.
// Output length always equals input length (reflect pad + trim).
class DenoiserModel {
 public:
  DenoiserModel() = default;
  DenoiserModel(const DenoiserConfig& cfg, std::uint64_t seed);

  // Pass-through model: denoise(x) returns x. Used for degenerate-equivalence
  // checks; carries no parameters.
  static DenoiserModel identity();
  bool is_identity() const { return identity_; }

  const DenoiserConfig& config() const { return cfg_; }
  std::int64_t trained_epochs() const { return trained_epochs_; }
  void set_trained_epochs(std::int64_t e) { trained_epochs_ = e; }

  std::vector<Tensor> parameters() const;
  void set_requires_grad(bool v);

  // x: [samples] -> [samples]; differentiable w.r.t. x and the parameters.
  Tensor denoise(const Tensor& x) const;

  DenoiserModel deep_clone() const;

  void save(const std::filesystem::path& dir) const;
  static DenoiserModel load(const std::filesystem::path& dir);

 private:
  DenoiserConfig cfg_;
  bool identity_ = false;
  std::int64_t trained_epochs_ = 0;
  Tensor enc_w_;                  // [enc_dim, 1, enc_kernel]
  std::vector<Tensor> sep_w_;     // per layer [enc_dim, enc_dim, k]
  std::vector<Tensor> sep_b_;
  Tensor mask_w_;                 // [enc_dim, enc_dim, 1]
  Tensor mask_b_;
  Tensor dec_w_;                  // [enc_dim, 1, enc_kernel]
};

struct DenoiserTrainOptions {
  std::int64_t epochs = 10;
  float lr = 1e-3f;
  std::uint64_t seed = 0;
  MrStftConfig loss_cfg = MrStftConfig::default_config();
};

struct WaveformPair {
  std::vector<float> clean;     // benign target
  std::vector<float> degraded;  // attacked input
};

// Offline deep-regression training: minimizes the mean multi-resolution STFT
// loss between the clean target and the denoised degraded input.
std::vector<double> train_denoiser_offline(DenoiserModel& model,
                                           const std::vector<WaveformPair>& pairs,
                                           const DenoiserTrainOptions& opts);

}  // namespace advspeech
