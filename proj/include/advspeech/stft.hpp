#pragma once

#include <cstdint>
#include <vector>

#include "advspeech/tensor.hpp"

namespace advspeech {

enum class Window { kRectangular, kHann };

struct StftConfig {
  std::int64_t frame_len = 64;
  std::int64_t frame_shift = 16;
  Window window = Window::kHann;

  bool operator==(const StftConfig&) const = default;
};

// Resolutions for the multi-resolution loss; all entries must be distinct.
struct MrStftConfig {
  std::vector<StftConfig> resolutions;

  static MrStftConfig default_config();
};

void validate(const StftConfig& cfg);
void validate(const MrStftConfig& cfg);

struct Spectrogram {
  Tensor real;  // [frames, bins]
  Tensor imag;
  std::int64_t frames() const { return real.dim(0); }
  std::int64_t bins() const { return real.dim(1); }
};

// Windowed frames times precomputed DFT matrices, so gradients flow to x.
// frames = 1 + floor((len - frame_len)/frame_shift), bins = frame_len/2 + 1.
Spectrogram stft(const Tensor& x, const StftConfig& cfg);

// |STFT| with the squared magnitude clamped away from zero so the sqrt
// stays differentiable on silence.
Tensor stft_magnitude(const Tensor& x, const StftConfig& cfg);

// ||(|X| - |X_hat|)||_F / ||(|X|)||_F. Errors if the reference is ~zero.
Tensor spectral_convergence(const Tensor& x, const Tensor& x_hat, const StftConfig& cfg);

// mean over all N = frames*bins entries of | log|X| - log|X_hat| |
Tensor log_magnitude_loss(const Tensor& x, const Tensor& x_hat, const StftConfig& cfg);

// sum over resolutions of (spectral convergence + log magnitude). The first
// argument is the fixed target; only x_hat is meant to carry gradients.
Tensor mrstft_loss(const Tensor& x, const Tensor& x_hat, const MrStftConfig& cfg);

}  // namespace advspeech
