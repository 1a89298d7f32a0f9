#include "advspeech/smoothing.hpp"

#include <stdexcept>

namespace advspeech {

std::vector<float> smooth(const std::vector<float>& x, const SmoothingConfig& cfg, Rng& rng) {
  if (cfg.sigma < 0.0) throw std::invalid_argument("smooth: sigma must be >= 0");
  if (cfg.sigma == 0.0) return x;
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = x[i] + static_cast<float>(cfg.sigma * rng.normal());
  }
  return out;
}

Tensor smooth(const Tensor& x, const SmoothingConfig& cfg, Rng& rng) {
  if (cfg.sigma < 0.0) throw std::invalid_argument("smooth: sigma must be >= 0");
  if (cfg.sigma == 0.0) return x;
  std::vector<float> noise(static_cast<std::size_t>(x.numel()));
  for (auto& v : noise) v = static_cast<float>(cfg.sigma * rng.normal());
  return add(x, Tensor::from(std::move(noise), x.shape()));
}

}  // namespace advspeech
