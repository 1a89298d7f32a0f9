#pragma once

#include <cstdint>
#include <vector>

#include "advspeech/rng.hpp"
#include "advspeech/tensor.hpp"

namespace advspeech {

enum class SeedPolicy { kFreshPerCall, kFixedPerUtterance };

// Randomized-smoothing stage: x + sigma * eta, eta ~ N(0, I).
// sigma = 0 degenerates to the identity (no draws consumed).
struct SmoothingConfig {
  double sigma = 0.0;
  SeedPolicy seed_policy = SeedPolicy::kFreshPerCall;
};

std::vector<float> smooth(const std::vector<float>& x, const SmoothingConfig& cfg, Rng& rng);

// Tape-friendly variant: adds the drawn noise as a constant tensor, so the
// gradient w.r.t. x is the identity (the attacker sees through this stage).
Tensor smooth(const Tensor& x, const SmoothingConfig& cfg, Rng& rng);

}  // namespace advspeech
