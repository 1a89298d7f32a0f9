#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "advspeech/asr.hpp"
#include "advspeech/denoiser.hpp"
#include "advspeech/smoothing.hpp"
#include "advspeech/tensor.hpp"

namespace advspeech {

enum class Norm { kLinf, kL2 };
enum class AttackMode { kTargeted, kUntargeted };

struct AttackSpec {
  Norm norm = Norm::kLinf;
  double epsilon = 0.01;
  std::int64_t iterations = 7;
  double step = 0.0;  // 0 means the default epsilon/5
  AttackMode mode = AttackMode::kTargeted;
  bool clamp_audio = true;

  double effective_step() const { return step > 0.0 ? step : epsilon / 5.0; }

  static AttackSpec fgsm(double epsilon) {
    AttackSpec s;
    s.norm = Norm::kLinf;
    s.epsilon = epsilon;
    s.iterations = 1;
    s.step = epsilon;
    return s;
  }
};

void validate(const AttackSpec& spec);

// Forward composition denoiser -> smoothing noise -> recognizer. The
// recognizer is required; both forward passes and attack gradients flow
// through every stage that is present. To model a non-adaptive attacker,
// craft the attack against a different (reduced) chain.
struct ModelChain {
  const DenoiserModel* denoiser = nullptr;
  SmoothingConfig smoothing;  // sigma 0 disables the stage
  const AsrModel* asr = nullptr;

  Tensor forward(const Tensor& x, Rng& rng) const;
  // Convenience: decode a raw waveform through the chain.
  Transcript transcribe(const std::vector<float>& x, Rng& rng) const;
};

struct AttackResult {
  std::vector<float> adversarial;  // x + delta (clamped if configured)
  std::vector<float> delta;
};

class AttackError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Projected gradient descent under the spec's norm. Targeted mode descends
// the loss toward the given labels; untargeted mode ascends the loss on
// them. After every iteration the declared norm of delta is within budget,
// and x + delta is clamped to [-1, 1] when clamp_audio is set. A smoothing
// stage, when present, draws fresh noise every iteration from the seeded
// stream. Throws AttackError on a non-finite gradient.
AttackResult pgd(const ModelChain& chain, const std::vector<float>& x,
                 const std::vector<std::int64_t>& labels, const AttackSpec& spec,
                 std::uint64_t seed);

// Single iteration of PGD with step = epsilon.
AttackResult fgsm(const ModelChain& chain, const std::vector<float>& x,
                  const std::vector<std::int64_t>& labels, double epsilon,
                  std::uint64_t seed);

// Scale delta onto the L2 ball of radius epsilon (no-op inside the ball).
std::vector<float> project_l2(std::vector<float> delta, double epsilon);

double linf_norm(const std::vector<float>& v);
double l2_norm(const std::vector<float>& v);

}  // namespace advspeech
