#include "advspeech/attack.hpp"

#include <algorithm>
#include <cmath>

namespace advspeech {

void validate(const AttackSpec& spec) {
  if (spec.epsilon <= 0.0) throw std::invalid_argument("attack: epsilon must be > 0");
  if (spec.iterations < 1) throw std::invalid_argument("attack: iterations must be >= 1");
  if (spec.effective_step() <= 0.0) throw std::invalid_argument("attack: step must be > 0");
}

Tensor ModelChain::forward(const Tensor& x, Rng& rng) const {
  if (!asr) throw std::invalid_argument("chain: recognizer is required");
  Tensor h = x;
  if (denoiser) h = denoiser->denoise(h);
  h = smooth(h, smoothing, rng);
  return asr->forward(h);
}

Transcript ModelChain::transcribe(const std::vector<float>& x, Rng& rng) const {
  Tensor xt = Tensor::from(x, {static_cast<std::int64_t>(x.size())});
  return decode(forward(xt, rng), asr->vocab());
}

double linf_norm(const std::vector<float>& v) {
  double m = 0.0;
  for (const float x : v) m = std::max(m, static_cast<double>(std::fabs(x)));
  return m;
}

double l2_norm(const std::vector<float>& v) {
  double acc = 0.0;
  for (const float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc);
}

std::vector<float> project_l2(std::vector<float> delta, double epsilon) {
  const double norm = l2_norm(delta);
  if (norm <= epsilon || norm == 0.0) return delta;
  const auto scale = static_cast<float>(epsilon / norm);
  for (auto& v : delta) v *= scale;
  return delta;
}

AttackResult pgd(const ModelChain& chain, const std::vector<float>& x,
                 const std::vector<std::int64_t>& labels, const AttackSpec& spec,
                 std::uint64_t seed) {
  validate(spec);
  if (!chain.asr) throw std::invalid_argument("pgd: chain has no recognizer");
  const auto n = x.size();
  const auto eps = static_cast<float>(spec.epsilon);
  const float alpha = static_cast<float>(spec.effective_step());
  // Untargeted attacks ascend the ground-truth loss; targeted ones descend
  // toward the adversary's labels.
  const float dir = spec.mode == AttackMode::kTargeted ? -1.0f : 1.0f;
  Rng rng(Rng::mix(seed, "pgd"));

  std::vector<float> delta(n, 0.0f);
  for (std::int64_t it = 0; it < spec.iterations; ++it) {
    std::vector<float> candidate(n);
    for (std::size_t i = 0; i < n; ++i) candidate[i] = x[i] + delta[i];
    Tensor input = Tensor::from(candidate, {static_cast<std::int64_t>(n)});
    input.set_requires_grad(true);

    Tape tape;
    Tensor loss = asr_loss(chain.forward(input, rng), labels);
    tape.backward(loss);
    const auto grad = input.grad();
    for (const float g : grad) {
      if (!std::isfinite(g)) {
        throw AttackError("pgd: non-finite gradient at iteration " + std::to_string(it));
      }
    }

    if (spec.norm == Norm::kLinf) {
      for (std::size_t i = 0; i < n; ++i) {
        const float g = grad[i];
        const float s = g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f);
        delta[i] = std::clamp(delta[i] + dir * alpha * s, -eps, eps);
      }
    } else {
      const double gnorm = l2_norm(std::vector<float>(grad.begin(), grad.end()));
      if (gnorm > 0.0) {
        const auto scale = static_cast<float>(1.0 / gnorm);
        for (std::size_t i = 0; i < n; ++i) delta[i] += dir * alpha * grad[i] * scale;
      }
      delta = project_l2(std::move(delta), spec.epsilon);
    }
    if (spec.clamp_audio) {
      // Clamp the waveform, not the raw delta; this only shrinks |delta|,
      // so the norm bound still holds afterwards.
      for (std::size_t i = 0; i < n; ++i) {
        delta[i] = std::clamp(x[i] + delta[i], -1.0f, 1.0f) - x[i];
      }
    }
  }

  AttackResult res;
  res.delta = std::move(delta);
  res.adversarial.resize(n);
  for (std::size_t i = 0; i < n; ++i) res.adversarial[i] = x[i] + res.delta[i];
  return res;
}

AttackResult fgsm(const ModelChain& chain, const std::vector<float>& x,
                  const std::vector<std::int64_t>& labels, double epsilon,
                  std::uint64_t seed) {
  return pgd(chain, x, labels, AttackSpec::fgsm(epsilon), seed);
}

}  // namespace advspeech
