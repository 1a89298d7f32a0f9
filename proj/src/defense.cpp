#include "advspeech/defense.hpp"

#include <stdexcept>

#include "advspeech/rng.hpp"

namespace advspeech {

FinetuneLog adv_finetune(DenoiserModel* denoiser, AsrModel& asr,
                         const std::vector<Utterance>& corpus, const FinetuneConfig& cfg,
                         bool update_theta, bool update_phi) {
  if (corpus.empty()) throw std::invalid_argument("adv_finetune: empty corpus");
  if (cfg.lr <= 0.0f) throw std::invalid_argument("adv_finetune: lr must be > 0");
  if (asr.trained_epochs() == 0) {
    throw std::invalid_argument("adv_finetune: recognizer must be pre-trained on clean data");
  }
  if (denoiser && denoiser->trained_epochs() == 0) {
    throw std::invalid_argument("adv_finetune: denoiser must be pre-trained");
  }
  if (update_phi && (!denoiser || denoiser->is_identity())) {
    throw std::invalid_argument("adv_finetune: no denoiser parameters to update");
  }
  if (!update_theta && !update_phi) {
    throw std::invalid_argument("adv_finetune: nothing to update");
  }

  ModelChain chain;
  chain.denoiser = denoiser;
  chain.asr = &asr;  // no smoothing stage during fine-tuning

  std::vector<Tensor> params;
  if (update_theta) {
    for (const Tensor& p : asr.parameters()) params.push_back(p);
  }
  if (update_phi) {
    for (const Tensor& p : denoiser->parameters()) params.push_back(p);
  }
  // Gradients flow only into the updated set; the rest stays untouched by
  // the optimizer even though the inner attack differentiates through it.
  asr.set_requires_grad(true);
  if (denoiser) denoiser->set_requires_grad(true);

  Rng rng(Rng::mix(cfg.seed, "adv-finetune"));
  Adam adam(cfg.lr);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  FinetuneLog log;

  for (std::int64_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (const std::size_t idx : order) {
      const Utterance& utt = corpus[idx];
      std::vector<float> attacked = utt.waveform;
      if (cfg.eps_max > 0.0) {
        AttackSpec spec;
        spec.norm = Norm::kLinf;
        spec.epsilon = rng.log_uniform(cfg.eps_min, cfg.eps_max);
        spec.iterations = cfg.pgd_iterations;
        spec.mode = AttackMode::kUntargeted;
        const std::uint64_t attack_seed = rng.next_u64();
        // The inner maximizer only needs input gradients.
        asr.set_requires_grad(false);
        if (denoiser) denoiser->set_requires_grad(false);
        try {
          attacked = pgd(chain, utt.waveform, utt.frame_labels, spec, attack_seed).adversarial;
        } catch (const AttackError& e) {
          throw std::runtime_error("adv_finetune: inner attack diverged on utt " + utt.id +
                                   ": " + e.what());
        }
        asr.set_requires_grad(true);
        if (denoiser) denoiser->set_requires_grad(true);
      }

      Tensor x = Tensor::from(attacked, {static_cast<std::int64_t>(attacked.size())});
      float loss_val = 0.0f;
      Rng fwd_rng(0);  // chain has no stochastic stage here
      try {
        Tape tape;
        Tensor loss = asr_loss(chain.forward(x, fwd_rng), utt.frame_labels);
        loss_val = loss.item();
        zero_grads(params);
        tape.backward(loss);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("adv_finetune: diverged at epoch " + std::to_string(epoch) +
                                 " utt " + utt.id + ": " + e.what());
      }
      adam.step(params);
      total += loss_val;
    }
    log.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
  }
  return log;
}

FinetuneLog adv_finetune_asr(AsrModel& asr, const std::vector<Utterance>& corpus,
                             const FinetuneConfig& cfg) {
  return adv_finetune(nullptr, asr, corpus, cfg, /*update_theta=*/true, /*update_phi=*/false);
}

FinetuneLog adv_finetune_joint(DenoiserModel& denoiser, AsrModel& asr,
                               const std::vector<Utterance>& corpus, const FinetuneConfig& cfg) {
  return adv_finetune(&denoiser, asr, corpus, cfg, /*update_theta=*/true, /*update_phi=*/true);
}

FinetuneLog adv_finetune_joint_frozen(DenoiserModel& denoiser, AsrModel& asr,
                                      const std::vector<Utterance>& corpus,
                                      const FinetuneConfig& cfg) {
  return adv_finetune(&denoiser, asr, corpus, cfg, /*update_theta=*/false, /*update_phi=*/true);
}

}  // namespace advspeech
