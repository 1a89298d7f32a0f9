#include "advspeech/eval.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "advspeech/rng.hpp"

namespace advspeech {

void parallel_for(std::int64_t n, int workers, const std::function<void(std::int64_t)>& fn) {
  if (workers < 1) workers = 1;
  if (workers == 1 || n <= 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::int64_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  std::vector<std::thread> pool;
  const auto worker = [&] {
    for (;;) {
      const std::int64_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        return;
      }
    }
  };
  for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

struct UttOutcome {
  EditCounts benign;
  EditCounts ground_truth;
  EditCounts target;
  bool failed = false;
};

}  // namespace

WerReport evaluate_cell(const ModelChain& eval_chain, const ModelChain* craft_chain,
                        const std::vector<Utterance>& split,
                        const std::vector<Transcript>& targets, const AttackSpec& spec,
                        const CorpusConfig& corpus_cfg, const Vocab& vocab, std::uint64_t seed,
                        int workers) {
  validate(spec);
  const bool targeted = spec.mode == AttackMode::kTargeted;
  if (targeted && targets.size() != split.size()) {
    throw std::invalid_argument("evaluate_cell: targeted spec needs one target per utterance");
  }
  if (!eval_chain.asr || eval_chain.asr->trained_epochs() == 0) {
    throw std::invalid_argument("evaluate_cell: chain must hold a trained recognizer");
  }
  const ModelChain& crafting = craft_chain ? *craft_chain : eval_chain;

  std::vector<UttOutcome> outcomes(split.size());
  parallel_for(static_cast<std::int64_t>(split.size()), workers, [&](std::int64_t i) {
    const Utterance& utt = split[static_cast<std::size_t>(i)];
    UttOutcome& out = outcomes[static_cast<std::size_t>(i)];
    Rng rng(Rng::mix(seed, utt.id));

    const Transcript benign_hyp = eval_chain.transcribe(utt.waveform, rng);
    out.benign = wer(utt.words, benign_hyp);

    std::vector<std::int64_t> labels;
    if (targeted) {
      labels = render_target_labels(corpus_cfg, vocab, targets[static_cast<std::size_t>(i)],
                                    static_cast<std::int64_t>(utt.frame_labels.size()));
    } else {
      labels = utt.frame_labels;
    }
    const std::uint64_t attack_seed = rng.next_u64();
    AttackResult attacked;
    try {
      attacked = pgd(crafting, utt.waveform, labels, spec, attack_seed);
    } catch (const AttackError&) {
      out.failed = true;
      return;
    }
    const Transcript adv_hyp = eval_chain.transcribe(attacked.adversarial, rng);
    out.ground_truth = wer(utt.words, adv_hyp);
    if (targeted) {
      out.target = wer(targets[static_cast<std::size_t>(i)], adv_hyp);
    }
  });

  WerReport report;
  if (targeted) report.target = EditCounts{};
  for (const UttOutcome& out : outcomes) {
    if (out.failed) {
      ++report.n_failed;
      continue;
    }
    report.benign += out.benign;
    report.ground_truth += out.ground_truth;
    if (targeted) *report.target += out.target;
    ++report.n_utts;
  }
  return report;
}

EditCounts benign_wer_counts(const ModelChain& chain, const std::vector<Utterance>& split,
                             std::uint64_t seed, int workers) {
  std::vector<EditCounts> counts(split.size());
  parallel_for(static_cast<std::int64_t>(split.size()), workers, [&](std::int64_t i) {
    const Utterance& utt = split[static_cast<std::size_t>(i)];
    Rng rng(Rng::mix(seed, utt.id));
    counts[static_cast<std::size_t>(i)] = wer(utt.words, chain.transcribe(utt.waveform, rng));
  });
  EditCounts total;
  for (const EditCounts& c : counts) total += c;
  return total;
}

}  // namespace advspeech
