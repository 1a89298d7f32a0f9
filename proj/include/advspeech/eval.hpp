#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "advspeech/attack.hpp"
#include "advspeech/corpus.hpp"
#include "advspeech/wer.hpp"

namespace advspeech {

// Runs fn(i) for i in [0, n) across the given number of workers. Results
// must be written into per-index slots; the first exception is rethrown.
void parallel_for(std::int64_t n, int workers, const std::function<void(std::int64_t)>& fn);

// One (system, attack, epsilon) cell of the evaluation protocol: per
// utterance, decode benign audio, craft the attack, decode the adversarial
// audio, and pool S/I/D counts over the split. craft_chain lets a
// non-adaptive attacker target a reduced chain; nullptr means fully
// adaptive (craft against eval_chain). Targets are required for targeted
// specs, one per utterance. Attack failures mark the cell partial.
WerReport evaluate_cell(const ModelChain& eval_chain, const ModelChain* craft_chain,
                        const std::vector<Utterance>& split,
                        const std::vector<Transcript>& targets, const AttackSpec& spec,
                        const CorpusConfig& corpus_cfg, const Vocab& vocab, std::uint64_t seed,
                        int workers);

// Benign-only WER of a chain over a split (no attack).
EditCounts benign_wer_counts(const ModelChain& chain, const std::vector<Utterance>& split,
                             std::uint64_t seed, int workers);

}  // namespace advspeech
