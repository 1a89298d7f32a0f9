#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "advspeech/asr.hpp"
#include "advspeech/attack.hpp"
#include "advspeech/rng.hpp"

namespace advspeech {

struct CorpusConfig {
  std::int64_t vocab_size = 20;  // including SIL
  std::int64_t n_train = 500;
  std::int64_t n_test = 100;
  std::int64_t words_min = 3;
  std::int64_t words_max = 8;
  std::int64_t word_duration_frames = 6;
  std::int64_t gap_frames = 4;
  std::int64_t sample_rate = 8000;
  std::int64_t frame_shift = 16;  // samples per posterior frame
  std::int64_t frame_len = 64;
  double target_rms = 0.1;
  // The attack grids are calibrated against signals at this RMS; budgets are
  // rescaled by target_rms / reference_rms before use.
  double reference_rms = 0.1;
  double snr_db = 20.0;
  std::uint64_t seed = 1234;
};

// Synthetic speech-like corpus. Every word maps to a fixed two-sinusoid
// motif laid out on a fixed frame cadence, so exact frame alignments come
// for free and the collapse invariant holds by construction.
struct Corpus {
  CorpusConfig config;
  Vocab vocab;
  std::vector<Utterance> train;
  std::vector<Utterance> test;

  double epsilon_scale() const { return config.target_rms / config.reference_rms; }

  void save(const std::filesystem::path& dir) const;
  static Corpus load(const std::filesystem::path& dir);
};

Corpus synthesize_corpus(const CorpusConfig& cfg);

// Waveform sample count for an utterance with this many posterior frames.
std::int64_t samples_for_frames(const CorpusConfig& cfg, std::int64_t n_frames);

// Frame labels for a word sequence at the synthesis cadence:
// gap, word, gap, word, ..., gap.
std::vector<std::int64_t> layout_frame_labels(const CorpusConfig& cfg, const Vocab& vocab,
                                              const Transcript& words);

// Same cadence as synthesis, padded or truncated with SIL to n_frames; used
// to align a target phrase against an existing utterance for the framewise
// attack loss.
std::vector<std::int64_t> render_target_labels(const CorpusConfig& cfg, const Vocab& vocab,
                                               const Transcript& target, std::int64_t n_frames);

// Uniform choice among pool transcripts whose length is within +/-20%
// (rounded) of the utterance's own, excluding the utterance's transcript;
// the tolerance widens by 10% steps until a candidate exists.
Transcript assign_target(const Utterance& utt, const std::vector<Transcript>& pool,
                         std::uint64_t seed);

// ---- offline attack dataset ----

struct AttackGrid {
  std::vector<double> l2_budgets{0.2, 0.5, 1.5, 1.9};
  std::vector<double> linf_budgets{0.001, 0.01, 0.1};
  std::vector<std::int64_t> iterations{10, 20, 50, 100, 200};
};

struct OfflineAttackOptions {
  std::int64_t n_pairs = 300;
  AttackGrid grid;
  std::uint64_t seed = 99;
};

// Draw from an ascending grid with weight proportional to 1 + rank, the
// declared bias law toward high norms and high iteration counts.
template <typename T>
T rank_biased_pick(const std::vector<T>& sorted_grid, Rng& rng) {
  double total = 0.0;
  for (std::size_t i = 0; i < sorted_grid.size(); ++i) total += static_cast<double>(i + 1);
  double r = rng.uniform() * total;
  for (std::size_t i = 0; i < sorted_grid.size(); ++i) {
    r -= static_cast<double>(i + 1);
    if (r < 0.0) return sorted_grid[i];
  }
  return sorted_grid.back();
}

struct AttackRow {
  std::string utt_id;
  Norm norm = Norm::kLinf;
  double epsilon = 0.0;            // grid value
  double effective_epsilon = 0.0;  // after corpus-scale calibration
  std::int64_t iterations = 0;
  std::uint64_t seed = 0;
  std::string delta_path;  // relative to the dataset root
  std::string target_text;
};

struct AttackDataset {
  std::filesystem::path root;
  double epsilon_scale = 1.0;
  std::vector<AttackRow> rows;

  std::vector<float> load_delta(const AttackRow& row) const;

  void save_manifest() const;
  static AttackDataset load(const std::filesystem::path& dir);
};

// Targeted PGD rows over the training split: per row, sample a norm family
// (even odds), then budget and iteration count from the grids with weights
// proportional to 1 + rank (ascending), the declared reading of "more bias
// towards high norm and high iteration". Rows that fail are logged and
// skipped. Deterministic per (seed, row index).
AttackDataset generate_offline_attacks(const ModelChain& chain, const Corpus& corpus,
                                       const std::filesystem::path& out_dir,
                                       const OfflineAttackOptions& opts);

// Benign/degraded waveform pairs for denoiser training.
std::vector<WaveformPair> dataset_pairs(const AttackDataset& dataset, const Corpus& corpus,
                                        const std::vector<AttackRow>& rows);

}  // namespace advspeech
