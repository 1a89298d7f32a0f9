#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace advspeech {

using Transcript = std::vector<std::string>;

// Lowercase, strip punctuation except '$' and digits, whitespace tokenization.
Transcript normalize_text(const std::string& text);
std::string join_words(const Transcript& words);

struct EditCounts {
  std::int64_t substitutions = 0;
  std::int64_t insertions = 0;
  std::int64_t deletions = 0;
  std::int64_t ref_len = 0;

  std::int64_t errors() const { return substitutions + insertions + deletions; }
  double wer_percent() const {
    return 100.0 * static_cast<double>(errors()) / static_cast<double>(ref_len);
  }
  EditCounts& operator+=(const EditCounts& o) {
    substitutions += o.substitutions;
    insertions += o.insertions;
    deletions += o.deletions;
    ref_len += o.ref_len;
    return *this;
  }
};

// Levenshtein word distance with unit costs; cost-equal alignments prefer
// substitutions over insertion+deletion pairs. Errors on empty reference.
EditCounts wer(const Transcript& ref, const Transcript& hyp);

// The four transcript roles; target/adversarial present only under attack.
struct TranscriptSet {
  Transcript actual;
  Transcript benign;
  std::optional<Transcript> target;
  std::optional<Transcript> adversarial;
};

// Pooled counts for one (system, attack, epsilon) cell. WERs pool S/I/D and
// reference lengths across utterances rather than averaging per-utterance.
struct WerReport {
  EditCounts benign;                 // WER(actual, benign decode)
  EditCounts ground_truth;           // WER(actual, adversarial decode)
  std::optional<EditCounts> target;  // WER(target, adversarial decode); targeted only
  std::int64_t n_utts = 0;
  std::int64_t n_failed = 0;  // attack failures; cell is partial when > 0

  double benign_wer() const { return benign.wer_percent(); }
  double gt_wer() const { return ground_truth.wer_percent(); }
};

struct BoxplotStats {
  std::string system;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::int64_t n_settings = 0;
};

// Nearest-rank quartiles of GT WER per system, one sample per attack setting.
// Settings with epsilon == exclude_epsilon are dropped when exclusion is set.
struct SystemCell {
  std::string system;
  double epsilon = 0;
  double gt_wer = 0;
};
std::vector<BoxplotStats> summarize_boxplot(const std::vector<SystemCell>& cells,
                                            std::optional<double> exclude_epsilon);

}  // namespace advspeech
