#include "advspeech/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "advspeech/io.hpp"
#include "advspeech/rng.hpp"

namespace advspeech {

using nlohmann::json;

namespace {

// Two STFT-bin-aligned partials per word; bins stay clear of DC and Nyquist.
// The pair is unique per word for any vocab that fits the bin range.
std::pair<std::int64_t, std::int64_t> motif_bins(std::int64_t word_idx, std::int64_t frame_len) {
  const std::int64_t span = frame_len / 2 - 3;  // usable bins: 2 .. frame_len/2 - 2
  const std::int64_t i = word_idx - 1;          // content words start at vocab index 1
  const std::int64_t b1 = 2 + (i % span);
  std::int64_t b2 = 2 + ((5 * i + 3) % span);
  if (b2 == b1) b2 = 2 + ((b2 - 2 + 1) % span);
  return {b1, b2};
}

void write_motif(std::vector<float>& wav, std::int64_t start_sample, std::int64_t n_samples,
                 std::int64_t word_idx, std::int64_t frame_len) {
  const auto [b1, b2] = motif_bins(word_idx, frame_len);
  const double w1 = 2.0 * M_PI * static_cast<double>(b1) / static_cast<double>(frame_len);
  const double w2 = 2.0 * M_PI * static_cast<double>(b2) / static_cast<double>(frame_len);
  for (std::int64_t n = 0; n < n_samples; ++n) {
    wav[static_cast<std::size_t>(start_sample + n)] +=
        static_cast<float>(std::sin(w1 * static_cast<double>(n)) +
                           0.6 * std::sin(w2 * static_cast<double>(n)));
  }
}

double rms(const std::vector<float>& v) {
  double acc = 0.0;
  for (const float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

std::vector<std::string> default_wordlist(std::int64_t n) {
  std::vector<std::string> words;
  for (std::int64_t i = 0; i < n; ++i) {
    std::ostringstream ss;
    ss << "w" << (i < 10 ? "0" : "") << i;
    words.push_back(ss.str());
  }
  return words;
}

Utterance synthesize_utterance(const CorpusConfig& cfg, const Vocab& vocab,
                               const std::string& id, Rng& rng) {
  const std::int64_t n_words = rng.uniform_int(cfg.words_min, cfg.words_max);
  Transcript words;
  for (std::int64_t i = 0; i < n_words; ++i) {
    words.push_back(vocab.token(rng.uniform_int(1, vocab.size() - 1)));
  }

  Utterance utt;
  utt.id = id;
  utt.words = words;
  utt.frame_labels = layout_frame_labels(cfg, vocab, words);
  const auto n_frames = static_cast<std::int64_t>(utt.frame_labels.size());
  utt.waveform.assign(static_cast<std::size_t>(samples_for_frames(cfg, n_frames)), 0.0f);

  std::int64_t frame = cfg.gap_frames;
  for (const std::string& w : words) {
    write_motif(utt.waveform, frame * cfg.frame_shift, cfg.word_duration_frames * cfg.frame_shift,
                vocab.index(w), cfg.frame_len);
    frame += cfg.word_duration_frames + cfg.gap_frames;
  }

  const double clean_rms = rms(utt.waveform);
  const double noise_sigma = clean_rms / std::pow(10.0, cfg.snr_db / 20.0);
  for (auto& s : utt.waveform) s += static_cast<float>(noise_sigma * rng.normal());

  const double scale = cfg.target_rms / rms(utt.waveform);
  for (auto& s : utt.waveform) {
    s = std::clamp(static_cast<float>(s * scale), -1.0f, 1.0f);
  }

  if (collapse_frame_labels(utt.frame_labels, vocab) != words) {
    throw std::logic_error("corpus: collapse invariant violated for " + id);
  }
  return utt;
}

}  // namespace

std::int64_t samples_for_frames(const CorpusConfig& cfg, std::int64_t n_frames) {
  return (n_frames - 1) * cfg.frame_shift + cfg.frame_len;
}

std::vector<std::int64_t> layout_frame_labels(const CorpusConfig& cfg, const Vocab& vocab,
                                              const Transcript& words) {
  std::vector<std::int64_t> labels;
  for (std::int64_t i = 0; i < cfg.gap_frames; ++i) labels.push_back(Vocab::kSil);
  for (const std::string& w : words) {
    const std::int64_t idx = vocab.index(w);
    for (std::int64_t i = 0; i < cfg.word_duration_frames; ++i) labels.push_back(idx);
    for (std::int64_t i = 0; i < cfg.gap_frames; ++i) labels.push_back(Vocab::kSil);
  }
  return labels;
}

std::vector<std::int64_t> render_target_labels(const CorpusConfig& cfg, const Vocab& vocab,
                                               const Transcript& target, std::int64_t n_frames) {
  std::vector<std::int64_t> labels = layout_frame_labels(cfg, vocab, target);
  labels.resize(static_cast<std::size_t>(n_frames), Vocab::kSil);
  return labels;
}

Corpus synthesize_corpus(const CorpusConfig& cfg) {
  if (cfg.vocab_size < 2) throw std::invalid_argument("corpus: vocab_size must be >= 2");
  if (cfg.words_min < 1 || cfg.words_max < cfg.words_min) {
    throw std::invalid_argument("corpus: bad words_per_utt range");
  }
  if (cfg.frame_shift <= 0 || cfg.frame_len <= 0 || cfg.word_duration_frames <= 0 ||
      cfg.gap_frames < 1) {
    throw std::invalid_argument("corpus: bad frame geometry");
  }
  Corpus corpus;
  corpus.config = cfg;
  corpus.vocab = Vocab(default_wordlist(cfg.vocab_size - 1));
  for (std::int64_t i = 0; i < cfg.n_train; ++i) {
    std::ostringstream id;
    id << "train_" << i;
    Rng rng(Rng::mix(cfg.seed, id.str()));
    corpus.train.push_back(synthesize_utterance(cfg, corpus.vocab, id.str(), rng));
  }
  for (std::int64_t i = 0; i < cfg.n_test; ++i) {
    std::ostringstream id;
    id << "test_" << i;
    Rng rng(Rng::mix(cfg.seed, id.str()));
    corpus.test.push_back(synthesize_utterance(cfg, corpus.vocab, id.str(), rng));
  }
  return corpus;
}

Transcript assign_target(const Utterance& utt, const std::vector<Transcript>& pool,
                         std::uint64_t seed) {
  if (pool.empty()) throw std::invalid_argument("assign_target: empty pool");
  const auto len = static_cast<double>(utt.words.size());
  double tol = 0.2;
  for (;; tol += 0.1) {
    const auto lo = static_cast<std::int64_t>(std::llround(len * (1.0 - tol)));
    const auto hi = static_cast<std::int64_t>(std::llround(len * (1.0 + tol)));
    std::vector<const Transcript*> candidates;
    for (const Transcript& t : pool) {
      const auto n = static_cast<std::int64_t>(t.size());
      if (n >= lo && n <= hi && t != utt.words) candidates.push_back(&t);
    }
    if (!candidates.empty()) {
      Rng rng(Rng::mix(seed, utt.id + "/target"));
      return *candidates[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
    }
    if (tol > 10.0) throw std::runtime_error("assign_target: no candidate for " + utt.id);
  }
}

// ---- persistence ----

void Corpus::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir / "wavs");
  json meta;
  meta["vocab_size"] = config.vocab_size;
  meta["n_train"] = config.n_train;
  meta["n_test"] = config.n_test;
  meta["words_min"] = config.words_min;
  meta["words_max"] = config.words_max;
  meta["word_duration_frames"] = config.word_duration_frames;
  meta["gap_frames"] = config.gap_frames;
  meta["sample_rate"] = config.sample_rate;
  meta["frame_shift"] = config.frame_shift;
  meta["frame_len"] = config.frame_len;
  meta["target_rms"] = config.target_rms;
  meta["reference_rms"] = config.reference_rms;
  meta["snr_db"] = config.snr_db;
  meta["seed"] = config.seed;
  meta["epsilon_scale"] = epsilon_scale();
  write_text_file(dir / "meta.json", meta.dump(2) + "\n");

  std::ofstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("corpus: cannot write manifest");
  const auto dump_split = [&](const std::vector<Utterance>& split, const std::string& name) {
    for (const Utterance& u : split) {
      const std::string rel = "wavs/" + u.id + ".aten";
      save_tensor(dir / rel,
                  Tensor::from(u.waveform, {static_cast<std::int64_t>(u.waveform.size())}));
      json row;
      row["utt_id"] = u.id;
      row["split"] = name;
      row["words"] = u.words;
      row["n_frames"] = u.frame_labels.size();
      row["wav"] = rel;
      manifest << row.dump() << "\n";
    }
  };
  dump_split(train, "train");
  dump_split(test, "test");
}

Corpus Corpus::load(const std::filesystem::path& dir) {
  const json meta = json::parse(read_text_file(dir / "meta.json"));
  Corpus corpus;
  corpus.config.vocab_size = meta.at("vocab_size").get<std::int64_t>();
  corpus.config.n_train = meta.at("n_train").get<std::int64_t>();
  corpus.config.n_test = meta.at("n_test").get<std::int64_t>();
  corpus.config.words_min = meta.at("words_min").get<std::int64_t>();
  corpus.config.words_max = meta.at("words_max").get<std::int64_t>();
  corpus.config.word_duration_frames = meta.at("word_duration_frames").get<std::int64_t>();
  corpus.config.gap_frames = meta.at("gap_frames").get<std::int64_t>();
  corpus.config.sample_rate = meta.at("sample_rate").get<std::int64_t>();
  corpus.config.frame_shift = meta.at("frame_shift").get<std::int64_t>();
  corpus.config.frame_len = meta.at("frame_len").get<std::int64_t>();
  corpus.config.target_rms = meta.at("target_rms").get<double>();
  corpus.config.reference_rms = meta.at("reference_rms").get<double>();
  corpus.config.snr_db = meta.at("snr_db").get<double>();
  corpus.config.seed = meta.at("seed").get<std::uint64_t>();
  corpus.vocab = Vocab(default_wordlist(corpus.config.vocab_size - 1));

  std::ifstream manifest(dir / "manifest.jsonl");
  if (!manifest) throw std::runtime_error("corpus: cannot open manifest in " + dir.string());
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line);
    Utterance u;
    u.id = row.at("utt_id").get<std::string>();
    u.words = row.at("words").get<Transcript>();
    Tensor wav = load_tensor(dir / row.at("wav").get<std::string>());
    u.waveform.assign(wav.values().begin(), wav.values().end());
    u.frame_labels = layout_frame_labels(corpus.config, corpus.vocab, u.words);
    if (static_cast<std::int64_t>(u.frame_labels.size()) != row.at("n_frames").get<std::int64_t>()) {
      throw std::runtime_error("corpus: frame count mismatch for " + u.id);
    }
    if (collapse_frame_labels(u.frame_labels, corpus.vocab) != u.words) {
      throw std::runtime_error("corpus: collapse invariant violated for " + u.id);
    }
    const std::string split = row.at("split").get<std::string>();
    (split == "train" ? corpus.train : corpus.test).push_back(std::move(u));
  }
  return corpus;
}

// ---- offline attack dataset ----

AttackDataset generate_offline_attacks(const ModelChain& chain, const Corpus& corpus,
                                       const std::filesystem::path& out_dir,
                                       const OfflineAttackOptions& opts) {
  if (corpus.train.empty()) throw std::invalid_argument("gen_attacks: empty train split");
  if (!chain.asr || chain.asr->trained_epochs() == 0) {
    throw std::invalid_argument("gen_attacks: chain must hold a trained recognizer");
  }
  std::filesystem::create_directories(out_dir / "deltas");

  AttackGrid grid = opts.grid;
  std::sort(grid.l2_budgets.begin(), grid.l2_budgets.end());
  std::sort(grid.linf_budgets.begin(), grid.linf_budgets.end());
  std::sort(grid.iterations.begin(), grid.iterations.end());

  std::vector<Transcript> pool;
  for (const Utterance& u : corpus.train) pool.push_back(u.words);

  std::vector<std::size_t> utt_order(corpus.train.size());
  for (std::size_t i = 0; i < utt_order.size(); ++i) utt_order[i] = i;
  Rng order_rng(Rng::mix(opts.seed, "attack-utt-order"));
  order_rng.shuffle(utt_order);

  AttackDataset dataset;
  dataset.root = out_dir;
  dataset.epsilon_scale = corpus.epsilon_scale();

  for (std::int64_t r = 0; r < opts.n_pairs; ++r) {
    const Utterance& utt =
        corpus.train[utt_order[static_cast<std::size_t>(r) % utt_order.size()]];
    Rng rng(Rng::mix(opts.seed, "attack-row-" + std::to_string(r)));

    AttackRow row;
    row.utt_id = utt.id;
    row.norm = rng.uniform() < 0.5 ? Norm::kL2 : Norm::kLinf;
    row.epsilon = row.norm == Norm::kL2 ? rank_biased_pick(grid.l2_budgets, rng)
                                        : rank_biased_pick(grid.linf_budgets, rng);
    row.effective_epsilon = row.epsilon * dataset.epsilon_scale;
    row.iterations = rank_biased_pick(grid.iterations, rng);
    row.seed = rng.next_u64();
    row.target_text = join_words(assign_target(utt, pool, Rng::mix(opts.seed, utt.id)));
    row.delta_path = "deltas/row_" + std::to_string(r) + ".aten";

    AttackSpec spec;
    spec.norm = row.norm;
    spec.epsilon = row.effective_epsilon;
    spec.iterations = row.iterations;
    spec.mode = AttackMode::kTargeted;
    const auto target_labels = render_target_labels(
        corpus.config, corpus.vocab, normalize_text(row.target_text),
        static_cast<std::int64_t>(utt.frame_labels.size()));
    try {
      AttackResult res = pgd(chain, utt.waveform, target_labels, spec, row.seed);
      save_tensor(out_dir / row.delta_path,
                  Tensor::from(res.delta, {static_cast<std::int64_t>(res.delta.size())}));
    } catch (const AttackError& e) {
      std::cerr << "gen_attacks: row " << r << " (" << utt.id << ") failed: " << e.what()
                << "; skipped\n";
      continue;
    }
    dataset.rows.push_back(std::move(row));
  }
  dataset.save_manifest();
  return dataset;
}

std::vector<float> AttackDataset::load_delta(const AttackRow& row) const {
  Tensor t = load_tensor(root / row.delta_path);
  return {t.values().begin(), t.values().end()};
}

void AttackDataset::save_manifest() const {
  json meta;
  meta["epsilon_scale"] = epsilon_scale;
  write_text_file(root / "meta.json", meta.dump(2) + "\n");
  std::ofstream f(root / "manifest.jsonl");
  if (!f) throw std::runtime_error("attack dataset: cannot write manifest");
  for (const AttackRow& r : rows) {
    json row;
    row["utt_id"] = r.utt_id;
    row["norm"] = r.norm == Norm::kL2 ? "l2" : "linf";
    row["epsilon"] = r.epsilon;
    row["effective_epsilon"] = r.effective_epsilon;
    row["iterations"] = r.iterations;
    row["seed"] = r.seed;
    row["delta"] = r.delta_path;
    row["target_text"] = r.target_text;
    f << row.dump() << "\n";
  }
}

AttackDataset AttackDataset::load(const std::filesystem::path& dir) {
  AttackDataset dataset;
  dataset.root = dir;
  const json meta = json::parse(read_text_file(dir / "meta.json"));
  dataset.epsilon_scale = meta.at("epsilon_scale").get<double>();
  std::ifstream f(dir / "manifest.jsonl");
  if (!f) throw std::runtime_error("attack dataset: cannot open manifest in " + dir.string());
  std::string line;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    const json row = json::parse(line);
    AttackRow r;
    r.utt_id = row.at("utt_id").get<std::string>();
    r.norm = row.at("norm").get<std::string>() == "l2" ? Norm::kL2 : Norm::kLinf;
    r.epsilon = row.at("epsilon").get<double>();
    r.effective_epsilon = row.at("effective_epsilon").get<double>();
    r.iterations = row.at("iterations").get<std::int64_t>();
    r.seed = row.at("seed").get<std::uint64_t>();
    r.delta_path = row.at("delta").get<std::string>();
    r.target_text = row.at("target_text").get<std::string>();
    dataset.rows.push_back(std::move(r));
  }
  return dataset;
}

std::vector<WaveformPair> dataset_pairs(const AttackDataset& dataset, const Corpus& corpus,
                                        const std::vector<AttackRow>& rows) {
  std::map<std::string, const Utterance*> by_id;
  for (const Utterance& u : corpus.train) by_id[u.id] = &u;
  for (const Utterance& u : corpus.test) by_id[u.id] = &u;
  std::vector<WaveformPair> pairs;
  for (const AttackRow& row : rows) {
    const auto it = by_id.find(row.utt_id);
    if (it == by_id.end()) {
      throw std::runtime_error("attack dataset: unknown utterance " + row.utt_id);
    }
    WaveformPair pair;
    pair.clean = it->second->waveform;
    const std::vector<float> delta = dataset.load_delta(row);
    if (delta.size() != pair.clean.size()) {
      throw std::runtime_error("attack dataset: delta length mismatch for " + row.utt_id);
    }
    pair.degraded.resize(delta.size());
    for (std::size_t i = 0; i < delta.size(); ++i) {
      pair.degraded[i] = pair.clean[i] + delta[i];
    }
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

}  // namespace advspeech
