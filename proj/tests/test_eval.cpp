#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>

#include "advspeech/eval.hpp"
#include "testutil.hpp"

using namespace advspeech;

namespace {

struct Fixture {
  Corpus corpus;
  AsrModel model;
  std::vector<Transcript> targets;

  Fixture() {
    CorpusConfig ccfg;
    ccfg.vocab_size = 5;
    ccfg.n_train = 10;
    ccfg.n_test = 6;
    ccfg.words_min = 2;
    ccfg.words_max = 4;
    ccfg.seed = 61;
    corpus = synthesize_corpus(ccfg);
    AsrConfig acfg;
    acfg.conv_channels = 12;
    acfg.conv_layers = 2;
    model = AsrModel(corpus.vocab, acfg, 5);
    TrainOptions opts;
    opts.epochs = 6;
    opts.seed = 4;
    train_asr(model, corpus.train, opts);
    model.set_requires_grad(false);
    std::vector<Transcript> pool;
    for (const Utterance& u : corpus.train) pool.push_back(u.words);
    for (const Utterance& u : corpus.test) targets.push_back(assign_target(u, pool, 77));
  }

  ModelChain chain() const {
    ModelChain c;
    c.asr = &model;
    return c;
  }
};

}  // namespace

TEST_CASE("parallel_for covers every index once and surfaces exceptions") {
  std::vector<std::atomic<int>> hits(64);
  parallel_for(64, 4, [&](std::int64_t i) { hits[static_cast<std::size_t>(i)]++; });
  for (const auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(
      parallel_for(8, 3, [](std::int64_t i) { if (i == 5) throw std::runtime_error("boom"); }),
      std::runtime_error);
}

TEST_CASE("a vanishing budget reproduces the benign WER in the GT slot") {
  const Fixture fx;
  AttackSpec spec;
  spec.epsilon = 1e-12;
  spec.iterations = 1;
  spec.step = 1e-12;
  const WerReport report = evaluate_cell(fx.chain(), nullptr, fx.corpus.test, fx.targets, spec,
                                         fx.corpus.config, fx.corpus.vocab, 5, 1);
  CHECK(report.n_failed == 0);
  CHECK(report.n_utts == static_cast<std::int64_t>(fx.corpus.test.size()));
  CHECK(report.gt_wer() == doctest::Approx(report.benign_wer()));
  REQUIRE(report.target.has_value());
}

TEST_CASE("untargeted reports carry no TGT field") {
  const Fixture fx;
  AttackSpec spec;
  spec.epsilon = 0.005;
  spec.iterations = 2;
  spec.mode = AttackMode::kUntargeted;
  const WerReport report = evaluate_cell(fx.chain(), nullptr, fx.corpus.test, {}, spec,
                                         fx.corpus.config, fx.corpus.vocab, 5, 1);
  CHECK_FALSE(report.target.has_value());
}

TEST_CASE("pooled aggregation equals recomputation from per-utterance counts") {
  const Fixture fx;
  AttackSpec spec;
  spec.epsilon = 0.01;
  spec.iterations = 3;
  const std::uint64_t seed = 17;
  const WerReport report = evaluate_cell(fx.chain(), nullptr, fx.corpus.test, fx.targets, spec,
                                         fx.corpus.config, fx.corpus.vocab, seed, 1);

  // oracle: redo each utterance independently and pool by hand
  EditCounts gt_pool;
  for (std::size_t i = 0; i < fx.corpus.test.size(); ++i) {
    const Utterance& utt = fx.corpus.test[i];
    Rng rng(Rng::mix(seed, utt.id));
    (void)fx.chain().transcribe(utt.waveform, rng);  // benign decode consumes the same draws
    const auto labels = render_target_labels(fx.corpus.config, fx.corpus.vocab, fx.targets[i],
                                             static_cast<std::int64_t>(utt.frame_labels.size()));
    const AttackResult res = pgd(fx.chain(), utt.waveform, labels, spec, rng.next_u64());
    gt_pool += wer(utt.words, fx.chain().transcribe(res.adversarial, rng));
  }
  CHECK(report.ground_truth.errors() == gt_pool.errors());
  CHECK(report.ground_truth.ref_len == gt_pool.ref_len);
}

TEST_CASE("cell results do not depend on worker count or utterance order") {
  const Fixture fx;
  AttackSpec spec;
  spec.epsilon = 0.01;
  spec.iterations = 2;
  const WerReport serial = evaluate_cell(fx.chain(), nullptr, fx.corpus.test, fx.targets, spec,
                                         fx.corpus.config, fx.corpus.vocab, 9, 1);
  const WerReport parallel = evaluate_cell(fx.chain(), nullptr, fx.corpus.test, fx.targets, spec,
                                           fx.corpus.config, fx.corpus.vocab, 9, 4);
  CHECK(serial.gt_wer() == parallel.gt_wer());
  CHECK(serial.benign_wer() == parallel.benign_wer());
  CHECK(serial.target->wer_percent() == parallel.target->wer_percent());

  std::vector<Utterance> reversed(fx.corpus.test.rbegin(), fx.corpus.test.rend());
  std::vector<Transcript> reversed_targets(fx.targets.rbegin(), fx.targets.rend());
  const WerReport rev = evaluate_cell(fx.chain(), nullptr, reversed, reversed_targets, spec,
                                      fx.corpus.config, fx.corpus.vocab, 9, 2);
  CHECK(rev.gt_wer() == serial.gt_wer());
}

TEST_CASE("craft chain can differ from the evaluation chain") {
  const Fixture fx;
  DenoiserConfig dcfg;
  dcfg.enc_dim = 8;
  dcfg.separator_layers = 2;
  DenoiserModel denoiser(dcfg, 3);
  denoiser.set_trained_epochs(1);
  denoiser.set_requires_grad(false);
  ModelChain defended = fx.chain();
  defended.denoiser = &denoiser;
  ModelChain bare = fx.chain();

  AttackSpec spec;
  spec.epsilon = 0.01;
  spec.iterations = 2;
  const WerReport adaptive = evaluate_cell(defended, nullptr, fx.corpus.test, fx.targets, spec,
                                           fx.corpus.config, fx.corpus.vocab, 3, 1);
  const WerReport transferred = evaluate_cell(defended, &bare, fx.corpus.test, fx.targets, spec,
                                              fx.corpus.config, fx.corpus.vocab, 3, 1);
  // same defended decode path, different crafting surface
  CHECK(adaptive.benign_wer() == transferred.benign_wer());
}

TEST_CASE("targeted evaluation requires one target per utterance") {
  const Fixture fx;
  AttackSpec spec;
  spec.epsilon = 0.01;
  CHECK_THROWS_AS(evaluate_cell(fx.chain(), nullptr, fx.corpus.test, {}, spec, fx.corpus.config,
                                fx.corpus.vocab, 1, 1),
                  std::invalid_argument);
}
