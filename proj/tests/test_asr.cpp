#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "advspeech/asr.hpp"
#include "advspeech/corpus.hpp"
#include "testutil.hpp"

using namespace advspeech;

namespace {

CorpusConfig tiny_corpus_config() {
  CorpusConfig cfg;
  cfg.vocab_size = 5;
  cfg.n_train = 6;
  cfg.n_test = 2;
  cfg.words_min = 2;
  cfg.words_max = 4;
  cfg.seed = 77;
  return cfg;
}

AsrConfig tiny_asr_config() {
  AsrConfig cfg;
  cfg.conv_channels = 12;
  cfg.conv_layers = 2;
  return cfg;
}

}  // namespace

TEST_CASE("vocab invariants") {
  const Vocab v({"alpha", "beta"});
  CHECK(v.size() == 3);
  CHECK(v.token(Vocab::kSil) == Vocab::kSilToken);
  CHECK(v.index("alpha") == 1);
  CHECK_THROWS_AS(v.index("gamma"), std::invalid_argument);
  CHECK_THROWS_AS(Vocab({"a", "a"}), std::invalid_argument);
}

TEST_CASE("collapse rule merges runs and drops SIL") {
  const Vocab v({"a", "b"});
  CHECK(collapse_frame_labels({0, 1, 1, 0, 2}, v) == Transcript{"a", "b"});
  CHECK(collapse_frame_labels({0, 0, 0}, v) == Transcript{});
  CHECK(collapse_frame_labels({1, 0, 1}, v) == Transcript{"a", "a"});
}

TEST_CASE("forward rows are log distributions and deterministic") {
  const Vocab v({"a", "b", "c"});
  AsrModel model(v, tiny_asr_config(), 3);
  Rng rng(5);
  const auto x = testutil::random_waveform(64 + 16 * 9, rng, 0.3);
  Tensor xt = Tensor::from(x, {static_cast<std::int64_t>(x.size())});
  Tensor out = model.forward(xt);
  CHECK(out.dim(0) == model.frames_for(static_cast<std::int64_t>(x.size())));
  CHECK(out.dim(1) == v.size());
  for (std::int64_t t = 0; t < out.dim(0); ++t) {
    double s = 0.0;
    for (std::int64_t j = 0; j < out.dim(1); ++j) s += std::exp(out.values()[t * out.dim(1) + j]);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }
  Tensor out2 = model.forward(xt);
  CHECK(std::vector<float>(out.values().begin(), out.values().end()) ==
        std::vector<float>(out2.values().begin(), out2.values().end()));

  CHECK_THROWS_AS(model.forward(Tensor::from(std::vector<float>(40, 0.1f), {40})),
                  std::invalid_argument);
}

TEST_CASE("forward gradient w.r.t. the waveform matches finite differences") {
  const Vocab v({"a", "b"});
  AsrModel model(v, tiny_asr_config(), 11);
  Rng rng(13);
  Tensor x = Tensor::from(testutil::random_waveform(64 + 16 * 3, rng, 0.3), {64 + 16 * 3});
  x.set_requires_grad(true);
  model.set_requires_grad(false);
  const auto loss = [&] { return mean(model.forward(x)); };
  CHECK(testutil::fd_check(loss, {x}, 16) <= 1.0);
}

TEST_CASE("asr loss on hand-built posteriors") {
  // exactly one-hot log posteriors: log p(label) = 0
  Tensor onehot = Tensor::from({0.0f, -40.0f, -40.0f, 0.0f}, {2, 2});
  CHECK(asr_loss(onehot, {0, 1}).item() == doctest::Approx(0.0));

  const std::int64_t v = 5;
  std::vector<float> uniform(2 * v, std::log(1.0f / static_cast<float>(v)));
  CHECK(asr_loss(Tensor::from(uniform, {2, v}), {1, 4}).item() ==
        doctest::Approx(std::log(static_cast<double>(v))).epsilon(1e-6));

  CHECK_THROWS_AS(asr_loss(onehot, {0, 2}), std::invalid_argument);
  CHECK_THROWS_AS(asr_loss(onehot, {0}), std::invalid_argument);
}

TEST_CASE("asr loss matches a direct summation oracle") {
  Rng rng(17);
  Tensor logits = testutil::random_tensor({6, 4}, rng, -2, 2);
  Tensor lp = log_softmax(logits, 1);
  const std::vector<std::int64_t> labels{3, 0, 1, 2, 2, 0};
  double acc = 0.0;
  for (std::size_t t = 0; t < labels.size(); ++t) {
    acc -= lp.values()[static_cast<std::int64_t>(t) * 4 + labels[t]];
  }
  CHECK(testutil::near(asr_loss(lp, labels).item(), acc / static_cast<double>(labels.size()),
                       1e-6));
}

TEST_CASE("decode collapses repeats, drops SIL, ties break low") {
  const Vocab v({"a", "b"});
  // frames: SIL, a, a, SIL, b
  Tensor lp = Tensor::from(
      {
          -0.1f, -3.0f, -3.0f,  // SIL
          -3.0f, -0.1f, -3.0f,  // a
          -3.0f, -0.1f, -3.0f,  // a
          -0.1f, -3.0f, -3.0f,  // SIL
          -3.0f, -3.0f, -0.1f,  // b
      },
      {5, 3});
  CHECK(decode(lp, v) == Transcript{"a", "b"});

  Tensor silence = Tensor::from(std::vector<float>(9, -1.0f), {3, 3});
  CHECK(decode(silence, v) == Transcript{});  // ties all resolve to SIL (index 0)
}

TEST_CASE("training memorizes a single utterance") {
  const CorpusConfig ccfg = tiny_corpus_config();
  Corpus corpus = synthesize_corpus(ccfg);
  AsrModel model(corpus.vocab, tiny_asr_config(), 21);
  TrainOptions opts;
  opts.epochs = 500;  // one utterance per epoch -> 500 steps
  opts.lr = 1e-3f;
  opts.seed = 5;
  opts.average_last_checkpoints = false;
  const TrainLog log = train_asr(model, {corpus.train[0]}, opts);
  CHECK(log.epoch_loss.back() < 0.01);
  CHECK(model.trained_epochs() == 500);
}

TEST_CASE("training loss log is finite and mostly non-increasing") {
  const CorpusConfig ccfg = tiny_corpus_config();
  Corpus corpus = synthesize_corpus(ccfg);
  AsrModel model(corpus.vocab, tiny_asr_config(), 31);
  TrainOptions opts;
  opts.epochs = 8;
  opts.seed = 3;
  const TrainLog log = train_asr(model, corpus.train, opts);
  REQUIRE(log.epoch_loss.size() == 8);
  int increases = 0;
  for (std::size_t i = 0; i + 1 < log.epoch_loss.size(); ++i) {
    CHECK(std::isfinite(log.epoch_loss[i]));
    if (log.epoch_loss[i + 1] > log.epoch_loss[i]) ++increases;
  }
  CHECK(increases <= 2);
  CHECK(log.epoch_loss.back() < log.epoch_loss.front());
}

TEST_CASE("training is deterministic under a fixed seed") {
  const CorpusConfig ccfg = tiny_corpus_config();
  Corpus corpus = synthesize_corpus(ccfg);
  const auto run = [&] {
    AsrModel model(corpus.vocab, tiny_asr_config(), 21);
    TrainOptions opts;
    opts.epochs = 3;
    opts.seed = 9;
    train_asr(model, corpus.train, opts);
    std::vector<float> flat;
    for (const Tensor& p : model.parameters()) {
      flat.insert(flat.end(), p.values().begin(), p.values().end());
    }
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("checkpoint save/load round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "advspeech_test_asr_ckpt";
  std::filesystem::remove_all(dir);
  const Vocab v({"a", "b", "c"});
  AsrModel model(v, tiny_asr_config(), 3);
  model.set_trained_epochs(4);
  model.save(dir);
  AsrModel back = AsrModel::load(dir);
  CHECK(back.trained_epochs() == 4);
  CHECK(back.vocab().tokens() == v.tokens());
  Rng rng(5);
  const auto x = testutil::random_waveform(64 + 16 * 5, rng, 0.3);
  Tensor xt = Tensor::from(x, {static_cast<std::int64_t>(x.size())});
  const auto a = model.forward(xt);
  const auto b = back.forward(xt);
  CHECK(std::vector<float>(a.values().begin(), a.values().end()) ==
        std::vector<float>(b.values().begin(), b.values().end()));
  std::filesystem::remove_all(dir);
}
