#include "advspeech/asr.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "advspeech/io.hpp"
#include "advspeech/rng.hpp"

namespace advspeech {

using nlohmann::json;

Vocab::Vocab(std::vector<std::string> words) {
  tokens_.push_back(kSilToken);
  for (auto& w : words) {
    if (w == kSilToken) throw std::invalid_argument("vocab: SIL token listed twice");
    tokens_.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    for (std::size_t j = i + 1; j < tokens_.size(); ++j) {
      if (tokens_[i] == tokens_[j]) throw std::invalid_argument("vocab: duplicate token");
    }
  }
}

std::int64_t Vocab::index(const std::string& token) const {
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i] == token) return static_cast<std::int64_t>(i);
  }
  throw std::invalid_argument("vocab: unknown token '" + token + "'");
}

Transcript collapse_frame_labels(const std::vector<std::int64_t>& labels, const Vocab& vocab) {
  Transcript out;
  std::int64_t prev = -1;
  for (const std::int64_t l : labels) {
    if (l != prev && l != Vocab::kSil) out.push_back(vocab.token(l));
    prev = l;
  }
  return out;
}

namespace {

Tensor init_uniform(Shape shape, float bound, Rng& rng) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.uniform(-bound, bound));
  return Tensor::from(std::move(v), std::move(shape));
}

}  // namespace

AsrModel::AsrModel(const Vocab& vocab, const AsrConfig& cfg, std::uint64_t seed)
    : vocab_(vocab), cfg_(cfg) {
  validate(cfg.frontend);
  if (cfg.kernel % 2 != 1) throw std::invalid_argument("asr: kernel must be odd");
  if (cfg.conv_layers < 1) throw std::invalid_argument("asr: need at least one conv layer");
  if (vocab_.size() < 2) throw std::invalid_argument("asr: vocab must hold SIL plus a word");
  Rng rng(Rng::mix(seed, "asr-init"));
  const std::int64_t bins = cfg.frontend.frame_len / 2 + 1;
  std::int64_t in_ch = bins;
  for (std::int64_t l = 0; l < cfg.conv_layers; ++l) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in_ch * cfg.kernel));
    conv_w_.push_back(init_uniform({cfg.conv_channels, in_ch, cfg.kernel}, bound, rng));
    conv_b_.push_back(Tensor::zeros({cfg.conv_channels}));
    in_ch = cfg.conv_channels;
  }
  const float pbound = 1.0f / std::sqrt(static_cast<float>(cfg.conv_channels));
  proj_w_ = init_uniform({cfg.conv_channels, vocab_.size()}, pbound, rng);
  proj_b_ = Tensor::zeros({vocab_.size()});
  set_requires_grad(true);
}

std::vector<Tensor> AsrModel::parameters() const {
  std::vector<Tensor> out;
  for (const auto& w : conv_w_) out.push_back(w);
  for (const auto& b : conv_b_) out.push_back(b);
  out.push_back(proj_w_);
  out.push_back(proj_b_);
  return out;
}

void AsrModel::set_requires_grad(bool v) {
  for (Tensor p : parameters()) p.set_requires_grad(v);
}

std::int64_t AsrModel::frames_for(std::int64_t samples) const {
  if (samples < cfg_.frontend.frame_len) {
    throw std::invalid_argument("asr: waveform shorter than one frame");
  }
  return 1 + (samples - cfg_.frontend.frame_len) / cfg_.frontend.frame_shift;
}

Tensor AsrModel::forward(const Tensor& x) const {
  Tensor feat = log(stft_magnitude(x, cfg_.frontend));  // [T, bins]
  Tensor h = transpose(feat);                           // [bins, T]
  const std::int64_t pad = (cfg_.kernel - 1) / 2;
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    h = relu(bias_add(conv1d(h, conv_w_[l], 1, 1, pad), conv_b_[l], 0));
  }
  Tensor logits = bias_add(matmul(transpose(h), proj_w_), proj_b_, 1);  // [T, vocab]
  return log_softmax(logits, 1);
}

AsrModel AsrModel::deep_clone() const {
  AsrModel m;
  m.vocab_ = vocab_;
  m.cfg_ = cfg_;
  m.trained_epochs_ = trained_epochs_;
  for (const auto& w : conv_w_) m.conv_w_.push_back(w.clone());
  for (const auto& b : conv_b_) m.conv_b_.push_back(b.clone());
  m.proj_w_ = proj_w_.clone();
  m.proj_b_ = proj_b_.clone();
  return m;
}

void AsrModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  json meta;
  meta["type"] = "asr";
  std::vector<std::string> words(vocab_.tokens().begin() + 1, vocab_.tokens().end());
  meta["words"] = words;
  meta["frame_len"] = cfg_.frontend.frame_len;
  meta["frame_shift"] = cfg_.frontend.frame_shift;
  meta["window"] = cfg_.frontend.window == Window::kHann ? "hann" : "rectangular";
  meta["conv_channels"] = cfg_.conv_channels;
  meta["conv_layers"] = cfg_.conv_layers;
  meta["kernel"] = cfg_.kernel;
  meta["trained_epochs"] = trained_epochs_;
  write_text_file(dir / "asr.json", meta.dump(2) + "\n");
  for (std::size_t l = 0; l < conv_w_.size(); ++l) {
    save_tensor(dir / ("conv" + std::to_string(l) + "_w.aten"), conv_w_[l]);
    save_tensor(dir / ("conv" + std::to_string(l) + "_b.aten"), conv_b_[l]);
  }
  save_tensor(dir / "proj_w.aten", proj_w_);
  save_tensor(dir / "proj_b.aten", proj_b_);
}

AsrModel AsrModel::load(const std::filesystem::path& dir) {
  const json meta = json::parse(read_text_file(dir / "asr.json"));
  if (meta.at("type").get<std::string>() != "asr") {
    throw std::runtime_error("asr checkpoint: wrong type in " + dir.string());
  }
  AsrModel m;
  m.vocab_ = Vocab(meta.at("words").get<std::vector<std::string>>());
  m.cfg_.frontend.frame_len = meta.at("frame_len").get<std::int64_t>();
  m.cfg_.frontend.frame_shift = meta.at("frame_shift").get<std::int64_t>();
  m.cfg_.frontend.window =
      meta.at("window").get<std::string>() == "hann" ? Window::kHann : Window::kRectangular;
  m.cfg_.conv_channels = meta.at("conv_channels").get<std::int64_t>();
  m.cfg_.conv_layers = meta.at("conv_layers").get<std::int64_t>();
  m.cfg_.kernel = meta.at("kernel").get<std::int64_t>();
  m.trained_epochs_ = meta.at("trained_epochs").get<std::int64_t>();
  for (std::int64_t l = 0; l < m.cfg_.conv_layers; ++l) {
    m.conv_w_.push_back(load_tensor(dir / ("conv" + std::to_string(l) + "_w.aten")));
    m.conv_b_.push_back(load_tensor(dir / ("conv" + std::to_string(l) + "_b.aten")));
  }
  m.proj_w_ = load_tensor(dir / "proj_w.aten");
  m.proj_b_ = load_tensor(dir / "proj_b.aten");
  return m;
}

Tensor asr_loss(const Tensor& log_posteriors, const std::vector<std::int64_t>& frame_labels) {
  return nll_loss(log_posteriors, frame_labels);
}

Transcript decode(const Tensor& log_posteriors, const Vocab& vocab) {
  const std::int64_t t = log_posteriors.dim(0), v = log_posteriors.dim(1);
  const auto lp = log_posteriors.values();
  std::vector<std::int64_t> argmax(static_cast<std::size_t>(t));
  for (std::int64_t i = 0; i < t; ++i) {
    std::int64_t best = 0;
    for (std::int64_t j = 1; j < v; ++j) {
      if (lp[i * v + j] > lp[i * v + best]) best = j;  // strict: ties keep lower index
    }
    argmax[static_cast<std::size_t>(i)] = best;
  }
  return collapse_frame_labels(argmax, vocab);
}

TrainLog train_asr(AsrModel& model, const std::vector<Utterance>& corpus,
                   const TrainOptions& opts) {
  if (corpus.empty()) throw std::invalid_argument("train_asr: empty corpus");
  Rng rng(Rng::mix(opts.seed, "asr-train"));
  Adam adam(opts.lr);
  const std::vector<Tensor> params = model.parameters();
  std::vector<std::vector<Tensor>> snapshots;
  TrainLog log;
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (const std::size_t idx : order) {
      const Utterance& utt = corpus[idx];
      Tensor x = Tensor::from(utt.waveform, {static_cast<std::int64_t>(utt.waveform.size())});
      float loss_val = 0.0f;
      try {
        Tape tape;
        Tensor loss = asr_loss(model.forward(x), utt.frame_labels);
        loss_val = loss.item();
        zero_grads(params);
        tape.backward(loss);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train_asr: diverged at epoch " + std::to_string(epoch) +
                                 " utt " + utt.id + ": " + e.what());
      }
      adam.step(params);
      total += loss_val;
    }
    log.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
    if (opts.average_last_checkpoints) {
      std::vector<Tensor> snap;
      for (const Tensor& p : params) snap.push_back(p.clone());
      snapshots.push_back(std::move(snap));
      const auto window = static_cast<std::size_t>(std::min<std::int64_t>(
          opts.max_checkpoint_window, opts.epochs));
      if (snapshots.size() > window) snapshots.erase(snapshots.begin());
    }
  }

  if (opts.average_last_checkpoints && !snapshots.empty()) {
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
      Tensor p = params[pi];
      auto vals = p.values_mut();
      for (std::size_t i = 0; i < vals.size(); ++i) {
        double acc = 0.0;
        for (const auto& snap : snapshots) acc += snap[pi].values()[i];
        vals[i] = static_cast<float>(acc / static_cast<double>(snapshots.size()));
      }
    }
  }
  model.set_trained_epochs(model.trained_epochs() + opts.epochs);
  return log;
}

}  // namespace advspeech
