#include "advspeech/denoiser.hpp"

#include <cmath>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "advspeech/io.hpp"
#include "advspeech/rng.hpp"

namespace advspeech {

using nlohmann::json;

DenoiserConfig DenoiserConfig::desk() { return DenoiserConfig{}; }

DenoiserConfig DenoiserConfig::paper_shape() {
  DenoiserConfig cfg;
  cfg.enc_dim = 128;
  cfg.separator_layers = 16;
  return cfg;
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

DenoiserModel::DenoiserModel(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  if (cfg.enc_dim < 1 || cfg.enc_kernel < 1 || cfg.enc_stride < 1 || cfg.separator_layers < 1) {
    throw std::invalid_argument("denoiser: bad architecture config");
  }
  if (cfg.separator_kernel % 2 != 1) {
    throw std::invalid_argument("denoiser: separator kernel must be odd");
  }
  Rng rng(Rng::mix(seed, "denoiser-init"));
  const float eb = 1.0f / std::sqrt(static_cast<float>(cfg.enc_kernel));
  enc_w_ = init_uniform({cfg.enc_dim, 1, cfg.enc_kernel}, eb, rng);
  const float sb = 1.0f / std::sqrt(static_cast<float>(cfg.enc_dim * cfg.separator_kernel));
  for (std::int64_t l = 0; l < cfg.separator_layers; ++l) {
    sep_w_.push_back(init_uniform({cfg.enc_dim, cfg.enc_dim, cfg.separator_kernel}, sb, rng));
    sep_b_.push_back(Tensor::zeros({cfg.enc_dim}));
  }
  const float mb = 1.0f / std::sqrt(static_cast<float>(cfg.enc_dim));
  mask_w_ = init_uniform({cfg.enc_dim, cfg.enc_dim, 1}, mb, rng);
  mask_b_ = Tensor::zeros({cfg.enc_dim});
  dec_w_ = init_uniform({cfg.enc_dim, 1, cfg.enc_kernel}, eb, rng);
  set_requires_grad(true);
}

DenoiserModel DenoiserModel::identity() {
  DenoiserModel m;
  m.identity_ = true;
  m.trained_epochs_ = 1;  // behaves as a fixed, fully specified preprocessor
  return m;
}

std::vector<Tensor> DenoiserModel::parameters() const {
  if (identity_) return {};
  std::vector<Tensor> out{enc_w_};
  for (const auto& w : sep_w_) out.push_back(w);
  for (const auto& b : sep_b_) out.push_back(b);
  out.push_back(mask_w_);
  out.push_back(mask_b_);
  out.push_back(dec_w_);
  return out;
}

void DenoiserModel::set_requires_grad(bool v) {
  for (Tensor p : parameters()) p.set_requires_grad(v);
}

Tensor DenoiserModel::denoise(const Tensor& x) const {
  if (identity_) return x;
  if (x.rank() != 1) throw std::invalid_argument("denoise: rank-1 waveform required");
  const std::int64_t len = x.dim(0);
  if (len < cfg_.enc_kernel) throw std::invalid_argument("denoise: input shorter than encoder kernel");

  // Pad so (padded - kernel) is a multiple of the stride; decoder then
  // reproduces the padded length exactly and the tail is trimmed off.
  const std::int64_t over = (len - cfg_.enc_kernel) % cfg_.enc_stride;
  const std::int64_t pad = over == 0 ? 0 : cfg_.enc_stride - over;
  Tensor padded = pad == 0 ? x : pad_reflect_right(x, pad);
  Tensor as_row = reshape(padded, {1, len + pad});

  Tensor enc = conv1d(as_row, enc_w_, cfg_.enc_stride, 1, 0);  // [enc_dim, T]
  Tensor h = enc;
  std::int64_t dilation = 1;
  for (std::size_t l = 0; l < sep_w_.size(); ++l) {
    Tensor c = bias_add(conv1d(h, sep_w_[l], 1, dilation,
                               dilation * (cfg_.separator_kernel - 1) / 2),
                        sep_b_[l], 0);
    h = add(relu(c), h);  // residual
    dilation *= 2;
  }
  Tensor mask = sigmoid(bias_add(conv1d(h, mask_w_, 1, 1, 0), mask_b_, 0));
  Tensor masked = mul(enc, mask);
  Tensor dec = conv_transpose1d(masked, dec_w_, cfg_.enc_stride);  // [1, len+pad]
  Tensor flat = reshape(dec, {len + pad});
  return take_front(flat, len);
}

DenoiserModel DenoiserModel::deep_clone() const {
  DenoiserModel m;
  m.cfg_ = cfg_;
  m.identity_ = identity_;
  m.trained_epochs_ = trained_epochs_;
  if (identity_) return m;
  m.enc_w_ = enc_w_.clone();
  for (const auto& w : sep_w_) m.sep_w_.push_back(w.clone());
  for (const auto& b : sep_b_) m.sep_b_.push_back(b.clone());
  m.mask_w_ = mask_w_.clone();
  m.mask_b_ = mask_b_.clone();
  m.dec_w_ = dec_w_.clone();
  return m;
}

void DenoiserModel::save(const std::filesystem::path& dir) const {
  if (identity_) throw std::runtime_error("denoiser: identity model is not persistable");
  std::filesystem::create_directories(dir);
  json meta;
  meta["type"] = "denoiser";
  meta["enc_dim"] = cfg_.enc_dim;
  meta["enc_kernel"] = cfg_.enc_kernel;
  meta["enc_stride"] = cfg_.enc_stride;
  meta["separator_layers"] = cfg_.separator_layers;
  meta["separator_kernel"] = cfg_.separator_kernel;
  meta["trained_epochs"] = trained_epochs_;
  write_text_file(dir / "denoiser.json", meta.dump(2) + "\n");
  save_tensor(dir / "enc_w.aten", enc_w_);
  for (std::size_t l = 0; l < sep_w_.size(); ++l) {
    save_tensor(dir / ("sep" + std::to_string(l) + "_w.aten"), sep_w_[l]);
    save_tensor(dir / ("sep" + std::to_string(l) + "_b.aten"), sep_b_[l]);
  }
  save_tensor(dir / "mask_w.aten", mask_w_);
  save_tensor(dir / "mask_b.aten", mask_b_);
  save_tensor(dir / "dec_w.aten", dec_w_);
}

DenoiserModel DenoiserModel::load(const std::filesystem::path& dir) {
  const json meta = json::parse(read_text_file(dir / "denoiser.json"));
  if (meta.at("type").get<std::string>() != "denoiser") {
    throw std::runtime_error("denoiser checkpoint: wrong type in " + dir.string());
  }
  DenoiserModel m;
  m.cfg_.enc_dim = meta.at("enc_dim").get<std::int64_t>();
  m.cfg_.enc_kernel = meta.at("enc_kernel").get<std::int64_t>();
  m.cfg_.enc_stride = meta.at("enc_stride").get<std::int64_t>();
  m.cfg_.separator_layers = meta.at("separator_layers").get<std::int64_t>();
  m.cfg_.separator_kernel = meta.at("separator_kernel").get<std::int64_t>();
  m.trained_epochs_ = meta.at("trained_epochs").get<std::int64_t>();
  m.enc_w_ = load_tensor(dir / "enc_w.aten");
  for (std::int64_t l = 0; l < m.cfg_.separator_layers; ++l) {
    m.sep_w_.push_back(load_tensor(dir / ("sep" + std::to_string(l) + "_w.aten")));
    m.sep_b_.push_back(load_tensor(dir / ("sep" + std::to_string(l) + "_b.aten")));
  }
  m.mask_w_ = load_tensor(dir / "mask_w.aten");
  m.mask_b_ = load_tensor(dir / "mask_b.aten");
  m.dec_w_ = load_tensor(dir / "dec_w.aten");
  return m;
}

std::vector<double> train_denoiser_offline(DenoiserModel& model,
                                           const std::vector<WaveformPair>& pairs,
                                           const DenoiserTrainOptions& opts) {
  if (pairs.empty()) throw std::invalid_argument("train_denoiser: empty pair set");
  if (model.is_identity()) throw std::invalid_argument("train_denoiser: identity model has no parameters");
  validate(opts.loss_cfg);
  Rng rng(Rng::mix(opts.seed, "denoiser-train"));
  Adam adam(opts.lr);
  const std::vector<Tensor> params = model.parameters();
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> epoch_loss;

  for (std::int64_t epoch = 0; epoch < opts.epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    for (const std::size_t idx : order) {
      const WaveformPair& pair = pairs[idx];
      Tensor clean = Tensor::from(pair.clean, {static_cast<std::int64_t>(pair.clean.size())});
      Tensor degraded =
          Tensor::from(pair.degraded, {static_cast<std::int64_t>(pair.degraded.size())});
      float loss_val = 0.0f;
      try {
        Tape tape;
        Tensor loss = mrstft_loss(clean, model.denoise(degraded), opts.loss_cfg);
        loss_val = loss.item();
        zero_grads(params);
        tape.backward(loss);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train_denoiser: diverged at epoch " + std::to_string(epoch) +
                                 ": " + e.what());
      }
      adam.step(params);
      total += loss_val;
    }
    epoch_loss.push_back(total / static_cast<double>(pairs.size()));
  }
  model.set_trained_epochs(model.trained_epochs() + opts.epochs);
  return epoch_loss;
}

}  // namespace advspeech
