#include "advspeech/stft.hpp"

#include <cmath>
#include <map>
#include <mutex>
#include <stdexcept>

namespace advspeech {

namespace {

constexpr float kMagFloorSq = 1e-14f;

struct DftBasis {
  Tensor cos_mat;  // [frame_len, bins], window folded in
  Tensor sin_mat;
};

// The basis matrices are constants; cache them per (frame_len, window).
const DftBasis& basis_for(const StftConfig& cfg) {
  static std::mutex mu;
  static std::map<std::pair<std::int64_t, int>, DftBasis> cache;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(cfg.frame_len, static_cast<int>(cfg.window));
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const std::int64_t f = cfg.frame_len;
  const std::int64_t bins = f / 2 + 1;
  std::vector<float> c(static_cast<std::size_t>(f * bins));
  std::vector<float> s(static_cast<std::size_t>(f * bins));
  for (std::int64_t n = 0; n < f; ++n) {
    double w = 1.0;
    if (cfg.window == Window::kHann) {
      w = 0.5 - 0.5 * std::cos(2.0 * M_PI * static_cast<double>(n) / static_cast<double>(f));
    }
    for (std::int64_t b = 0; b < bins; ++b) {
      const double ang = 2.0 * M_PI * static_cast<double>(b) * static_cast<double>(n) /
                         static_cast<double>(f);
      c[static_cast<std::size_t>(n * bins + b)] = static_cast<float>(w * std::cos(ang));
      s[static_cast<std::size_t>(n * bins + b)] = static_cast<float>(-w * std::sin(ang));
    }
  }
  DftBasis basis{Tensor::from(std::move(c), {f, bins}), Tensor::from(std::move(s), {f, bins})};
  return cache.emplace(key, std::move(basis)).first->second;
}

}  // namespace

void validate(const StftConfig& cfg) {
  if (cfg.frame_len <= 0 || cfg.frame_len % 2 != 0) {
    throw std::invalid_argument("stft: frame_len must be positive and even");
  }
  if (cfg.frame_shift <= 0 || cfg.frame_shift > cfg.frame_len) {
    throw std::invalid_argument("stft: need 0 < frame_shift <= frame_len");
  }
}

void validate(const MrStftConfig& cfg) {
  if (cfg.resolutions.empty()) throw std::invalid_argument("mrstft: needs at least one resolution");
  for (const auto& r : cfg.resolutions) validate(r);
  for (std::size_t i = 0; i < cfg.resolutions.size(); ++i) {
    for (std::size_t j = i + 1; j < cfg.resolutions.size(); ++j) {
      if (cfg.resolutions[i] == cfg.resolutions[j]) {
        throw std::invalid_argument("mrstft: resolutions must be distinct");
      }
    }
  }
}

MrStftConfig MrStftConfig::default_config() {
  return MrStftConfig{{StftConfig{64, 16, Window::kHann}, StftConfig{128, 32, Window::kHann},
                       StftConfig{32, 8, Window::kHann}}};
}

Spectrogram stft(const Tensor& x, const StftConfig& cfg) {
  validate(cfg);
  const DftBasis& basis = basis_for(cfg);
  Tensor frames = frame_signal(x, cfg.frame_len, cfg.frame_shift);
  return Spectrogram{matmul(frames, basis.cos_mat), matmul(frames, basis.sin_mat)};
}

Tensor stft_magnitude(const Tensor& x, const StftConfig& cfg) {
  Spectrogram spec = stft(x, cfg);
  Tensor power = add(mul(spec.real, spec.real), mul(spec.imag, spec.imag));
  return sqrt(clamp_min(power, kMagFloorSq));
}

Tensor spectral_convergence(const Tensor& x, const Tensor& x_hat, const StftConfig& cfg) {
  if (x.shape() != x_hat.shape()) {
    throw std::invalid_argument("spectral_convergence: signals must have equal length");
  }
  Tensor mx = stft_magnitude(x, cfg);
  Tensor mh = stft_magnitude(x_hat, cfg);
  Tensor diff = sub(mx, mh);
  Tensor num = sqrt(sum(mul(diff, diff)));
  Tensor den = sqrt(sum(mul(mx, mx)));
  if (den.item() <= 1e-8f) {
    throw std::invalid_argument("spectral_convergence: reference signal is identically zero");
  }
  return div(num, den);
}

Tensor log_magnitude_loss(const Tensor& x, const Tensor& x_hat, const StftConfig& cfg) {
  if (x.shape() != x_hat.shape()) {
    throw std::invalid_argument("log_magnitude_loss: signals must have equal length");
  }
  Tensor lx = log(stft_magnitude(x, cfg));
  Tensor lh = log(stft_magnitude(x_hat, cfg));
  return mean(abs(sub(lx, lh)));
}

Tensor mrstft_loss(const Tensor& x, const Tensor& x_hat, const MrStftConfig& cfg) {
  validate(cfg);
  Tensor total;
  for (const StftConfig& res : cfg.resolutions) {
    Tensor term = add(spectral_convergence(x, x_hat, res), log_magnitude_loss(x, x_hat, res));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

}  // namespace advspeech
