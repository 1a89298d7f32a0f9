#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "advspeech/rng.hpp"
#include "advspeech/tensor.hpp"
#include "advspeech/wer.hpp"

namespace testutil {

inline bool near(double a, double b, double abs_tol) { return std::fabs(a - b) <= abs_tol; }

// Central finite differences against analytic gradients. The loss builder
// must construct a fresh graph from the leaves' current values. Returns the
// worst ratio |analytic - fd| / max(1e-6, 1e-3 * max(|analytic|, |fd|));
// a value <= 1 means every checked coordinate meets "relative error < 1e-3
// with absolute floor 1e-6".
inline double fd_check(const std::function<advspeech::Tensor()>& loss_builder,
                       const std::vector<advspeech::Tensor>& leaves,
                       std::size_t max_coords_per_leaf = 24, std::uint64_t seed = 7,
                       double h = 1e-3) {
  using advspeech::Tape;
  using advspeech::Tensor;

  std::vector<std::vector<float>> analytic;
  {
    Tape tape;
    Tensor loss = loss_builder();
    for (const Tensor& leaf : leaves) const_cast<Tensor&>(leaf).zero_grad();
    tape.backward(loss);
    for (const Tensor& leaf : leaves) {
      if (leaf.has_grad()) {
        analytic.emplace_back(leaf.grad().begin(), leaf.grad().end());
      } else {
        analytic.emplace_back(static_cast<std::size_t>(leaf.numel()), 0.0f);
      }
    }
  }

  advspeech::Rng rng(seed);
  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    Tensor leaf = leaves[li];
    const auto n = static_cast<std::size_t>(leaf.numel());
    std::vector<std::size_t> coords;
    if (n <= max_coords_per_leaf) {
      for (std::size_t i = 0; i < n; ++i) coords.push_back(i);
    } else {
      for (std::size_t i = 0; i < max_coords_per_leaf; ++i) {
        coords.push_back(static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
      }
    }
    for (const std::size_t c : coords) {
      const float v0 = leaf.values()[c];
      const auto vp = static_cast<float>(static_cast<double>(v0) + h);
      const auto vm = static_cast<float>(static_cast<double>(v0) - h);
      const double eff_h = static_cast<double>(vp) - static_cast<double>(vm);
      leaf.values_mut()[c] = vp;
      const double lp = loss_builder().item();
      leaf.values_mut()[c] = vm;
      const double lm = loss_builder().item();
      leaf.values_mut()[c] = v0;
      const double fd = (lp - lm) / eff_h;
      const double a = analytic[li][c];
      const double denom = std::max(1e-6, 1e-3 * std::max(std::fabs(a), std::fabs(fd)));
      worst = std::max(worst, std::fabs(a - fd) / denom);
    }
  }
  return worst;
}

// Direct per-frame DFT magnitudes in double precision, no clamping.
inline std::vector<double> naive_stft_magnitude(const std::vector<float>& x,
                                                std::int64_t frame_len, std::int64_t shift,
                                                bool hann) {
  const auto len = static_cast<std::int64_t>(x.size());
  const std::int64_t frames = 1 + (len - frame_len) / shift;
  const std::int64_t bins = frame_len / 2 + 1;
  std::vector<double> mags(static_cast<std::size_t>(frames * bins));
  for (std::int64_t t = 0; t < frames; ++t) {
    for (std::int64_t b = 0; b < bins; ++b) {
      double re = 0.0, im = 0.0;
      for (std::int64_t n = 0; n < frame_len; ++n) {
        double w = 1.0;
        if (hann) w = 0.5 - 0.5 * std::cos(2.0 * M_PI * n / static_cast<double>(frame_len));
        const double v = w * static_cast<double>(x[static_cast<std::size_t>(t * shift + n)]);
        const double ang = 2.0 * M_PI * static_cast<double>(b * n) / static_cast<double>(frame_len);
        re += v * std::cos(ang);
        im -= v * std::sin(ang);
      }
      mags[static_cast<std::size_t>(t * bins + b)] = std::sqrt(re * re + im * im);
    }
  }
  return mags;
}

// Nested-loop cross-correlation oracle, double accumulation, rounded once.
inline std::vector<float> naive_conv1d(const std::vector<float>& x, std::int64_t ci,
                                       std::int64_t len, const std::vector<float>& w,
                                       std::int64_t co, std::int64_t k, std::int64_t stride,
                                       std::int64_t dilation, std::int64_t padding) {
  const std::int64_t lo = (len + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  std::vector<float> out(static_cast<std::size_t>(co * lo), 0.0f);
  for (std::int64_t oc = 0; oc < co; ++oc) {
    for (std::int64_t o = 0; o < lo; ++o) {
      double acc = 0.0;
      for (std::int64_t ic = 0; ic < ci; ++ic) {
        for (std::int64_t j = 0; j < k; ++j) {
          const std::int64_t pos = o * stride - padding + j * dilation;
          if (pos < 0 || pos >= len) continue;
          acc += static_cast<double>(x[static_cast<std::size_t>(ic * len + pos)]) *
                 static_cast<double>(w[static_cast<std::size_t>((oc * ci + ic) * k + j)]);
        }
      }
      out[static_cast<std::size_t>(oc * lo + o)] = static_cast<float>(acc);
    }
  }
  return out;
}

// Distance-only quadratic DP, independent of the scored implementation.
inline std::int64_t levenshtein_distance(const advspeech::Transcript& a,
                                         const advspeech::Transcript& b) {
  std::vector<std::int64_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = static_cast<std::int64_t>(j);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = static_cast<std::int64_t>(i);
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::int64_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline advspeech::Tensor random_tensor(advspeech::Shape shape, advspeech::Rng& rng,
                                       double lo = -1.0, double hi = 1.0) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> v(static_cast<std::size_t>(n));
  for (auto& x : v) x = static_cast<float>(rng.uniform(lo, hi));
  return advspeech::Tensor::from(std::move(v), std::move(shape));
}

inline std::vector<float> random_waveform(std::size_t n, advspeech::Rng& rng, double amp = 0.5) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-amp, amp));
  return v;
}

}  // namespace testutil
