#include "advspeech/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>

namespace advspeech {

namespace {

thread_local Tape* g_tape = nullptr;

std::int64_t numel_of(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

Tensor make_raw(Shape shape, std::vector<float> values) {
  auto d = std::make_shared<detail::TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  Tensor t;
  t.d_ = std::move(d);
  return t;
}

void check_finite(const char* op, std::span<const float> vals) {
  for (const float v : vals) {
    if (!std::isfinite(v)) {
      throw std::runtime_error(std::string(op) + ": non-finite value produced");
    }
  }
}

bool tracked(const Tensor& t) { return t.d_->requires_grad || t.d_->on_tape; }

std::vector<float>& ensure_grad(detail::TensorData& d) {
  if (d.grad.empty()) d.grad.assign(d.values.size(), 0.0f);
  return d.grad;
}

void require(bool cond, const char* msg) {
  if (!cond) throw std::invalid_argument(msg);
}

using Data = std::shared_ptr<detail::TensorData>;

// Registers the backward closure if a tape is active and any input is live.
template <typename Fn>
void record_op(const Tensor& out, std::initializer_list<Tensor> inputs, Fn&& backward_fn) {
  Tape* tape = Tape::current();
  if (!tape) return;
  bool any = false;
  for (const Tensor& in : inputs) any = any || tracked(in);
  if (!any) return;
  out.d_->on_tape = true;
  tape->record(std::forward<Fn>(backward_fn));
}

// Elementwise binary op with scalar broadcast on either side.
// dfa/dfb: local derivatives as functions of (a, b).
template <typename F, typename Dfa, typename Dfb>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f, Dfa dfa, Dfb dfb) {
  require(a.defined() && b.defined(), "binary op: undefined tensor");
  const bool sa = a.numel() == 1;
  const bool sb = b.numel() == 1;
  require(sa || sb || a.shape() == b.shape(), "binary op: shape mismatch");
  const Tensor& big = sa ? b : a;
  const std::int64_t n = big.numel();
  std::vector<float> out(static_cast<std::size_t>(n));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = f(av[sa ? 0 : i], bv[sb ? 0 : i]);
  }
  Tensor res = make_raw(big.shape(), std::move(out));
  check_finite(name, res.values());
  record_op(res, {a, b}, [ad = a.d_, bd = b.d_, od = res.d_, sa, sb, n, dfa, dfb,
                          ta = tracked(a), tb = tracked(b)] {
    if (od->grad.empty()) return;
    const auto& g = od->grad;
    if (ta) {
      auto& ga = ensure_grad(*ad);
      for (std::int64_t i = 0; i < n; ++i) {
        const float va = ad->values[sa ? 0 : static_cast<std::size_t>(i)];
        const float vb = bd->values[sb ? 0 : static_cast<std::size_t>(i)];
        ga[sa ? 0 : static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)] * dfa(va, vb);
      }
    }
    if (tb) {
      auto& gb = ensure_grad(*bd);
      for (std::int64_t i = 0; i < n; ++i) {
        const float va = ad->values[sa ? 0 : static_cast<std::size_t>(i)];
        const float vb = bd->values[sb ? 0 : static_cast<std::size_t>(i)];
        gb[sb ? 0 : static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(i)] * dfb(va, vb);
      }
    }
  });
  return res;
}

template <typename F, typename Df>
Tensor unary_op(const char* name, const Tensor& a, F f, Df df) {
  require(a.defined(), "unary op: undefined tensor");
  const std::int64_t n = a.numel();
  std::vector<float> out(static_cast<std::size_t>(n));
  const auto av = a.values();
  for (std::int64_t i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = f(av[i]);
  Tensor res = make_raw(a.shape(), std::move(out));
  check_finite(name, res.values());
  record_op(res, {a}, [ad = a.d_, od = res.d_, n, df] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      ga[ui] += od->grad[ui] * df(ad->values[ui], od->values[ui]);
    }
  });
  return res;
}

constexpr float kDivEps = 1e-8f;
constexpr float kLogEps = 1e-8f;

float guarded_denom(float b) {
  return b >= 0.0f ? std::max(b, kDivEps) : std::min(b, -kDivEps);
}

}  // namespace

// ---- Tensor ----

Tensor make_tensor(Shape shape, std::vector<float> values) {
  require(numel_of(shape) == static_cast<std::int64_t>(values.size()),
          "tensor: values length does not match shape");
  return make_raw(std::move(shape), std::move(values));
}

Tensor Tensor::zeros(Shape shape) {
  const auto n = static_cast<std::size_t>(numel_of(shape));
  return make_raw(std::move(shape), std::vector<float>(n, 0.0f));
}

Tensor Tensor::full(Shape shape, float value) {
  const auto n = static_cast<std::size_t>(numel_of(shape));
  Tensor t = make_raw(std::move(shape), std::vector<float>(n, value));
  check_finite("full", t.values());
  return t;
}

Tensor Tensor::from(std::vector<float> values, Shape shape) {
  Tensor t = make_tensor(std::move(shape), std::move(values));
  check_finite("from", t.values());
  return t;
}

Tensor Tensor::scalar(float value) { return Tensor::from({value}, {1}); }

float Tensor::item() const {
  require(numel() == 1, "item: tensor is not scalar");
  return d_->values[0];
}

Tensor& Tensor::set_requires_grad(bool v) {
  d_->requires_grad = v;
  return *this;
}

std::span<const float> Tensor::grad() const {
  if (d_->grad.empty()) throw std::runtime_error("grad: not populated");
  return d_->grad;
}

void Tensor::zero_grad() {
  std::fill(d_->grad.begin(), d_->grad.end(), 0.0f);
}

Tensor Tensor::clone() const {
  Tensor t = make_raw(d_->shape, d_->values);
  t.d_->requires_grad = d_->requires_grad;
  return t;
}

// ---- Tape ----

Tape::Tape() {
  prev_ = g_tape;
  g_tape = this;
}

Tape::~Tape() { g_tape = prev_; }

Tape* Tape::current() { return g_tape; }

void Tape::record(std::function<void()> backward_fn) {
  nodes_.push_back(std::move(backward_fn));
}

void Tape::backward(const Tensor& loss) {
  require(loss.defined() && loss.numel() == 1, "backward: loss must be scalar");
  ensure_grad(*loss.d_)[0] += 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op("add", a, b, [](float x, float y) { return x + y; },
                   [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; });
}

Tensor add(const Tensor& a, float b) { return add(a, Tensor::scalar(b)); }

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op("sub", a, b, [](float x, float y) { return x - y; },
                   [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; });
}

Tensor sub(float a, const Tensor& b) { return sub(Tensor::scalar(a), b); }

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op("mul", a, b, [](float x, float y) { return x * y; },
                   [](float, float y) { return y; }, [](float x, float) { return x; });
}

Tensor mul(const Tensor& a, float b) { return mul(a, Tensor::scalar(b)); }

Tensor div(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](float x, float y) { return x / guarded_denom(y); },
      [](float, float y) { return 1.0f / guarded_denom(y); },
      [](float x, float y) {
        if (std::fabs(y) <= kDivEps) return 0.0f;
        return -x / (y * y);
      });
}

Tensor abs(const Tensor& a) {
  return unary_op("abs", a, [](float x) { return std::fabs(x); },
                  [](float x, float) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); });
}

Tensor log(const Tensor& a) {
  return unary_op("log", a, [](float x) { return std::log(std::max(x, kLogEps)); },
                  [](float x, float) { return x > kLogEps ? 1.0f / x : 0.0f; });
}

Tensor exp(const Tensor& a) {
  return unary_op("exp", a, [](float x) { return std::exp(x); },
                  [](float, float y) { return y; });
}

Tensor sqrt(const Tensor& a) {
  return unary_op("sqrt", a, [](float x) { return std::sqrt(x); },
                  [](float, float y) { return y > 0.0f ? 0.5f / y : 0.0f; });
}

Tensor relu(const Tensor& a) {
  return unary_op("relu", a, [](float x) { return x > 0.0f ? x : 0.0f; },
                  [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      "sigmoid", a,
      [](float x) {
        if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
        const float e = std::exp(x);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor tanh(const Tensor& a) {
  return unary_op("tanh", a, [](float x) { return std::tanh(x); },
                  [](float, float y) { return 1.0f - y * y; });
}

Tensor sign(const Tensor& a) {
  return unary_op("sign", a,
                  [](float x) { return x > 0.0f ? 1.0f : (x < 0.0f ? -1.0f : 0.0f); },
                  [](float, float) { return 0.0f; });
}

Tensor clamp_min(const Tensor& a, float lo) {
  return unary_op("clamp_min", a, [lo](float x) { return std::max(x, lo); },
                  [lo](float x, float) { return x > lo ? 1.0f : 0.0f; });
}

Tensor clamp(const Tensor& a, float lo, float hi) {
  require(lo <= hi, "clamp: lo > hi");
  return unary_op("clamp", a, [lo, hi](float x) { return std::min(std::max(x, lo), hi); },
                  [lo, hi](float x, float) { return (x > lo && x < hi) ? 1.0f : 0.0f; });
}

Tensor neg(const Tensor& a) {
  return unary_op("neg", a, [](float x) { return -x; }, [](float, float) { return -1.0f; });
}

// ---- structure ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: rank-2 tensors required");
  const std::int64_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  require(k == k2, "matmul: inner dimensions disagree");
  std::vector<float> out(static_cast<std::size_t>(m * n));
  const auto av = a.values();
  const auto bv = b.values();
  for (std::int64_t i = 0; i < m; ++i) {
    for (std::int64_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::int64_t l = 0; l < k; ++l) {
        acc += static_cast<double>(av[i * k + l]) * static_cast<double>(bv[l * n + j]);
      }
      out[static_cast<std::size_t>(i * n + j)] = static_cast<float>(acc);
    }
  }
  Tensor res = make_raw({m, n}, std::move(out));
  check_finite("matmul", res.values());
  record_op(res, {a, b}, [ad = a.d_, bd = b.d_, od = res.d_, m, k, n,
                          ta = tracked(a), tb = tracked(b)] {
    if (od->grad.empty()) return;
    const auto& g = od->grad;
    if (ta) {
      auto& ga = ensure_grad(*ad);
      for (std::int64_t i = 0; i < m; ++i) {
        for (std::int64_t l = 0; l < k; ++l) {
          double acc = 0.0;
          for (std::int64_t j = 0; j < n; ++j) {
            acc += static_cast<double>(g[static_cast<std::size_t>(i * n + j)]) *
                   static_cast<double>(bd->values[static_cast<std::size_t>(l * n + j)]);
          }
          ga[static_cast<std::size_t>(i * k + l)] += static_cast<float>(acc);
        }
      }
    }
    if (tb) {
      auto& gb = ensure_grad(*bd);
      for (std::int64_t l = 0; l < k; ++l) {
        for (std::int64_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::int64_t i = 0; i < m; ++i) {
            acc += static_cast<double>(ad->values[static_cast<std::size_t>(i * k + l)]) *
                   static_cast<double>(g[static_cast<std::size_t>(i * n + j)]);
          }
          gb[static_cast<std::size_t>(l * n + j)] += static_cast<float>(acc);
        }
      }
    }
  });
  return res;
}

Tensor transpose(const Tensor& a) {
  require(a.rank() == 2, "transpose: rank-2 tensor required");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  std::vector<float> out(static_cast<std::size_t>(r * c));
  const auto av = a.values();
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      out[static_cast<std::size_t>(j * r + i)] = av[i * c + j];
    }
  }
  Tensor res = make_raw({c, r}, std::move(out));
  record_op(res, {a}, [ad = a.d_, od = res.d_, r, c] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::int64_t i = 0; i < r; ++i) {
      for (std::int64_t j = 0; j < c; ++j) {
        ga[static_cast<std::size_t>(i * c + j)] += od->grad[static_cast<std::size_t>(j * r + i)];
      }
    }
  });
  return res;
}

Tensor reshape(const Tensor& a, Shape shape) {
  require(numel_of(shape) == a.numel(), "reshape: element count mismatch");
  std::vector<float> vals(a.values().begin(), a.values().end());
  Tensor res = make_raw(std::move(shape), std::move(vals));
  record_op(res, {a}, [ad = a.d_, od = res.d_] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += od->grad[i];
  });
  return res;
}

Tensor pad_reflect_right(const Tensor& x, std::int64_t n) {
  require(x.rank() == 1, "pad_reflect_right: rank-1 tensor required");
  require(n >= 0, "pad_reflect_right: negative pad");
  const std::int64_t len = x.dim(0);
  require(n == 0 || len >= 2, "pad_reflect_right: signal too short to reflect");
  require(n <= len - 1 || n == 0, "pad_reflect_right: pad exceeds reflectable range");
  std::vector<float> out(static_cast<std::size_t>(len + n));
  const auto xv = x.values();
  std::copy(xv.begin(), xv.end(), out.begin());
  for (std::int64_t i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(len + i)] = xv[len - 2 - i];
  }
  Tensor res = make_raw({len + n}, std::move(out));
  record_op(res, {x}, [ad = x.d_, od = res.d_, len, n] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::int64_t i = 0; i < len; ++i) ga[static_cast<std::size_t>(i)] += od->grad[static_cast<std::size_t>(i)];
    for (std::int64_t i = 0; i < n; ++i) {
      ga[static_cast<std::size_t>(len - 2 - i)] += od->grad[static_cast<std::size_t>(len + i)];
    }
  });
  return res;
}

Tensor take_front(const Tensor& x, std::int64_t n) {
  require(x.rank() == 1, "take_front: rank-1 tensor required");
  require(n >= 0 && n <= x.dim(0), "take_front: length out of range");
  const auto xv = x.values();
  std::vector<float> out(xv.begin(), xv.begin() + n);
  Tensor res = make_raw({n}, std::move(out));
  record_op(res, {x}, [ad = x.d_, od = res.d_, n] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::int64_t i = 0; i < n; ++i) ga[static_cast<std::size_t>(i)] += od->grad[static_cast<std::size_t>(i)];
  });
  return res;
}

Tensor frame_signal(const Tensor& x, std::int64_t frame_len, std::int64_t shift) {
  require(x.rank() == 1, "frame_signal: rank-1 tensor required");
  require(frame_len > 0 && shift > 0, "frame_signal: frame_len and shift must be positive");
  const std::int64_t len = x.dim(0);
  require(len >= frame_len, "frame_signal: signal shorter than one frame");
  const std::int64_t frames = 1 + (len - frame_len) / shift;
  std::vector<float> out(static_cast<std::size_t>(frames * frame_len));
  const auto xv = x.values();
  for (std::int64_t t = 0; t < frames; ++t) {
    for (std::int64_t i = 0; i < frame_len; ++i) {
      out[static_cast<std::size_t>(t * frame_len + i)] = xv[t * shift + i];
    }
  }
  Tensor res = make_raw({frames, frame_len}, std::move(out));
  record_op(res, {x}, [ad = x.d_, od = res.d_, frames, frame_len, shift] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::int64_t t = 0; t < frames; ++t) {
      for (std::int64_t i = 0; i < frame_len; ++i) {
        ga[static_cast<std::size_t>(t * shift + i)] +=
            od->grad[static_cast<std::size_t>(t * frame_len + i)];
      }
    }
  });
  return res;
}

Tensor conv1d(const Tensor& input, const Tensor& kernels, std::int64_t stride,
              std::int64_t dilation, std::int64_t padding) {
  require(input.rank() == 2, "conv1d: input must be [channels, length]");
  require(kernels.rank() == 3, "conv1d: kernels must be [out, in, k]");
  require(stride >= 1 && dilation >= 1 && padding >= 0, "conv1d: bad stride/dilation/padding");
  const std::int64_t ci = input.dim(0), len = input.dim(1);
  const std::int64_t co = kernels.dim(0), ci2 = kernels.dim(1), k = kernels.dim(2);
  require(ci == ci2, "conv1d: channel mismatch");
  const std::int64_t lo = (len + 2 * padding - dilation * (k - 1) - 1) / stride + 1;
  if (len + 2 * padding < dilation * (k - 1) + 1 || lo <= 0) {
    throw std::invalid_argument("conv1d: output length would be non-positive");
  }
  std::vector<float> out(static_cast<std::size_t>(co * lo));
  const auto xv = input.values();
  const auto wv = kernels.values();
  for (std::int64_t oc = 0; oc < co; ++oc) {
    for (std::int64_t o = 0; o < lo; ++o) {
      double acc = 0.0;
      for (std::int64_t ic = 0; ic < ci; ++ic) {
        for (std::int64_t j = 0; j < k; ++j) {
          const std::int64_t pos = o * stride - padding + j * dilation;
          if (pos < 0 || pos >= len) continue;
          acc += static_cast<double>(xv[ic * len + pos]) *
                 static_cast<double>(wv[(oc * ci + ic) * k + j]);
        }
      }
      out[static_cast<std::size_t>(oc * lo + o)] = static_cast<float>(acc);
    }
  }
  Tensor res = make_raw({co, lo}, std::move(out));
  check_finite("conv1d", res.values());
  record_op(res, {input, kernels},
            [ad = input.d_, wd = kernels.d_, od = res.d_, ci, len, co, k, lo, stride, dilation,
             padding, ta = tracked(input), tw = tracked(kernels)] {
    if (od->grad.empty()) return;
    const auto& g = od->grad;
    if (ta) {
      auto& ga = ensure_grad(*ad);
      for (std::int64_t oc = 0; oc < co; ++oc) {
        for (std::int64_t o = 0; o < lo; ++o) {
          const float go = g[static_cast<std::size_t>(oc * lo + o)];
          if (go == 0.0f) continue;
          for (std::int64_t ic = 0; ic < ci; ++ic) {
            for (std::int64_t j = 0; j < k; ++j) {
              const std::int64_t pos = o * stride - padding + j * dilation;
              if (pos < 0 || pos >= len) continue;
              ga[static_cast<std::size_t>(ic * len + pos)] +=
                  go * wd->values[static_cast<std::size_t>((oc * ci + ic) * k + j)];
            }
          }
        }
      }
    }
    if (tw) {
      auto& gw = ensure_grad(*wd);
      for (std::int64_t oc = 0; oc < co; ++oc) {
        for (std::int64_t ic = 0; ic < ci; ++ic) {
          for (std::int64_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::int64_t o = 0; o < lo; ++o) {
              const std::int64_t pos = o * stride - padding + j * dilation;
              if (pos < 0 || pos >= len) continue;
              acc += static_cast<double>(g[static_cast<std::size_t>(oc * lo + o)]) *
                     static_cast<double>(ad->values[static_cast<std::size_t>(ic * len + pos)]);
            }
            gw[static_cast<std::size_t>((oc * ci + ic) * k + j)] += static_cast<float>(acc);
          }
        }
      }
    }
  });
  return res;
}

Tensor conv_transpose1d(const Tensor& input, const Tensor& kernels, std::int64_t stride) {
  require(input.rank() == 2, "conv_transpose1d: input must be [channels, length]");
  require(kernels.rank() == 3, "conv_transpose1d: kernels must be [in, out, k]");
  require(stride >= 1, "conv_transpose1d: bad stride");
  const std::int64_t ci = input.dim(0), len = input.dim(1);
  const std::int64_t ci2 = kernels.dim(0), co = kernels.dim(1), k = kernels.dim(2);
  require(ci == ci2, "conv_transpose1d: channel mismatch");
  const std::int64_t lo = (len - 1) * stride + k;
  std::vector<float> out(static_cast<std::size_t>(co * lo), 0.0f);
  const auto xv = input.values();
  const auto wv = kernels.values();
  for (std::int64_t ic = 0; ic < ci; ++ic) {
    for (std::int64_t i = 0; i < len; ++i) {
      const float x = xv[ic * len + i];
      if (x == 0.0f) continue;
      for (std::int64_t oc = 0; oc < co; ++oc) {
        for (std::int64_t j = 0; j < k; ++j) {
          out[static_cast<std::size_t>(oc * lo + i * stride + j)] +=
              x * wv[(ic * co + oc) * k + j];
        }
      }
    }
  }
  Tensor res = make_raw({co, lo}, std::move(out));
  check_finite("conv_transpose1d", res.values());
  record_op(res, {input, kernels},
            [ad = input.d_, wd = kernels.d_, od = res.d_, ci, len, co, k, lo, stride,
             ta = tracked(input), tw = tracked(kernels)] {
    if (od->grad.empty()) return;
    const auto& g = od->grad;
    if (ta) {
      auto& ga = ensure_grad(*ad);
      for (std::int64_t ic = 0; ic < ci; ++ic) {
        for (std::int64_t i = 0; i < len; ++i) {
          double acc = 0.0;
          for (std::int64_t oc = 0; oc < co; ++oc) {
            for (std::int64_t j = 0; j < k; ++j) {
              acc += static_cast<double>(g[static_cast<std::size_t>(oc * lo + i * stride + j)]) *
                     static_cast<double>(wd->values[static_cast<std::size_t>((ic * co + oc) * k + j)]);
            }
          }
          ga[static_cast<std::size_t>(ic * len + i)] += static_cast<float>(acc);
        }
      }
    }
    if (tw) {
      auto& gw = ensure_grad(*wd);
      for (std::int64_t ic = 0; ic < ci; ++ic) {
        for (std::int64_t oc = 0; oc < co; ++oc) {
          for (std::int64_t j = 0; j < k; ++j) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < len; ++i) {
              acc += static_cast<double>(ad->values[static_cast<std::size_t>(ic * len + i)]) *
                     static_cast<double>(g[static_cast<std::size_t>(oc * lo + i * stride + j)]);
            }
            gw[static_cast<std::size_t>((ic * co + oc) * k + j)] += static_cast<float>(acc);
          }
        }
      }
    }
  });
  return res;
}

Tensor bias_add(const Tensor& x, const Tensor& bias, int axis) {
  require(x.rank() == 2 && bias.rank() == 1, "bias_add: x must be rank-2, bias rank-1");
  require(axis == 0 || axis == 1, "bias_add: axis must be 0 or 1");
  const std::int64_t r = x.dim(0), c = x.dim(1);
  require(bias.dim(0) == (axis == 0 ? r : c), "bias_add: bias length mismatch");
  std::vector<float> out(static_cast<std::size_t>(r * c));
  const auto xv = x.values();
  const auto bv = bias.values();
  for (std::int64_t i = 0; i < r; ++i) {
    for (std::int64_t j = 0; j < c; ++j) {
      out[static_cast<std::size_t>(i * c + j)] = xv[i * c + j] + bv[axis == 0 ? i : j];
    }
  }
  Tensor res = make_raw({r, c}, std::move(out));
  check_finite("bias_add", res.values());
  record_op(res, {x, bias}, [ad = x.d_, bd = bias.d_, od = res.d_, r, c, axis,
                             ta = tracked(x), tb = tracked(bias)] {
    if (od->grad.empty()) return;
    const auto& g = od->grad;
    if (ta) {
      auto& ga = ensure_grad(*ad);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (tb) {
      auto& gb = ensure_grad(*bd);
      for (std::int64_t i = 0; i < r; ++i) {
        for (std::int64_t j = 0; j < c; ++j) {
          gb[static_cast<std::size_t>(axis == 0 ? i : j)] += g[static_cast<std::size_t>(i * c + j)];
        }
      }
    }
  });
  return res;
}

// ---- reductions ----

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (const float v : a.values()) acc += static_cast<double>(v);
  Tensor res = make_raw({1}, {static_cast<float>(acc)});
  check_finite("sum", res.values());
  record_op(res, {a}, [ad = a.d_, od = res.d_] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    const float g = od->grad[0];
    for (auto& v : ga) v += g;
  });
  return res;
}

Tensor mean(const Tensor& a) {
  const auto n = static_cast<double>(a.numel());
  require(a.numel() > 0, "mean: empty tensor");
  double acc = 0.0;
  for (const float v : a.values()) acc += static_cast<double>(v);
  Tensor res = make_raw({1}, {static_cast<float>(acc / n)});
  check_finite("mean", res.values());
  record_op(res, {a}, [ad = a.d_, od = res.d_, n] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    const float g = static_cast<float>(od->grad[0] / n);
    for (auto& v : ga) v += g;
  });
  return res;
}

Tensor reduce_max(const Tensor& a) {
  require(a.numel() > 0, "reduce_max: empty tensor");
  const auto av = a.values();
  std::size_t arg = 0;
  for (std::size_t i = 1; i < av.size(); ++i) {
    if (av[i] > av[arg]) arg = i;
  }
  Tensor res = make_raw({1}, {av[arg]});
  record_op(res, {a}, [ad = a.d_, od = res.d_, arg] {
    if (od->grad.empty()) return;
    ensure_grad(*ad)[arg] += od->grad[0];
  });
  return res;
}

namespace {

// axis 0 collapses rows -> [cols]; axis 1 collapses columns -> [rows]
template <typename Acc>
Tensor reduce_axis(const char* name, const Tensor& a, int axis, Acc acc_fn) {
  require(a.rank() == 2, "axis reduction: rank-2 tensor required");
  require(axis == 0 || axis == 1, "axis reduction: axis must be 0 or 1");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  const std::int64_t out_n = axis == 0 ? c : r;
  const std::int64_t in_n = axis == 0 ? r : c;
  std::vector<float> out(static_cast<std::size_t>(out_n));
  const auto av = a.values();
  for (std::int64_t o = 0; o < out_n; ++o) {
    out[static_cast<std::size_t>(o)] = acc_fn(av, r, c, axis, o, in_n);
  }
  Tensor res = make_raw({out_n}, std::move(out));
  check_finite(name, res.values());
  return res;
}

std::size_t at2(std::int64_t i, std::int64_t j, std::int64_t c) {
  return static_cast<std::size_t>(i * c + j);
}

}  // namespace

Tensor sum(const Tensor& a, int axis) {
  Tensor res = reduce_axis("sum", a, axis,
      [](std::span<const float> av, std::int64_t, std::int64_t c, int ax, std::int64_t o,
         std::int64_t in_n) {
        double acc = 0.0;
        for (std::int64_t i = 0; i < in_n; ++i) {
          acc += ax == 0 ? av[at2(i, o, c)] : av[at2(o, i, c)];
        }
        return static_cast<float>(acc);
      });
  const std::int64_t r = a.dim(0), c = a.dim(1);
  record_op(res, {a}, [ad = a.d_, od = res.d_, r, c, axis] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::int64_t i = 0; i < r; ++i) {
      for (std::int64_t j = 0; j < c; ++j) {
        ga[at2(i, j, c)] += od->grad[static_cast<std::size_t>(axis == 0 ? j : i)];
      }
    }
  });
  return res;
}

Tensor mean(const Tensor& a, int axis) {
  Tensor s = sum(a, axis);
  const float inv = 1.0f / static_cast<float>(axis == 0 ? a.dim(0) : a.dim(1));
  return mul(s, inv);
}

Tensor reduce_max(const Tensor& a, int axis) {
  require(a.rank() == 2, "reduce_max: rank-2 tensor required");
  require(axis == 0 || axis == 1, "reduce_max: axis must be 0 or 1");
  const std::int64_t r = a.dim(0), c = a.dim(1);
  const std::int64_t out_n = axis == 0 ? c : r;
  const std::int64_t in_n = axis == 0 ? r : c;
  std::vector<float> out(static_cast<std::size_t>(out_n));
  std::vector<std::size_t> args(static_cast<std::size_t>(out_n));
  const auto av = a.values();
  for (std::int64_t o = 0; o < out_n; ++o) {
    std::size_t best = axis == 0 ? at2(0, o, c) : at2(o, 0, c);
    for (std::int64_t i = 1; i < in_n; ++i) {
      const std::size_t idx = axis == 0 ? at2(i, o, c) : at2(o, i, c);
      if (av[idx] > av[best]) best = idx;
    }
    out[static_cast<std::size_t>(o)] = av[best];
    args[static_cast<std::size_t>(o)] = best;
  }
  Tensor res = make_raw({out_n}, std::move(out));
  record_op(res, {a}, [ad = a.d_, od = res.d_, args = std::move(args)] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    for (std::size_t o = 0; o < args.size(); ++o) ga[args[o]] += od->grad[o];
  });
  return res;
}

// ---- composite ----

Tensor log_softmax(const Tensor& a, int axis) {
  const bool row_case = (a.rank() == 2 && axis == 1) || (a.rank() == 1 && axis == 0);
  require(row_case, "log_softmax: axis must be the last axis");
  const std::int64_t rows = a.rank() == 2 ? a.dim(0) : 1;
  const std::int64_t cols = a.rank() == 2 ? a.dim(1) : a.dim(0);
  require(cols > 0, "log_softmax: empty axis");
  std::vector<float> out(static_cast<std::size_t>(rows * cols));
  const auto av = a.values();
  for (std::int64_t i = 0; i < rows; ++i) {
    float mx = av[i * cols];
    for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, av[i * cols + j]);
    double lse = 0.0;
    for (std::int64_t j = 0; j < cols; ++j) {
      lse += std::exp(static_cast<double>(av[i * cols + j]) - static_cast<double>(mx));
    }
    const double shift = static_cast<double>(mx) + std::log(lse);
    for (std::int64_t j = 0; j < cols; ++j) {
      out[static_cast<std::size_t>(i * cols + j)] =
          static_cast<float>(static_cast<double>(av[i * cols + j]) - shift);
    }
  }
  Tensor res = make_raw(a.shape(), std::move(out));
  check_finite("log_softmax", res.values());
  record_op(res, {a}, [ad = a.d_, od = res.d_, rows, cols] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    const auto& g = od->grad;
    for (std::int64_t i = 0; i < rows; ++i) {
      double gsum = 0.0;
      for (std::int64_t j = 0; j < cols; ++j) gsum += g[static_cast<std::size_t>(i * cols + j)];
      for (std::int64_t j = 0; j < cols; ++j) {
        const auto idx = static_cast<std::size_t>(i * cols + j);
        ga[idx] += g[idx] - static_cast<float>(std::exp(static_cast<double>(od->values[idx])) * gsum);
      }
    }
  });
  return res;
}

Tensor nll_loss(const Tensor& log_probs, const std::vector<std::int64_t>& labels) {
  require(log_probs.rank() == 2, "nll_loss: log_probs must be [frames, classes]");
  const std::int64_t t = log_probs.dim(0), v = log_probs.dim(1);
  require(static_cast<std::int64_t>(labels.size()) == t, "nll_loss: label count mismatch");
  const auto lp = log_probs.values();
  double acc = 0.0;
  for (std::int64_t i = 0; i < t; ++i) {
    const std::int64_t l = labels[static_cast<std::size_t>(i)];
    require(l >= 0 && l < v, "nll_loss: label index out of range");
    acc -= static_cast<double>(lp[i * v + l]);
  }
  Tensor res = make_raw({1}, {static_cast<float>(acc / static_cast<double>(t))});
  check_finite("nll_loss", res.values());
  record_op(res, {log_probs}, [ad = log_probs.d_, od = res.d_, labels, t, v] {
    if (od->grad.empty()) return;
    auto& ga = ensure_grad(*ad);
    const float g = od->grad[0] / static_cast<float>(t);
    for (std::int64_t i = 0; i < t; ++i) {
      ga[static_cast<std::size_t>(i * v + labels[static_cast<std::size_t>(i)])] -= g;
    }
  });
  return res;
}

// ---- optimizers ----

void sgd_step(const std::vector<Tensor>& params, float lr) {
  for (const Tensor& p : params) {
    if (!p.has_grad()) throw std::runtime_error("sgd_step: parameter has no gradient");
  }
  for (Tensor p : params) {
    auto vals = p.values_mut();
    const auto g = p.grad();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] -= lr * g[i];
  }
}

void Adam::step(const std::vector<Tensor>& params) {
  for (const Tensor& p : params) {
    if (!p.has_grad()) throw std::runtime_error("adam_step: parameter has no gradient");
  }
  if (slots_.empty()) {
    slots_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      slots_[i].m.assign(static_cast<std::size_t>(params[i].numel()), 0.0f);
      slots_[i].v.assign(static_cast<std::size_t>(params[i].numel()), 0.0f);
    }
  }
  require(slots_.size() == params.size(), "adam_step: parameter list changed size");
  ++t_;
  const float bc1 = 1.0f - std::pow(beta1_, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(beta2_, static_cast<float>(t_));
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor p = params[pi];
    auto vals = p.values_mut();
    const auto g = p.grad();
    auto& m = slots_[pi].m;
    auto& v = slots_[pi].v;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      m[i] = beta1_ * m[i] + (1.0f - beta1_) * g[i];
      v[i] = beta2_ * v[i] + (1.0f - beta2_) * g[i] * g[i];
      const float mhat = m[i] / bc1;
      const float vhat = v[i] / bc2;
      vals[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

void zero_grads(const std::vector<Tensor>& params) {
  for (Tensor p : params) p.zero_grad();
}

}  // namespace advspeech
