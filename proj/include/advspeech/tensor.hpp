#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace advspeech {

using Shape = std::vector<std::int64_t>;

namespace detail {
struct TensorData {
  Shape shape;
  std::vector<float> values;
  std::vector<float> grad;   // empty until touched by backward
  bool requires_grad = false;
  bool on_tape = false;      // produced by a recorded op, or a leaf that wants grad
};
}  // namespace detail

// Value-semantic handle to shared tensor storage. 32-bit floats, row-major.
// Copies alias the same storage; clone() makes a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from(std::vector<float> values, Shape shape);
  static Tensor scalar(float value);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::int64_t numel() const { return static_cast<std::int64_t>(d_->values.size()); }
  std::int64_t dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(d_->shape.size()); }

  std::span<const float> values() const { return d_->values; }
  std::span<float> values_mut() { return d_->values; }
  float item() const;  // requires numel() == 1

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool v);
  bool has_grad() const { return !d_->grad.empty(); }
  std::span<const float> grad() const;   // throws if never populated
  void zero_grad();

  Tensor clone() const;

  // Identity of the underlying storage, for aliasing checks.
  const void* data_id() const { return d_.get(); }

  std::shared_ptr<detail::TensorData> d_;  // shared with recorded backward closures

 private:
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
  friend Tensor make_tensor(Shape shape, std::vector<float> values);
};

Tensor make_tensor(Shape shape, std::vector<float> values);

// Reverse-mode tape. Ops append one node each while a tape is active; nodes
// hold a backward closure over the involved storage. Construction pushes the
// tape onto a thread-local stack, destruction pops it, so a tape and its
// tensors stay confined to one worker.
class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static Tape* current();

  void record(std::function<void()> backward_fn);
  std::size_t size() const { return nodes_.size(); }

  // Seeds grad(loss) = 1 and walks the tape in reverse; each node runs once.
  // Accumulates into any grads already present.
  void backward(const Tensor& loss);

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* prev_ = nullptr;
};

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, float b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor sub(float a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, float b);
// Guards the denominator at magnitude 1e-8.
Tensor div(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& a);
// log(max(x, 1e-8))
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
// Non-differentiable by definition (gradient zero); sign(0) = 0.
Tensor sign(const Tensor& a);
Tensor clamp_min(const Tensor& a, float lo);
Tensor clamp(const Tensor& a, float lo, float hi);
Tensor neg(const Tensor& a);

// ---- structure ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// Same element count, new shape; gradient passes through unchanged.
Tensor reshape(const Tensor& a, Shape shape);
// x: [C], n >= 0 reflected samples appended at the end.
Tensor pad_reflect_right(const Tensor& x, std::int64_t n);
// first n entries of a 1-D tensor
Tensor take_front(const Tensor& x, std::int64_t n);
// x: [L] -> [frames, frame_len], frame t starts at t*shift
Tensor frame_signal(const Tensor& x, std::int64_t frame_len, std::int64_t shift);

// input [C_in, L], kernels [C_out, C_in, K]; cross-correlation convention.
Tensor conv1d(const Tensor& input, const Tensor& kernels, std::int64_t stride,
              std::int64_t dilation, std::int64_t padding);
// input [C_in, L], kernels [C_in, C_out, K] -> [C_out, (L-1)*stride + K]
Tensor conv_transpose1d(const Tensor& input, const Tensor& kernels, std::int64_t stride);
// x [R, C]; axis 0: bias over rows (len R), axis 1: bias over columns (len C)
Tensor bias_add(const Tensor& x, const Tensor& bias, int axis);

// ---- reductions ----
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor reduce_max(const Tensor& a);
// 2-D only; axis 0 collapses rows, axis 1 collapses columns.
Tensor sum(const Tensor& a, int axis);
Tensor mean(const Tensor& a, int axis);
Tensor reduce_max(const Tensor& a, int axis);

// ---- composite/fused ----
// Stabilized row-wise (axis must be the last axis): x - max - logsumexp.
Tensor log_softmax(const Tensor& a, int axis);
// Mean over rows of -log_probs[t, labels[t]].
Tensor nll_loss(const Tensor& log_probs, const std::vector<std::int64_t>& labels);

// ---- optimizers ----
void sgd_step(const std::vector<Tensor>& params, float lr);

class Adam {
 public:
  Adam(float lr, float beta1 = 0.9f, float beta2 = 0.999f, float eps = 1e-8f)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}
  // State is created on first use and keyed by position, so the same
  // parameter list must be passed on every call.
  void step(const std::vector<Tensor>& params);
  float lr() const { return lr_; }
  void set_lr(float lr) { lr_ = lr; }

 private:
  struct Slot {
    std::vector<float> m, v;
  };
  float lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<Slot> slots_;
};

void zero_grads(const std::vector<Tensor>& params);

}  // namespace advspeech
