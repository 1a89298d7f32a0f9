#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "advspeech/io.hpp"
#include "advspeech/tensor.hpp"
#include "testutil.hpp"

using namespace advspeech;

namespace {

std::vector<float> vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("elementwise add") {
  Tensor a = Tensor::from({1, 2}, {2});
  Tensor b = Tensor::from({3, 4}, {2});
  CHECK(vec(add(a, b)) == std::vector<float>{4, 6});
  CHECK(vec(add(a, 10.0f)) == std::vector<float>{11, 12});
  CHECK_THROWS_AS(add(a, Tensor::from({1, 2, 3}, {3})), std::invalid_argument);
}

TEST_CASE("sign is zero at zero and non-differentiable") {
  Tensor x = Tensor::from({-0.5f, 0.0f, 2.0f}, {3});
  x.set_requires_grad(true);
  Tape tape;
  Tensor s = sign(x);
  CHECK(vec(s) == std::vector<float>{-1, 0, 1});
  tape.backward(sum(s));
  for (const float g : x.grad()) CHECK(g == 0.0f);
}

TEST_CASE("relu backward") {
  Tensor x = Tensor::from({-1, 2}, {2});
  x.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(relu(x)));  // upstream [1, 1]
  CHECK(vec(Tensor(x)) == std::vector<float>{-1, 2});
  CHECK(x.grad()[0] == 0.0f);
  CHECK(x.grad()[1] == 1.0f);
}

TEST_CASE("matmul identity and dot product") {
  Tensor eye = Tensor::from({1, 0, 0, 1}, {2, 2});
  Tensor v = Tensor::from({5, 7}, {2, 1});
  CHECK(vec(matmul(eye, v)) == std::vector<float>{5, 7});
  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor b = Tensor::from({3, 4}, {2, 1});
  CHECK(matmul(a, b).item() == 11.0f);
  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("matmul gradient of sum w.r.t. right operand") {
  Tensor a = Tensor::from({1, 2}, {1, 2});
  Tensor b = Tensor::from({3, 4}, {2, 1});
  b.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(matmul(a, b)));
  CHECK(b.grad()[0] == 1.0f);
  CHECK(b.grad()[1] == 2.0f);
}

TEST_CASE("conv1d identity and strided/dilated examples") {
  Tensor x = Tensor::from({1, 2, 3}, {1, 3});
  Tensor k1 = Tensor::from({1}, {1, 1, 1});
  CHECK(vec(conv1d(x, k1, 1, 1, 0)) == std::vector<float>{1, 2, 3});

  Tensor x4 = Tensor::from({1, 2, 3, 4}, {1, 4});
  Tensor k2 = Tensor::from({1, 1}, {1, 1, 2});
  CHECK(vec(conv1d(x4, k2, 2, 1, 0)) == std::vector<float>{3, 7});
  CHECK(vec(conv1d(x4, k2, 1, 2, 0)) == std::vector<float>{4, 6});

  CHECK_THROWS_AS(conv1d(x, Tensor::from({1, 1, 1, 1}, {1, 1, 4}), 1, 1, 0),
                  std::invalid_argument);
}

TEST_CASE("conv1d equals the nested-loop oracle exactly") {
  Rng rng(11);
  for (std::int64_t len = 4; len <= 16; len += 3) {
    for (std::int64_t k = 1; k <= 4; ++k) {
      for (std::int64_t stride = 1; stride <= 3; ++stride) {
        for (std::int64_t dilation = 1; dilation <= 3; ++dilation) {
          for (std::int64_t padding = 0; padding <= 2; ++padding) {
            if (len + 2 * padding < dilation * (k - 1) + 1) continue;
            const std::int64_t ci = 2, co = 3;
            Tensor x = testutil::random_tensor({ci, len}, rng);
            Tensor w = testutil::random_tensor({co, ci, k}, rng);
            const auto got = conv1d(x, w, stride, dilation, padding);
            const auto want = testutil::naive_conv1d(vec(x), ci, len, vec(w), co, k, stride,
                                                     dilation, padding);
            REQUIRE(vec(got) == want);
          }
        }
      }
    }
  }
}

TEST_CASE("conv1d gradients match finite differences") {
  Rng rng(3);
  Tensor x = testutil::random_tensor({2, 12}, rng);
  Tensor w = testutil::random_tensor({3, 2, 3}, rng);
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  const auto loss = [&] { return sum(mul(conv1d(x, w, 2, 2, 1), conv1d(x, w, 2, 2, 1))); };
  CHECK(testutil::fd_check(loss, {x, w}) <= 1.0);
}

TEST_CASE("conv_transpose1d inverts encoder geometry and passes fd") {
  Rng rng(5);
  Tensor x = testutil::random_tensor({2, 7}, rng);
  Tensor w = testutil::random_tensor({2, 3, 4}, rng);
  Tensor y = conv_transpose1d(x, w, 2);
  CHECK(y.shape() == Shape{3, (7 - 1) * 2 + 4});
  x.set_requires_grad(true);
  w.set_requires_grad(true);
  const auto loss = [&] { return mean(mul(conv_transpose1d(x, w, 2), conv_transpose1d(x, w, 2))); };
  CHECK(testutil::fd_check(loss, {x, w}) <= 1.0);
}

TEST_CASE("log_softmax") {
  Tensor z = Tensor::from({0, 0}, {2});
  const auto out = vec(log_softmax(z, 0));
  CHECK(out[0] == doctest::Approx(std::log(0.5)).epsilon(1e-6));
  CHECK(out[1] == doctest::Approx(std::log(0.5)).epsilon(1e-6));

  Rng rng(17);
  Tensor v = testutil::random_tensor({4, 6}, rng, -3, 3);
  const auto ls = log_softmax(v, 1);
  for (std::int64_t i = 0; i < 4; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < 6; ++j) s += std::exp(ls.values()[i * 6 + j]);
    CHECK(s == doctest::Approx(1.0).epsilon(1e-5));
  }

  const auto big = vec(log_softmax(Tensor::from({1000, 0}, {2}), 0));
  CHECK(std::isfinite(big[0]));
  CHECK(std::isfinite(big[1]));
}

TEST_CASE("log_softmax gradient") {
  Rng rng(23);
  Tensor v = testutil::random_tensor({3, 5}, rng, -2, 2);
  v.set_requires_grad(true);
  Tensor weights = testutil::random_tensor({3, 5}, rng);
  const auto loss = [&] { return sum(mul(log_softmax(v, 1), weights)); };
  CHECK(testutil::fd_check(loss, {v}) <= 1.0);
}

TEST_CASE("backward populates gradients and accumulates") {
  Tensor x = Tensor::from({1, 2}, {2});
  x.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(sum(mul(x, x)));
  }
  CHECK(x.grad()[0] == 2.0f);
  CHECK(x.grad()[1] == 4.0f);
  {
    Tape tape;
    tape.backward(sum(mul(x, x)));  // no zero_grad in between
  }
  CHECK(x.grad()[0] == 4.0f);
  CHECK(x.grad()[1] == 8.0f);
}

TEST_CASE("loss independent of a leaf leaves its gradient zero") {
  Tensor x = Tensor::from({1, 2}, {2});
  Tensor y = Tensor::from({3, 4}, {2});
  x.set_requires_grad(true);
  y.set_requires_grad(true);
  Tape tape;
  tape.backward(sum(mul(y, y)));
  CHECK_FALSE(x.has_grad());  // never touched: identically zero gradient
}

TEST_CASE("backward requires a scalar loss") {
  Tensor x = Tensor::from({1, 2}, {2});
  x.set_requires_grad(true);
  Tape tape;
  Tensor y = mul(x, x);
  CHECK_THROWS_AS(tape.backward(y), std::invalid_argument);
}

TEST_CASE("random network gradients match finite differences") {
  // ~20 parameters through matmul, relu, sigmoid, tanh, log, exp chains
  Rng rng(41);
  Tensor w1 = testutil::random_tensor({3, 4}, rng);
  Tensor b1 = testutil::random_tensor({4}, rng);
  Tensor w2 = testutil::random_tensor({4, 1}, rng);
  Tensor x = testutil::random_tensor({2, 3}, rng);
  for (Tensor t : {w1, b1, w2}) t.set_requires_grad(true);
  const auto loss = [&] {
    Tensor h = tanh(bias_add(matmul(x, w1), b1, 1));
    Tensor u = sigmoid(matmul(h, w2));
    return mean(log(add(mul(u, u), 0.5f)));
  };
  CHECK(testutil::fd_check(loss, {w1, b1, w2}) <= 1.0);
}

TEST_CASE("div guards the denominator") {
  Tensor a = Tensor::from({1}, {1});
  Tensor b = Tensor::from({2}, {1});
  CHECK(div(a, b).item() == 0.5f);
  // a zero denominator is guarded rather than producing inf
  CHECK(div(a, Tensor::from({0}, {1})).item() == doctest::Approx(1e8));
}

TEST_CASE("non-finite results are rejected") {
  Tensor big = Tensor::full({2}, 1e30f);
  CHECK_THROWS_AS(mul(big, big), std::runtime_error);
  CHECK_THROWS_AS(Tensor::from({std::nanf("")}, {1}), std::runtime_error);
}

TEST_CASE("reductions") {
  Tensor m = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
  CHECK(sum(m).item() == 21.0f);
  CHECK(mean(m).item() == 3.5f);
  CHECK(reduce_max(m).item() == 6.0f);
  CHECK(vec(sum(m, 0)) == std::vector<float>{5, 7, 9});
  CHECK(vec(sum(m, 1)) == std::vector<float>{6, 15});
  CHECK(vec(reduce_max(m, 1)) == std::vector<float>{3, 6});
  Tensor x = m.clone();
  x.set_requires_grad(true);
  const auto loss = [&] { return sum(mul(reduce_max(x, 1), reduce_max(x, 1))); };
  CHECK(testutil::fd_check(loss, {x}) <= 1.0);
}

TEST_CASE("structure ops pass fd checks") {
  Rng rng(53);
  Tensor x = testutil::random_tensor({9}, rng);
  x.set_requires_grad(true);
  const auto loss = [&] {
    Tensor padded = pad_reflect_right(x, 4);
    Tensor framed = frame_signal(padded, 4, 2);
    Tensor t = transpose(framed);
    return mean(mul(t, t));
  };
  CHECK(testutil::fd_check(loss, {x}) <= 1.0);

  const auto loss2 = [&] { return sum(abs(take_front(reshape(x, {9}), 5))); };
  CHECK(testutil::fd_check(loss2, {x}) <= 1.0);
}

TEST_CASE("sgd on a quadratic") {
  Tensor w = Tensor::from({3}, {1});
  w.set_requires_grad(true);
  {
    Tape tape;
    tape.backward(mul(w, w));
    sgd_step({w}, 0.1f);
  }
  CHECK(w.values()[0] == doctest::Approx(2.4f));

  Tensor v = Tensor::from({0}, {1});
  v.set_requires_grad(true);
  for (int i = 0; i < 200; ++i) {
    Tape tape;
    Tensor d = sub(v, Tensor::scalar(5.0f));
    v.zero_grad();
    tape.backward(mul(d, d));
    sgd_step({v}, 0.1f);
  }
  CHECK(std::fabs(v.values()[0] - 5.0f) < 1e-3);
}

TEST_CASE("sgd requires gradients") {
  Tensor w = Tensor::from({3}, {1});
  w.set_requires_grad(true);
  CHECK_THROWS_AS(sgd_step({w}, 0.1f), std::runtime_error);
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  Tensor w = Tensor::from({1, -2}, {2});
  w.set_requires_grad(true);
  {
    Tape tape;
    Tensor zero = mul(sum(mul(w, 0.0f)), 0.0f);
    w.zero_grad();
    tape.backward(zero);
  }
  Adam adam(0.1f);
  adam.step({w});
  CHECK(vec(Tensor(w)) == std::vector<float>{1, -2});
}

TEST_CASE("adam converges on a quadratic") {
  Tensor w = Tensor::from({0}, {1});
  w.set_requires_grad(true);
  Adam adam(0.05f);
  for (int i = 0; i < 600; ++i) {
    Tape tape;
    Tensor d = sub(w, Tensor::scalar(5.0f));
    w.zero_grad();
    tape.backward(mul(d, d));
    adam.step({w});
  }
  CHECK(std::fabs(w.values()[0] - 5.0f) < 1e-2);
}

TEST_CASE("tape determinism: identical seeds give bit-identical runs") {
  const auto run = [] {
    Rng rng(99);
    Tensor x = testutil::random_tensor({4, 4}, rng);
    Tensor w = testutil::random_tensor({4, 4}, rng);
    w.set_requires_grad(true);
    Tape tape;
    Tensor loss = mean(sigmoid(matmul(x, w)));
    w.zero_grad();
    tape.backward(loss);
    std::vector<float> out = vec(loss);
    const auto g = w.grad();
    out.insert(out.end(), g.begin(), g.end());
    return out;
  };
  CHECK(run() == run());
}

TEST_CASE("ATEN round trip") {
  const auto path = std::filesystem::temp_directory_path() / "advspeech_test_tensor.aten";
  Rng rng(1);
  Tensor t = testutil::random_tensor({3, 2, 4}, rng);
  save_tensor(path, t);
  Tensor back = load_tensor(path);
  CHECK(back.shape() == t.shape());
  CHECK(vec(back) == vec(t));
  std::filesystem::remove(path);
}
