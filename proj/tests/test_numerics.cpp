#include <doctest.h>

#include <cmath>
#include <random>

#include "blastoseg/checkpoint.hpp"
#include "blastoseg/gradcheck.hpp"
#include "blastoseg/parallel.hpp"
#include "blastoseg/random.hpp"

using namespace blastoseg;
using namespace blastoseg::numerics;

namespace {

Tensor<double> random_tensor(Shape4 s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  Tensor<double> t(s);
  for (auto& v : t.data()) v = uniform(rng, lo, hi);
  return t;
}

// Direct summation with zero padding, TF-style "same" placement.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& k, const std::vector<double>& b,
                          int stride, int dil) {
  const int co = k.n(), ci = k.c(), kh = k.h(), kw = k.w();
  const int oh = (x.h() + stride - 1) / stride, ow = (x.w() + stride - 1) / stride;
  const int eh = (kh - 1) * dil + 1, ew = (kw - 1) * dil + 1;
  const int ph = std::max((oh - 1) * stride + eh - x.h(), 0) / 2;
  const int pw = std::max((ow - 1) * stride + ew - x.w(), 0) / 2;
  Tensor<double> y(Shape4{x.n(), co, oh, ow});
  for (int n = 0; n < x.n(); ++n)
    for (int o = 0; o < co; ++o)
      for (int i = 0; i < oh; ++i)
        for (int j = 0; j < ow; ++j) {
          double s = b[static_cast<std::size_t>(o)];
          for (int c = 0; c < ci; ++c)
            for (int u = 0; u < kh; ++u)
              for (int v = 0; v < kw; ++v) {
                const int yy = i * stride - ph + u * dil, xx = j * stride - pw + v * dil;
                if (yy >= 0 && yy < x.h() && xx >= 0 && xx < x.w()) s += x.at(n, c, yy, xx) * k.at(o, c, u, v);
              }
          y.at(n, o, i, j) = s;
        }
  return y;
}

}  // namespace

TEST_CASE("tensor: data length must match the shape") {
  CHECK_THROWS_AS(Tensor<float>(Shape4{1, 2, 3, 4}, std::vector<float>(23)), DimensionError);
  Tensor<float> t(Shape4{2, 3, 4, 5});
  CHECK(t.size() == 120);
  CHECK(Shape4{1, 2, 3, 4}.str() == "(1, 2, 3, 4)");
}

TEST_CASE("shape mismatch names the axis") {
  try {
    require_same_shape(Shape4{1, 2, 3, 4}, Shape4{1, 2, 5, 4}, "test");
    FAIL("expected throw");
  } catch (const DimensionError& e) {
    CHECK(e.axis() == "h");
  }
}

TEST_CASE("conv2d: all-ones 3x3 input and kernel") {
  Tensor<float> x(Shape4{1, 1, 3, 3}, 1.0f), k(Shape4{1, 1, 3, 3}, 1.0f);
  std::vector<float> b{0.0f};
  const auto y = conv2d<float>(x, k, b);
  const std::vector<float> expected{4, 6, 4, 6, 9, 6, 4, 6, 4};
  CHECK(std::vector<float>(y.data().begin(), y.data().end()) == expected);
}

TEST_CASE("conv2d: 1x1 unit kernel is the identity") {
  const auto x = random_tensor(Shape4{2, 1, 5, 7}, 3);
  Tensor<double> k(Shape4{1, 1, 1, 1}, 1.0);
  std::vector<double> b{0.0};
  CHECK(conv2d<double>(x, k, b) == x);
}

TEST_CASE("conv2d: dilation 2 on 5x5 ones") {
  Tensor<float> x(Shape4{1, 1, 5, 5}, 1.0f), k(Shape4{1, 1, 3, 3}, 1.0f);
  std::vector<float> b{0.0f};
  const auto y = conv2d<float>(x, k, b, 1, 2);
  CHECK(y.at(0, 0, 2, 2) == 9.0f);
  CHECK(y.at(0, 0, 0, 0) == 4.0f);
}

TEST_CASE("conv2d matches direct summation for strides, dilations and kernel sizes") {
  std::uint64_t seed = 11;
  for (int ksz : {1, 3}) {
    for (int dil : {1, 2, 4}) {
      if (ksz == 1 && dil > 1) continue;
      for (int stride : {1, 2}) {
        const auto x = random_tensor(Shape4{2, 3, 9, 8}, ++seed);
        const auto k = random_tensor(Shape4{4, 3, ksz, ksz}, ++seed);
        std::vector<double> b{0.1, -0.2, 0.3, 0.0};
        const auto y = conv2d<double>(x, k, b, stride, dil);
        const auto r = naive_conv(x, k, b, stride, dil);
        REQUIRE(y.shape() == r.shape());
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(r[i]).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("conv2d: same padding keeps spatial shape at stride 1") {
  for (int dil : {1, 2, 4, 8, 16}) {
    Tensor<float> x(Shape4{1, 2, 6, 10}, 1.0f), k(Shape4{3, 2, 3, 3}, 0.5f);
    std::vector<float> b(3, 0.0f);
    const auto y = conv2d<float>(x, k, b, 1, dil);
    CHECK(y.h() == 6);
    CHECK(y.w() == 10);
  }
}

TEST_CASE("conv2d: channel mismatch is a dimension error on c") {
  Tensor<float> x(Shape4{1, 2, 4, 4}), k(Shape4{1, 3, 3, 3});
  std::vector<float> b{0.0f};
  try {
    (void)conv2d<float>(x, k, b);
    FAIL("expected throw");
  } catch (const DimensionError& e) {
    CHECK(e.axis() == "c");
  }
}

TEST_CASE("conv2d backward: identity adjoint and zero gradient") {
  Tensor<double> x = random_tensor(Shape4{1, 1, 4, 4}, 5);
  Tensor<double> k(Shape4{1, 1, 1, 1}, 1.0);
  Tensor<double> g(Shape4{1, 1, 4, 4});
  g.at(0, 0, 2, 1) = 1.0;
  const auto grads = conv2d_backward<double>(x, k, g);
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx) CHECK(grads.input.at(0, 0, y, xx) == (y == 2 && xx == 1 ? 1.0 : 0.0));

  const auto k3 = random_tensor(Shape4{2, 1, 3, 3}, 6);
  const auto zero = conv2d_backward<double>(x, k3, Tensor<double>(Shape4{1, 2, 4, 4}));
  for (double v : zero.input.data()) CHECK(v == 0.0);
  for (double v : zero.kernels.data()) CHECK(v == 0.0);
  for (double v : zero.bias) CHECK(v == 0.0);
}

TEST_CASE("conv2d backward: bias gradient is the per-channel sum") {
  const auto x = random_tensor(Shape4{2, 2, 5, 5}, 7);
  const auto k = random_tensor(Shape4{3, 2, 3, 3}, 8);
  const auto g = random_tensor(Shape4{2, 3, 5, 5}, 9);
  const auto grads = conv2d_backward<double>(x, k, g);
  for (int o = 0; o < 3; ++o) {
    double s = 0.0;
    for (int n = 0; n < 2; ++n)
      for (int i = 0; i < 25; ++i) s += g.channel(n, o)[i];
    CHECK(grads.bias[static_cast<std::size_t>(o)] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("conv2d gradient check on a random 1x2x6x6 input") {
  Conv2d<double> conv("c", 2, 3, 3);
  conv.initialize(1);
  const auto r = finite_difference_check(conv, random_tensor(Shape4{1, 2, 6, 6}, 2), Mode::deterministic,
                                         1e-3, 1e-3);
  CHECK(r.passed());
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("1x1 convolution gradient is exact") {
  Conv2d<double> conv("lin", 3, 2, 1);
  conv.initialize(4);
  const auto r = finite_difference_check(conv, random_tensor(Shape4{2, 3, 4, 4}, 3), Mode::deterministic,
                                         1e-3, 1e-5);
  CHECK(r.max_relative_error < 1e-5);
}

TEST_CASE("gradient check rejects bad steps and train mode") {
  Conv2d<double> conv("c", 1, 1, 3);
  const auto x = random_tensor(Shape4{1, 1, 4, 4}, 1);
  CHECK_THROWS_AS(finite_difference_check(conv, x, Mode::deterministic, 1e-6, 1e-3), PreconditionError);
  CHECK_THROWS_AS(finite_difference_check(conv, x, Mode::deterministic, 0.5, 1e-3), PreconditionError);
  CHECK_THROWS_AS(finite_difference_check(conv, x, Mode::train, 1e-3, 1e-3), PreconditionError);
}

TEST_CASE("sigmoid derivative at 0 is 0.25") {
  Sigmoid<double> s("s");
  const Tensor<double> x(Shape4{1, 1, 1, 1}, 0.0);
  const auto y = s.forward(x, Pass{Mode::deterministic, 0});
  CHECK(y[0] == 0.5);
  const auto g = s.backward(Tensor<double>(Shape4{1, 1, 1, 1}, 1.0));
  CHECK(g[0] == doctest::Approx(0.25).epsilon(1e-15));
  const auto r = finite_difference_check(s, x, Mode::deterministic, 1e-3, 1e-6);
  CHECK(r.passed());
}

TEST_CASE("transposed conv: stamps and shapes") {
  Tensor<float> one(Shape4{1, 1, 1, 1}, 1.0f);
  Tensor<float> k(Shape4{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  std::vector<float> b{0.0f};
  const auto y = transposed_conv2d<float>(one, k, b);
  CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{1, 2, 3, 4});

  const auto z = transposed_conv2d<float>(Tensor<float>(Shape4{1, 1, 3, 3}), k, b);
  for (float v : z.data()) CHECK(v == 0.0f);

  Tensor<float> ones(Shape4{1, 1, 2, 2}, 1.0f), kones(Shape4{1, 1, 2, 2}, 1.0f);
  const auto w = transposed_conv2d<float>(ones, kones, b);
  CHECK(w.shape() == Shape4{1, 1, 4, 4});
  for (float v : w.data()) CHECK(v == 1.0f);

  CHECK_THROWS_AS(transposed_conv2d<float>(ones, kones, b, 3), UnsupportedConfiguration);
  CHECK_THROWS_AS(transposed_conv2d<float>(ones, Tensor<float>(Shape4{1, 1, 3, 3}), b), UnsupportedConfiguration);
}

TEST_CASE("maxpool: values, ties, shapes and gradient mass") {
  Tensor<float> x(Shape4{1, 1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  CHECK(maxpool2d<float>(x).output[0] == 4.0f);

  Tensor<float> c(Shape4{1, 1, 4, 4}, 2.0f);
  const auto pc = maxpool2d<float>(c);
  for (float v : pc.output.data()) CHECK(v == 2.0f);
  const auto back = maxpool2d_backward<float>(Tensor<float>(Shape4{1, 1, 2, 2}, 1.0f), pc.argmax, c.shape());
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx) CHECK(back.at(0, 0, y, xx) == ((y % 2 == 0 && xx % 2 == 0) ? 1.0f : 0.0f));

  CHECK(maxpool2d<float>(Tensor<float>(Shape4{1, 1, 240, 240})).output.shape() == Shape4{1, 1, 120, 120});
  CHECK_THROWS_AS(maxpool2d<float>(Tensor<float>(Shape4{1, 1, 5, 4})), DimensionError);

  const auto r = random_tensor(Shape4{2, 3, 8, 6}, 21);
  const auto pr = maxpool2d<double>(r);
  const auto g = random_tensor(pr.output.shape(), 22);
  const auto gi = maxpool2d_backward<double>(g, pr.argmax, r.shape());
  double a = 0.0, b = 0.0;
  for (double v : g.data()) a += v;
  for (double v : gi.data()) b += v;
  CHECK(a == doctest::Approx(b).epsilon(1e-12));
}

TEST_CASE("batchnorm: examples") {
  BatchNormState<double> st(1);
  std::vector<double> gamma{1.0}, beta{0.0};
  const auto z = batchnorm<double>(Tensor<double>(Shape4{2, 1, 2, 2}, 3.0), gamma, beta, Mode::train, st);
  for (double v : z.data()) CHECK(v == 0.0);

  Tensor<double> pm(Shape4{1, 1, 1, 4}, std::vector<double>{-1, 1, -1, 1});
  BatchNormState<double> st2(1);
  const auto y = batchnorm<double>(pm, gamma, beta, Mode::train, st2);
  const double scale = 1.0 / std::sqrt(1.0 + 1e-5);
  for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == doctest::Approx(pm[i] * scale).epsilon(1e-12));

  std::vector<double> g2{2.0}, b2{3.0};
  BatchNormState<double> st3(1);
  const auto a = batchnorm<double>(pm, g2, b2, Mode::train, st3);
  CHECK(a[0] == doctest::Approx(3.0 - 2.0 * scale));
  CHECK(a[1] == doctest::Approx(3.0 + 2.0 * scale));
}

TEST_CASE("batchnorm: train output is standardized and running stats follow momentum") {
  const auto x = random_tensor(Shape4{4, 2, 5, 5}, 31, -3.0, 5.0);
  BatchNormState<double> st(2);
  std::vector<double> gamma{1.0, 1.0}, beta{0.0, 0.0};
  const auto y = batchnorm<double>(x, gamma, beta, Mode::train, st);
  for (int c = 0; c < 2; ++c) {
    double m = 0.0, v = 0.0;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) m += y.channel(n, c)[i];
    m /= 100;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) v += (y.channel(n, c)[i] - m) * (y.channel(n, c)[i] - m);
    v /= 100;
    CHECK(std::abs(m) < 1e-9);
    CHECK(v == doctest::Approx(1.0).epsilon(1e-3));
  }
  CHECK(st.initialized);
  const double first_mean = st.running_mean[0];
  const auto x2 = random_tensor(Shape4{4, 2, 5, 5}, 32, 10.0, 12.0);
  double batch_mean = 0.0;
  for (int n = 0; n < 4; ++n)
    for (int i = 0; i < 25; ++i) batch_mean += x2.channel(n, 0)[i];
  batch_mean /= 100;
  (void)batchnorm<double>(x2, gamma, beta, Mode::train, st);
  CHECK(st.running_mean[0] == doctest::Approx(0.9 * first_mean + 0.1 * batch_mean).epsilon(1e-12));
}

TEST_CASE("batchnorm: inference without statistics is a state error") {
  BatchNorm2d<float> bn("bn", 2);
  CHECK_THROWS_AS(bn.infer(Tensor<float>(Shape4{1, 2, 2, 2})), StateError);
  CHECK_THROWS_AS(bn.forward(Tensor<float>(Shape4{1, 2, 2, 2}), Pass{Mode::infer, 0}), StateError);
}

TEST_CASE("batchnorm: backward in both gradient-check modes") {
  BatchNorm2d<double> bn("bn", 3);
  const auto x = random_tensor(Shape4{3, 3, 4, 4}, 11);
  const auto batch = finite_difference_check(bn, x, Mode::deterministic, 1e-3, 1e-3);
  CHECK(batch.passed());
  // Running statistics differ from the batch's so the two backward paths disagree.
  (void)bn.forward(random_tensor(Shape4{3, 3, 4, 4}, 12, -2.0, 3.0), Pass{Mode::train, 0});
  const auto frozen = finite_difference_check(bn, x, Mode::infer, 1e-3, 1e-3);
  CHECK(frozen.passed());
  CHECK(frozen.max_relative_error < 1e-6);
}

TEST_CASE("residual unit: gradient check away from relu kinks") {
  std::mt19937_64 rng(21);
  int accepted = 0;
  for (int drawn = 0; accepted < 3 && drawn < 200; ++drawn) {
    ResidualUnit<double> unit("res", 2, 3, 0.05);
    unit.initialize(rng());
    const auto x = random_tensor(Shape4{2, 2, 5, 5}, rng());
    (void)unit.forward(x, Pass{Mode::train, 1});
    (void)unit.forward(x, Pass{Mode::infer, 1});
    double margin = 1e300;
    for (std::size_t i = 0; i < unit.branch().size(); ++i)
      if (const auto* relu = dynamic_cast<const ReLU<double>*>(&unit.branch().at(i)))
        for (double v : relu->last_input().data()) margin = std::min(margin, std::abs(v));
    if (margin < 1e-2) continue;
    ++accepted;
    const auto r = finite_difference_check(unit, x, Mode::infer, 1e-4, 1e-3, rng());
    CHECK(r.passed());
  }
  CHECK(accepted == 3);
}

TEST_CASE("relu, sigmoid and dropout primitives") {
  Tensor<float> x(Shape4{1, 1, 1, 2}, std::vector<float>{-3.7f, 2.5f});
  const auto r = relu(x);
  CHECK(r[0] == 0.0f);
  CHECK(r[1] == 2.5f);
  CHECK(sigmoid(Tensor<float>(Shape4{1, 1, 1, 1}, 0.0f))[0] == 0.5f);
  const auto s = sigmoid(Tensor<double>(Shape4{1, 1, 1, 2}, std::vector<double>{-800.0, 800.0}));
  CHECK(s.all_finite());

  Dropout<float> d("d", 0.05);
  const auto in = random_tensor(Shape4{2, 3, 4, 4}, 41);
  const auto inf = tensor_cast<float>(in);
  CHECK(d.infer(inf) == inf);
  CHECK(d.forward(inf, Pass{Mode::infer, 5}) == inf);
  CHECK(d.forward(inf, Pass{Mode::deterministic, 5}) == inf);
}

TEST_CASE("dropout: reproducible masks and preserved expectation") {
  const Tensor<double> ones(Shape4{1, 1, 200, 200}, 1.0);
  const auto a = dropout(ones, 0.05, 123);
  const auto b = dropout(ones, 0.05, 123);
  CHECK(a.output == b.output);
  double sum = 0.0;
  int dropped = 0;
  for (double v : a.output.data()) {
    sum += v;
    if (v == 0.0) ++dropped;
    else CHECK(v == doctest::Approx(1.0 / 0.95).epsilon(1e-15));
  }
  CHECK(sum / 40000.0 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(dropped > 0);
  CHECK(dropout(ones, 0.05, 124).output != a.output);
}

TEST_CASE("concat, split and residual add") {
  Tensor<float> a(Shape4{1, 1, 2, 2}, 1.0f), b(Shape4{1, 2, 2, 2}, 2.0f);
  const auto c = concat_channels(a, b);
  CHECK(c.shape() == Shape4{1, 3, 2, 2});
  CHECK(c.at(0, 0, 1, 1) == 1.0f);
  CHECK(c.at(0, 2, 0, 0) == 2.0f);
  const auto [x, y] = split_channels(c, 1);
  CHECK(x == a);
  CHECK(y == b);
  CHECK_THROWS_AS(concat_channels(a, Tensor<float>(Shape4{1, 1, 3, 2})), DimensionError);
  const auto s = residual_add(a, a);
  for (float v : s.data()) CHECK(v == 2.0f);
  CHECK_THROWS_AS(residual_add(a, b), DimensionError);
}

TEST_CASE("five-layer dilated cascade has a 63x63 receptive field") {
  Sequential<double> bridge("bridge");
  for (int d : {1, 2, 4, 8, 16}) {
    auto conv = std::make_unique<Conv2d<double>>("b" + std::to_string(d), 1, 1, 3, 1, d);
    conv->weight().value.fill(1.0);
    bridge.add(std::move(conv));
  }
  Tensor<double> x(Shape4{1, 1, 129, 129});
  x.at(0, 0, 64, 64) = 1.0;
  const auto y = bridge.infer(x);
  int min_r = 1000, max_r = -1, min_c = 1000, max_c = -1;
  for (int r = 0; r < 129; ++r)
    for (int c = 0; c < 129; ++c)
      if (y.at(0, 0, r, c) != 0.0) {
        min_r = std::min(min_r, r);
        max_r = std::max(max_r, r);
        min_c = std::min(min_c, c);
        max_c = std::max(max_c, c);
      }
  CHECK(max_r - min_r + 1 == 63);
  CHECK(max_c - min_c + 1 == 63);
}

TEST_CASE("conv results do not depend on the worker count") {
  const auto x = tensor_cast<float>(random_tensor(Shape4{6, 4, 12, 12}, 51));
  const auto k = tensor_cast<float>(random_tensor(Shape4{5, 4, 3, 3}, 52));
  const auto g = tensor_cast<float>(random_tensor(Shape4{6, 5, 12, 12}, 53));
  std::vector<float> b(5, 0.1f);
  const int saved = thread_count();
  set_thread_count(1);
  const auto y1 = conv2d<float>(x, k, b, 1, 2);
  const auto g1 = conv2d_backward<float>(x, k, g, 1, 2);
  set_thread_count(4);
  const auto y4 = conv2d<float>(x, k, b, 1, 2);
  const auto g4 = conv2d_backward<float>(x, k, g, 1, 2);
  set_thread_count(saved);
  CHECK(y1 == y4);
  CHECK(g1.kernels == g4.kernels);
  CHECK(g1.input == g4.input);
  CHECK(g1.bias == g4.bias);
}

TEST_CASE("checkpoint: round trip, magic and version") {
  Checkpoint ck;
  ck.set_meta("model", "unet");
  ck.set_meta("note", "two words");
  ck.tensors.push_back({"w", tensor_cast<float>(random_tensor(Shape4{2, 3, 1, 4}, 61))});
  ck.tensors.push_back({"b", Tensor<float>(Shape4{1, 3, 1, 1}, -0.5f)});
  const auto bytes = encode_checkpoint(ck);
  CHECK(bytes.rfind("BLASTOSEG-CHECKPOINT v1\n", 0) == 0);
  const auto back = decode_checkpoint(bytes);
  CHECK(back.meta("note") == std::optional<std::string>("two words"));
  REQUIRE(back.tensors.size() == 2);
  CHECK(back.tensors[0].value == ck.tensors[0].value);
  CHECK(back.find("b")->value == ck.tensors[1].value);

  // Payload is little-endian binary32: -0.5f = 0xBF000000.
  const auto tail = bytes.substr(bytes.size() - 4);
  CHECK(static_cast<unsigned char>(tail[3]) == 0xBF);
  CHECK(static_cast<unsigned char>(tail[0]) == 0x00);

  CHECK_THROWS_AS(decode_checkpoint("NOT-A-CHECKPOINT v1\n"), CheckpointError);
  std::string v2 = bytes;
  v2.replace(v2.find("v1"), 2, "v2");
  CHECK_THROWS_AS(decode_checkpoint(v2), CheckpointError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), CheckpointError);
}
