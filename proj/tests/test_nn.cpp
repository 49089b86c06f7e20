#include <doctest.h>

#include <cmath>
#include <functional>
#include <numeric>
#include <random>

#include "affectline/error.hpp"
#include "affectline/gradcheck.hpp"
#include "affectline/nn.hpp"
#include "affectline/simd.hpp"
#include "test_util.hpp"

using namespace affectline;
using namespace affectline::nn;
using affectline::testing::uniform;
using affectline::testing::uniform_size;

namespace {

// Central differences of a scalar function of a flat vector, in doubles.
std::vector<double> numeric_grad(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2 * h);
  }
  return g;
}

double worst_rel(const std::vector<double>& a, const std::vector<double>& n) {
  REQUIRE(a.size() == n.size());
  double w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, relative_error(a[i], n[i]));
  return w;
}

// Direct nested-loop cross-correlation.
std::vector<double> brute_conv(const std::vector<double>& x, std::size_t cin, std::size_t len,
                               const std::vector<double>& w, const std::vector<double>& b,
                               std::size_t cout, std::size_t k, std::size_t stride, std::size_t pad) {
  const std::size_t out_len = (len + 2 * pad - k) / stride + 1;
  std::vector<double> y(cout * out_len);
  for (std::size_t o = 0; o < cout; ++o)
    for (std::size_t t = 0; t < out_len; ++t) {
      double s = b[o];
      for (std::size_t c = 0; c < cin; ++c)
        for (std::size_t j = 0; j < k; ++j) {
          const long pos = long(t * stride + j) - long(pad);
          if (pos >= 0 && pos < long(len)) s += w[(o * cin + c) * k + j] * x[c * len + std::size_t(pos)];
        }
      y[o * out_len + t] = s;
    }
  return y;
}

Tensor<double> tensor(std::vector<std::size_t> shape, std::vector<double> v) { return {std::move(shape), std::move(v)}; }

double project(const std::vector<double>& y, const std::vector<double>& r) {
  return std::inner_product(y.begin(), y.end(), r.begin(), 0.0);
}

}  // namespace

TEST_CASE("conv1d hand examples") {
  const Conv1dSpec id{1, 1, 1, 1, 0};
  const std::vector<double> one{1.0}, zero{0.0};
  const auto x = tensor({1, 4}, {0.5, -2, 3, 7});
  CHECK(conv1d_forward<double>(x, id, one, zero).data == x.data);

  const Conv1dSpec diff{1, 1, 3, 1, 0};
  const std::vector<double> k{1, 0, -1};
  const auto y = conv1d_forward<double>(tensor({1, 3}, {1, 2, 3}), diff, k, zero);
  CHECK(y.shape == std::vector<std::size_t>{1, 1});
  CHECK(y.data == std::vector<double>{-2});
  const auto y2 = conv1d_forward<double>(tensor({1, 4}, {1, 2, 3, 4}), diff, k, zero);
  CHECK(y2.data == std::vector<double>{-2, -2});
}

TEST_CASE("conv1d matches the brute-force loop on random shapes (property)") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 40; ++trial) {
    Conv1dSpec s;
    s.in_channels = uniform_size(rng, 1, 5);
    s.out_channels = uniform_size(rng, 1, 5);
    s.kernel = uniform_size(rng, 1, 5);
    s.stride = uniform_size(rng, 1, 3);
    s.pad = uniform_size(rng, 0, 2);
    const std::size_t len = uniform_size(rng, s.kernel, 20);
    const auto x = uniform<double>(rng, s.in_channels * len);
    const auto w = uniform<double>(rng, s.weight_count());
    const auto b = uniform<double>(rng, s.out_channels);
    const auto got = conv1d_forward<double>(tensor({s.in_channels, len}, x), s, w, b);
    const auto want = brute_conv(x, s.in_channels, len, w, b, s.out_channels, s.kernel, s.stride, s.pad);
    CHECK(got.dim(1) == (len + 2 * s.pad - s.kernel) / s.stride + 1);
    REQUIRE(got.data.size() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.data[i] == doctest::Approx(want[i]).epsilon(1e-13));
  }
  // The specified 3x10 / 2-filter case in single precision.
  const auto xf = uniform<float>(rng, 30);
  const auto wf = uniform<float>(rng, 18);
  const auto bf = uniform<float>(rng, 2);
  const auto got = conv1d_forward<float>(Tensor<float>({3, 10}, xf), Conv1dSpec{3, 2, 3, 1, 1}, wf, bf);
  const auto want = brute_conv({xf.begin(), xf.end()}, 3, 10, {wf.begin(), wf.end()}, {bf.begin(), bf.end()}, 2, 3, 1, 1);
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(got.data[i] == doctest::Approx(want[i]).epsilon(1e-6));
}

TEST_CASE("conv1d rejects inputs shorter than the kernel") {
  const std::vector<double> w(5, 1.0), b{0.0};
  CHECK_THROWS_AS(conv1d_forward<double>(tensor({1, 3}, {1, 2, 3}), Conv1dSpec{1, 1, 5, 1, 0}, w, b), Error);
  CHECK_THROWS_AS(conv1d_forward<double>(tensor({2, 3}, std::vector<double>(6)), Conv1dSpec{1, 1, 1, 1, 0},
                                         std::vector<double>{1.0}, b), Error);
}

TEST_CASE("conv1d backward: zero upstream and scalar chain rule") {
  const Conv1dSpec s{2, 3, 3, 1, 1};
  std::mt19937_64 rng(2);
  const auto x = tensor({2, 6}, uniform<double>(rng, 12));
  const auto w = uniform<double>(rng, s.weight_count());
  const auto g = conv1d_backward<double>(Tensor<double>({3, 6}), x, s, w);
  for (double v : g.input.data) CHECK(v == 0.0);
  for (double v : g.weight) CHECK(v == 0.0);
  for (double v : g.bias) CHECK(v == 0.0);

  const Conv1dSpec scalar{1, 1, 1, 1, 0};
  const std::vector<double> wv{-1.5};
  const auto gs = conv1d_backward<double>(tensor({1, 1}, {1.0}), tensor({1, 1}, {0.75}), scalar, wv);
  CHECK(gs.weight[0] == 0.75);
  CHECK(gs.input.data[0] == -1.5);
  CHECK(gs.bias[0] == 1.0);
}

TEST_CASE("conv1d backward agrees with central differences over 12 seeds") {
  for (std::uint64_t seed = 100; seed < 112; ++seed) {
    std::mt19937_64 rng(seed);
    Conv1dSpec s;
    s.in_channels = uniform_size(rng, 1, 4);
    s.out_channels = uniform_size(rng, 1, 4);
    s.kernel = uniform_size(rng, 1, 4);
    s.stride = uniform_size(rng, 1, 2);
    s.pad = uniform_size(rng, 0, 2);
    const std::size_t len = uniform_size(rng, s.kernel, 9);
    const auto x = uniform<double>(rng, s.in_channels * len);
    const auto w = uniform<double>(rng, s.weight_count());
    const auto b = uniform<double>(rng, s.out_channels);
    const std::size_t out_len = s.out_len(len);
    const auto r = uniform<double>(rng, s.out_channels * out_len);

    const auto g = conv1d_backward<double>(tensor({s.out_channels, out_len}, r), tensor({s.in_channels, len}, x), s, w);
    auto f_x = [&](const std::vector<double>& v) { return project(brute_conv(v, s.in_channels, len, w, b, s.out_channels, s.kernel, s.stride, s.pad), r); };
    auto f_w = [&](const std::vector<double>& v) { return project(brute_conv(x, s.in_channels, len, v, b, s.out_channels, s.kernel, s.stride, s.pad), r); };
    auto f_b = [&](const std::vector<double>& v) { return project(brute_conv(x, s.in_channels, len, w, v, s.out_channels, s.kernel, s.stride, s.pad), r); };
    CAPTURE(seed);
    CHECK(worst_rel(g.input.data, numeric_grad(f_x, x)) < 1e-4);
    CHECK(worst_rel(g.weight, numeric_grad(f_w, w)) < 1e-4);
    CHECK(worst_rel(g.bias, numeric_grad(f_b, b)) < 1e-4);
  }
}

TEST_CASE("relu forward and backward") {
  const auto x = tensor({3}, {-1, 0, 2});
  CHECK(relu_forward(x).data == std::vector<double>{0, 0, 2});
  CHECK(relu_backward(tensor({3}, {5, 5, 5}), x).data == std::vector<double>{0, 0, 5});
  const Tensor<float> xf({5}, {-2.f, -0.f, 0.f, 1e-30f, 3.f});
  CHECK(relu_forward(xf).data == std::vector<float>{0, 0, 0, 1e-30f, 3});
}

TEST_CASE("maxpool first-index tie rule") {
  const auto x = tensor({1, 4}, {1, 3, 2, 2});
  const auto p = maxpool1d_forward(x, MaxPool1dSpec{2, 2});
  CHECK(p.output.data == std::vector<double>{3, 2});
  const auto g = maxpool1d_backward(tensor({1, 2}, {1, 1}), p.argmax, x.shape);
  CHECK(g.data == std::vector<double>{0, 1, 1, 0});

  const auto global = maxpool1d_forward(tensor({2, 3}, {4, 4, 1, -1, -2, -1}), MaxPool1dSpec{});
  CHECK(global.output.data == std::vector<double>{4, -1});
  CHECK(global.argmax == std::vector<std::size_t>{0, 3});
}

TEST_CASE("maxpool and relu backward agree with central differences over 10 seeds") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const std::size_t c = uniform_size(rng, 1, 3), len = uniform_size(rng, 2, 12);
    const MaxPool1dSpec spec{uniform_size(rng, 1, len), uniform_size(rng, 0, 2)};
    std::vector<double> x(c * len);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.01 * double(i);
    std::shuffle(x.begin(), x.end(), rng);
    const auto p = maxpool1d_forward(tensor({c, len}, x), spec);
    const auto r = uniform<double>(rng, p.output.size());
    const auto g = maxpool1d_backward(tensor(p.output.shape, r), p.argmax, {c, len});
    auto f = [&](const std::vector<double>& v) { return project(maxpool1d_forward(tensor({c, len}, v), spec).output.data, r); };
    CAPTURE(seed);
    CHECK(worst_rel(g.data, numeric_grad(f, x)) < 1e-4);

    auto xr = uniform<double>(rng, 16);
    for (auto& v : xr) v += v > 0 ? 0.01 : -0.01;
    const auto rr = uniform<double>(rng, 16);
    const auto gr = relu_backward(tensor({16}, rr), tensor({16}, xr));
    auto fr = [&](const std::vector<double>& v) { return project(relu_forward(tensor({16}, v)).data, rr); };
    CHECK(worst_rel(gr.data, numeric_grad(fr, xr)) < 1e-4);
  }
}

TEST_CASE("fully connected gradients on a random 4x3 weight") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    std::mt19937_64 rng(seed);
    const FullyConnectedSpec s{3, 4};
    const auto x = uniform<double>(rng, 3), w = uniform<double>(rng, 12), b = uniform<double>(rng, 4);
    const auto r = uniform<double>(rng, 4);
    const auto g = fc_backward<double>(r, x, s, w);
    auto fx = [&](const std::vector<double>& v) { return project(fc_forward<double>(v, s, w, b), r); };
    auto fw = [&](const std::vector<double>& v) { return project(fc_forward<double>(x, s, v, b), r); };
    auto fb = [&](const std::vector<double>& v) { return project(fc_forward<double>(x, s, w, v), r); };
    CHECK(worst_rel(g.input, numeric_grad(fx, x)) < 1e-4);
    CHECK(worst_rel(g.weight, numeric_grad(fw, w)) < 1e-4);
    CHECK(worst_rel(g.bias, numeric_grad(fb, b)) < 1e-4);
  }
}

TEST_CASE("softmax cross-entropy") {
  const std::vector<double> zeros(6, 0.0);
  for (std::size_t target = 0; target < 6; ++target) {
    const auto r = softmax_xent<double>(zeros, target);
    CHECK(r.loss == doctest::Approx(std::log(6.0)).epsilon(1e-15));
    for (std::size_t i = 0; i < 6; ++i) CHECK(r.grad[i] == doctest::Approx((i == target ? -5.0 : 1.0) / 6.0));
  }
  std::vector<double> big(6, 0.0);
  big[0] = 1000.0;
  const auto r = softmax_xent<double>(big, 0);
  CHECK(std::isfinite(r.loss));
  CHECK(r.loss < 1e-12);
  const auto rf = softmax_xent<float>(std::vector<float>{1000.f, 0, 0, 0, 0, 0}, 3);
  CHECK(rf.loss == doctest::Approx(1000.0f));
}

TEST_CASE("softmax gradient matches central differences to 1e-6 (property)") {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 30; ++trial) {
    const auto z = uniform<double>(rng, 6, -4, 4);
    const std::size_t target = uniform_size(rng, 0, 5);
    const auto r = softmax_xent<double>(z, target);
    auto f = [&](const std::vector<double>& v) { return softmax_xent<double>(v, target).loss; };
    const auto n = numeric_grad(f, z);
    for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(r.grad[i] - n[i]) < 1e-6);
    double sum = 0;
    for (double p : r.probabilities) sum += p;
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(r.loss >= 0.0);
  }
}

TEST_CASE("argmax picks the lowest index on ties") {
  CHECK(argmax<float>(std::vector<float>{1, 3, 3, 0}) == 1);
  CHECK(argmax<double>(std::vector<double>(6, 0.0)) == 0);
}

TEST_CASE("rmsprop closed forms") {
  RmsProp zero_grad(RmsPropConfig{}, 3);
  std::vector<float> p{1, 2, 3};
  zero_grad.step(p, std::vector<float>{1, 1, 1});
  const auto s1 = std::vector<float>(zero_grad.accumulator().begin(), zero_grad.accumulator().end());
  const auto p1 = p;
  zero_grad.step(p, std::vector<float>{0, 0, 0});
  CHECK(p == p1);
  for (std::size_t i = 0; i < 3; ++i) CHECK(zero_grad.accumulator()[i] == doctest::Approx(0.9 * s1[i]));

  RmsProp first(RmsPropConfig{}, 1);
  std::vector<float> q{0.0f};
  first.step(q, std::vector<float>{1.0f});
  CHECK(q[0] == doctest::Approx(-1e-4 / (std::sqrt(0.1) + 1e-8)).epsilon(1e-5));
  CHECK(q[0] == doctest::Approx(-3.1623e-4).epsilon(1e-4));

  // Constant gradient: s -> g^2 so each step tends to lr in magnitude.
  RmsProp steady(RmsPropConfig{}, 1);
  std::vector<float> r{0.0f};
  float prev = 0.0f, step = 0.0f;
  for (int i = 0; i < 200; ++i) {
    prev = r[0];
    steady.step(r, std::vector<float>{-2.5f});
    step = r[0] - prev;
  }
  CHECK(step == doctest::Approx(1e-4).epsilon(1e-3));
}

TEST_CASE("rmsprop accumulator stays non-negative (property)") {
  std::mt19937_64 rng(5);
  RmsProp opt(RmsPropConfig{1e-2f, 0.5f, 1e-8f}, 64);
  std::vector<float> p = uniform(rng, 64);
  for (int i = 0; i < 50; ++i) {
    opt.step(p, uniform(rng, 64, -100, 100));
    for (float s : opt.accumulator()) CHECK(s >= 0.0f);
  }
}

TEST_CASE("default architecture and parameter layout") {
  const ModelSpec spec;
  CHECK_NOTHROW(spec.validate());
  const auto convs = spec.conv_layers();
  REQUIRE(convs.size() == 6);
  CHECK(convs[0].in_channels == 41);
  CHECK(convs[5].out_channels == 256);
  CHECK(spec.conv_out_len() == 300);
  CHECK(spec.fc_layer().in == 256);
  CHECK(spec.fc_layer().out == 6);
  const ParamLayout layout(spec);
  std::size_t expected = 0, in = 41;
  for (std::size_t c : {64, 64, 128, 128, 256, 256}) {
    expected += c * in * 3 + c;
    in = c;
  }
  expected += 256 * 6 + 6;
  CHECK(layout.total == expected);
  CHECK(spec.parameter_count() == expected);
  const auto names = layout.names();
  CHECK(names.front() == "conv0.weight");
  CHECK(names[1] == "conv0.bias");
  CHECK(names.back() == "fc.bias");
}

TEST_CASE("incompatible architectures are rejected") {
  ModelSpec s;
  s.n_classes = 5;
  CHECK_THROWS_AS(s.validate(), Error);
  ModelSpec tiny;
  tiny.input_len = 4;
  tiny.pad = 0;
  tiny.kernel = 3;
  CHECK_THROWS_AS(tiny.validate(), Error);
}

TEST_CASE("zero model gives zero logits; identical inputs give identical rows") {
  ModelSpec spec;
  spec.input_len = 20;
  spec.conv_channels = {4, 4, 6, 6, 8, 8};
  const Model<float> zero(spec);
  const auto logits = zero.forward(Tensor<float>({41, 20}));
  for (float v : logits) CHECK(v == 0.0f);

  Model<float> m(spec);
  m.init_he_uniform(3);
  std::mt19937_64 rng(1);
  const Tensor<float> x({41, 20}, uniform(rng, 41 * 20));
  const Tensor<float> other({41, 20}, uniform(rng, 41 * 20));
  const std::vector<Tensor<float>> batch{x, other, x};
  const auto out = model_forward(m, std::span<const Tensor<float>>(batch));
  for (std::size_t j = 0; j < 6; ++j) CHECK(out.row(0)[j] == out.row(2)[j]);
  const std::vector<Tensor<float>> reordered{other, x};
  const auto out2 = model_forward(m, std::span<const Tensor<float>>(reordered));
  for (std::size_t j = 0; j < 6; ++j) {
    CHECK(out2.row(1)[j] == out.row(0)[j]);
    CHECK(out2.row(0)[j] == out.row(1)[j]);
  }
}

TEST_CASE("He-uniform init is seeded and bounded") {
  ModelSpec spec;
  spec.input_len = 20;
  spec.conv_channels = {4, 4, 6, 6, 8, 8};
  Model<float> a(spec), b(spec), c(spec);
  a.init_he_uniform(9);
  b.init_he_uniform(9);
  c.init_he_uniform(10);
  CHECK(std::equal(a.params().begin(), a.params().end(), b.params().begin()));
  CHECK_FALSE(std::equal(a.params().begin(), a.params().end(), c.params().begin()));
  const auto& L = a.layout();
  const double limit0 = std::sqrt(6.0 / (41 * 3));
  for (std::size_t i = 0; i < L.conv_weight[0].count; ++i) CHECK(std::abs(a.params()[L.conv_weight[0].offset + i]) <= limit0);
  for (std::size_t i = 0; i < L.conv_bias[0].count; ++i) CHECK(a.params()[L.conv_bias[0].offset + i] == 0.0f);
}

TEST_CASE("full-model gradients agree with central differences (41x20 input)") {
  ModelSpec spec;
  spec.input_len = 20;
  spec.conv_channels = {3, 3, 4, 4, 5, 5};
  Model<double> m(spec);
  m.init_he_uniform(21);
  std::mt19937_64 rng(21);
  for (std::size_t i = 0; i < m.params().size(); ++i) m.params()[i] += 0.05 * std::uniform_real_distribution<>(-1, 1)(rng);
  const std::vector<Tensor<double>> batch{Tensor<double>({41, 20}, uniform<double>(rng, 820)),
                                          Tensor<double>({41, 20}, uniform<double>(rng, 820))};
  const std::vector<std::size_t> targets{2, 5};
  std::vector<double> grads(m.params().size());
  model_loss_and_gradients(m, std::span<const Tensor<double>>(batch), targets, std::span<double>(grads));

  const std::vector<double> p0(m.params().begin(), m.params().end());
  auto loss = [&](const std::vector<double>& p) {
    Model<double> probe(spec);
    std::copy(p.begin(), p.end(), probe.params().begin());
    std::vector<double> scratch(p.size());
    return model_loss_and_gradients(probe, std::span<const Tensor<double>>(batch), targets, std::span<double>(scratch));
  };
  // Every bias plus a strided sample of weights keeps this under a second.
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < p0.size(); i += 7) idx.push_back(i);
  for (const auto& r : m.layout().conv_bias) for (std::size_t i = 0; i < r.count; ++i) idx.push_back(r.offset + i);
  double worst = 0;
  for (std::size_t i : idx) {
    auto p = p0;
    p[i] = p0[i] + 1e-5;
    const double up = loss(p);
    p[i] = p0[i] - 1e-5;
    const double down = loss(p);
    worst = std::max(worst, relative_error(grads[i], (up - down) / 2e-5));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("library gradient checks pass for ten seeds") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& r : run_gradient_checks(seed)) {
      CAPTURE(seed);
      CAPTURE(r.name);
      CHECK(r.n_checked > 0);
      CHECK(r.max_rel_error < kGradCheckTolerance);
    }
  }
}

TEST_CASE("float training step is identical on every kernel backend") {
  ModelSpec spec;
  spec.input_len = 30;
  spec.conv_channels = {8, 8, 8, 8, 8, 8};
  Model<float> m(spec);
  m.init_he_uniform(4);
  std::mt19937_64 rng(4);
  const std::vector<Tensor<float>> batch{Tensor<float>({41, 30}, uniform(rng, 1230))};
  const std::vector<std::size_t> t{1};
  const auto before = simd::active();
  simd::set_active(simd::Backend::scalar);
  std::vector<float> gs(m.params().size());
  const float ls = model_loss_and_gradients(m, std::span<const Tensor<float>>(batch), t, std::span<float>(gs));
  for (auto b : {simd::Backend::avx2, simd::Backend::neon}) {
    if (!simd::available(b)) continue;
    simd::set_active(b);
    std::vector<float> gv(m.params().size());
    const float lv = model_loss_and_gradients(m, std::span<const Tensor<float>>(batch), t, std::span<float>(gv));
    CHECK(lv == doctest::Approx(ls).epsilon(1e-5));
    for (std::size_t i = 0; i < gs.size(); ++i) CHECK(gv[i] == doctest::Approx(gs[i]).epsilon(1e-3).scale(1e-3));
  }
  simd::set_active(before);
}

TEST_CASE("float/double casts preserve parameters") {
  ModelSpec spec;
  spec.input_len = 10;
  spec.conv_channels = {2, 2, 2, 2, 2, 2};
  Model<float> m(spec);
  m.init_he_uniform(1);
  const auto d = m.cast<double>();
  const auto back = d.cast<float>();
  CHECK(std::equal(m.params().begin(), m.params().end(), back.params().begin()));
}
