#include "affectline/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "affectline/nn.hpp"

namespace affectline::nn {
namespace {

using Rng = std::mt19937_64;

std::vector<double> random_vector(Rng& rng, std::size_t n, double scale = 1.0) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return v;
}

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

double project(std::span<const double> y, std::span<const double> r) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * r[i];
  return acc;
}

// Central differences of `loss` with respect to every entry of `x`,
// compared against `analytic`.
void compare(GradCheckResult& res, std::vector<double>& x,
             std::span<const double> analytic, const std::function<double()>& loss) {
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + kGradCheckStep;
    const double up = loss();
    x[i] = saved - kGradCheckStep;
    const double down = loss();
    x[i] = saved;
    const double numeric = (up - down) / (2.0 * kGradCheckStep);
    res.max_rel_error = std::max(res.max_rel_error, relative_error(analytic[i], numeric));
    ++res.n_checked;
  }
}

GradCheckResult check_conv(Rng& rng) {
  Conv1dSpec spec;
  spec.in_channels = pick(rng, 1, 4);
  spec.out_channels = pick(rng, 1, 4);
  spec.kernel = pick(rng, 1, 5);
  spec.stride = pick(rng, 1, 2);
  spec.pad = pick(rng, 0, spec.kernel - 1);
  const std::size_t len = pick(rng, spec.kernel, 12);
  Tensor<double> x({spec.in_channels, len}, random_vector(rng, spec.in_channels * len));
  std::vector<double> w = random_vector(rng, spec.weight_count());
  std::vector<double> b = random_vector(rng, spec.out_channels);
  const std::size_t out_len = spec.out_len(len);
  const std::vector<double> r = random_vector(rng, spec.out_channels * out_len);

  const auto loss = [&] {
    return project(conv1d_forward<double>(x, spec, w, b).data, r);
  };
  const auto g = conv1d_backward<double>(Tensor<double>({spec.out_channels, out_len}, r), x,
                                         spec, w);
  GradCheckResult res{"conv1d", 0.0, 0};
  compare(res, x.data, g.input.data, loss);
  compare(res, w, g.weight, loss);
  compare(res, b, g.bias, loss);
  return res;
}

GradCheckResult check_relu(Rng& rng) {
  const std::size_t n = pick(rng, 4, 32);
  std::vector<double> v = random_vector(rng, n);
  // Keep inputs away from the kink so a finite step cannot cross it.
  for (double& e : v) {
    if (std::abs(e) < 0.05) e = e < 0 ? -0.05 - std::abs(e) : 0.05 + e;
  }
  Tensor<double> x({1, n}, v);
  const std::vector<double> r = random_vector(rng, n);
  const auto loss = [&] { return project(relu_forward(x).data, r); };
  const auto g = relu_backward(Tensor<double>({1, n}, r), x);
  GradCheckResult res{"relu", 0.0, 0};
  compare(res, x.data, g.data, loss);
  return res;
}

GradCheckResult check_maxpool(Rng& rng) {
  const std::size_t channels = pick(rng, 1, 3);
  const std::size_t len = pick(rng, 4, 16);
  MaxPool1dSpec spec{pick(rng, 1, 4), pick(rng, 1, 3)};
  if (rng() % 4 == 0) spec = {};  // global
  // Distinct values spaced well beyond the finite-difference step.
  std::vector<double> v(channels * len);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = 0.01 * static_cast<double>(i);
  std::shuffle(v.begin(), v.end(), rng);
  Tensor<double> x({channels, len}, v);
  const auto fwd = maxpool1d_forward(x, spec);
  const std::vector<double> r = random_vector(rng, fwd.output.size());
  const auto loss = [&] { return project(maxpool1d_forward(x, spec).output.data, r); };
  const auto g = maxpool1d_backward(Tensor<double>(fwd.output.shape, r), fwd.argmax, x.shape);
  GradCheckResult res{"maxpool1d", 0.0, 0};
  compare(res, x.data, g.data, loss);
  return res;
}

GradCheckResult check_fc(Rng& rng) {
  FullyConnectedSpec spec{pick(rng, 1, 8), pick(rng, 1, 6)};
  std::vector<double> x = random_vector(rng, spec.in);
  std::vector<double> w = random_vector(rng, spec.weight_count());
  std::vector<double> b = random_vector(rng, spec.out);
  const std::vector<double> r = random_vector(rng, spec.out);
  const auto loss = [&] { return project(fc_forward<double>(x, spec, w, b), r); };
  const auto g = fc_backward<double>(r, x, spec, w);
  GradCheckResult res{"fully_connected", 0.0, 0};
  compare(res, x, g.input, loss);
  compare(res, w, g.weight, loss);
  compare(res, b, g.bias, loss);
  return res;
}

GradCheckResult check_xent(Rng& rng) {
  std::vector<double> logits = random_vector(rng, 6, 3.0);
  const std::size_t target = pick(rng, 0, 5);
  const auto loss = [&] { return softmax_xent<double>(logits, target).loss; };
  const auto g = softmax_xent<double>(logits, target).grad;
  GradCheckResult res{"softmax_xent", 0.0, 0};
  compare(res, logits, g, loss);
  return res;
}

// Smallest distance of any ReLU input from zero, and of any pooled maximum
// from the runner-up in its window. Central differences straddling either
// kink compare against a one-sided slope, so check points must keep clear.
double kink_margin(const Model<double>::Trace& trace) {
  double margin = std::numeric_limits<double>::infinity();
  for (const auto& pre : trace.pre_relu) {
    for (double v : pre.data) margin = std::min(margin, std::abs(v));
  }
  const auto& last = trace.pre_relu.back();
  const std::size_t channels = last.dim(0), len = last.dim(1);
  for (std::size_t c = 0; c < channels; ++c) {
    double best = 0.0, second = 0.0;
    for (std::size_t t = 0; t < len; ++t) {
      const double v = std::max(0.0, last.data[c * len + t]);
      if (v > best) {
        second = best;
        best = v;
      } else if (v > second) {
        second = v;
      }
    }
    if (best > 0.0) margin = std::min(margin, best - second);
  }
  return margin;
}

GradCheckResult check_model(Rng& rng) {
  ModelSpec spec;
  spec.input_channels = 41;
  spec.input_len = 20;
  spec.conv_channels = {4, 4, 6, 6, 8, 8};
  spec.pool = {};
  constexpr double kMinMargin = 1e-3;

  Model<double> model(spec);
  Tensor<double> x;
  std::size_t target = 0;
  Model<double>::Trace trace;
  std::vector<double> logits;
  for (int attempt = 0;; ++attempt) {
    model.init_he_uniform(rng());
    // Small non-zero biases so ReLU masks are not aligned with zero inputs.
    for (std::size_t i = 0; i < spec.conv_channels.size(); ++i) {
      const auto range = model.layout().conv_bias[i];
      for (std::size_t j = 0; j < range.count; ++j) {
        model.params()[range.offset + j] =
            std::uniform_real_distribution<double>(-0.1, 0.1)(rng);
      }
    }
    x = Tensor<double>({41, 20}, random_vector(rng, 41 * 20));
    target = pick(rng, 0, 5);
    logits = model.forward(x, &trace);
    if (kink_margin(trace) >= kMinMargin || attempt == 99) break;
  }

  const auto xent = softmax_xent<double>(logits, target);
  std::vector<double> grads(model.params().size(), 0.0);
  Tensor<double> grad_x;
  model.backward(trace, xent.grad, grads, &grad_x);

  std::vector<double> params(model.params().begin(), model.params().end());
  const auto loss = [&] {
    std::copy(params.begin(), params.end(), model.params().begin());
    return softmax_xent<double>(model.forward(x), target).loss;
  };
  GradCheckResult res{"model", 0.0, 0};
  compare(res, params, grads, loss);
  compare(res, x.data, grad_x.data, loss);
  return res;
}

}  // namespace

double relative_error(double analytic, double numeric) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradCheckFloor});
  return std::abs(analytic - numeric) / denom;
}

std::vector<GradCheckResult> run_gradient_checks(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<GradCheckResult> out;
  out.push_back(check_conv(rng));
  out.push_back(check_relu(rng));
  out.push_back(check_maxpool(rng));
  out.push_back(check_fc(rng));
  out.push_back(check_xent(rng));
  out.push_back(check_model(rng));
  return out;
}

}  // namespace affectline::nn
