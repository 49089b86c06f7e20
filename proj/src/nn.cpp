#include "affectline/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "affectline/emotion.hpp"
#include "affectline/error.hpp"
#include "affectline/simd.hpp"

namespace affectline::nn {
namespace {

template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    return simd::kernels().dot_f32(a, b, n);
  } else {
    return simd::kernels().dot_f64(a, b, n);
  }
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  if constexpr (std::is_same_v<T, float>) {
    simd::kernels().axpy_f32(alpha, x, y, n);
  } else {
    simd::kernels().axpy_f64(alpha, x, y, n);
  }
}

Error shape_error(const std::string& what) {
  return Error(ErrorKind::shape_mismatch, what);
}

void require(bool ok, const char* what) {
  if (!ok) throw shape_error(what);
}

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

// Output positions t (stride 1) for which input index t + k - pad is inside
// [0, len).
struct TapRange {
  std::size_t t0 = 0;
  std::size_t t1 = 0;  // exclusive
};

TapRange tap_range(std::size_t k, std::size_t pad, std::size_t len,
                   std::size_t out_len) {
  const auto lo = static_cast<std::ptrdiff_t>(pad) - static_cast<std::ptrdiff_t>(k);
  const auto hi = static_cast<std::ptrdiff_t>(len) + lo;
  TapRange r;
  r.t0 = static_cast<std::size_t>(std::max<std::ptrdiff_t>(lo, 0));
  r.t1 = static_cast<std::size_t>(
      std::clamp<std::ptrdiff_t>(hi, 0, static_cast<std::ptrdiff_t>(out_len)));
  if (r.t1 < r.t0) r.t1 = r.t0;
  return r;
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> s)
    : shape(std::move(s)), data(product(shape), T{0}) {}

template <typename T>
Tensor<T>::Tensor(std::vector<std::size_t> s, std::vector<T> values)
    : shape(std::move(s)), data(std::move(values)) {
  require(product(shape) == data.size(), "tensor shape does not match data length");
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data.begin(), data.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> to_tensor(const FeatureMatrix& m) {
  Tensor<T> t({m.rows, m.cols});
  std::transform(m.values.begin(), m.values.end(), t.data.begin(),
                 [](float v) { return static_cast<T>(v); });
  return t;
}

std::size_t Conv1dSpec::out_len(std::size_t len) const {
  if (stride == 0 || kernel == 0) throw shape_error("conv kernel and stride must be positive");
  if (len + 2 * pad < kernel) {
    throw shape_error("conv input length " + std::to_string(len) +
                      " too short for kernel " + std::to_string(kernel));
  }
  return (len + 2 * pad - kernel) / stride + 1;
}

std::size_t MaxPool1dSpec::out_len(std::size_t len) const {
  const std::size_t w = effective_width(len);
  const std::size_t s = effective_stride(len);
  if (w == 0 || s == 0 || w > len) {
    throw shape_error("pool width " + std::to_string(w) + " invalid for length " +
                      std::to_string(len));
  }
  return (len - w) / s + 1;
}

// --- convolution -----------------------------------------------------------

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Conv1dSpec& spec,
                         std::span<const T> weight, std::span<const T> bias) {
  require(input.shape.size() == 2 && input.dim(0) == spec.in_channels,
          "conv input must be [in_channels x T]");
  require(weight.size() == spec.weight_count() && bias.size() == spec.out_channels,
          "conv parameter size mismatch");
  const std::size_t len = input.dim(1);
  const std::size_t out_len = spec.out_len(len);
  Tensor<T> out({spec.out_channels, out_len});
  const std::size_t k_size = spec.kernel;

  for (std::size_t o = 0; o < spec.out_channels; ++o) {
    T* y = out.row(o);
    std::fill_n(y, out_len, bias[o]);
    for (std::size_t c = 0; c < spec.in_channels; ++c) {
      const T* x = input.row(c);
      const T* w = weight.data() + (o * spec.in_channels + c) * k_size;
      for (std::size_t k = 0; k < k_size; ++k) {
        if (spec.stride == 1) {
          const TapRange r = tap_range(k, spec.pad, len, out_len);
          if (r.t1 > r.t0) {
            axpy(w[k], x + (r.t0 + k - spec.pad), y + r.t0, r.t1 - r.t0);
          }
        } else {
          for (std::size_t t = 0; t < out_len; ++t) {
            const auto i = static_cast<std::ptrdiff_t>(t * spec.stride + k) -
                           static_cast<std::ptrdiff_t>(spec.pad);
            if (i >= 0 && static_cast<std::size_t>(i) < len) y[t] += w[k] * x[i];
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
void conv1d_backward_accumulate(const Tensor<T>& grad_out, const Tensor<T>& input,
                                const Conv1dSpec& spec, std::span<const T> weight,
                                Tensor<T>* grad_input, std::span<T> grad_weight,
                                std::span<T> grad_bias) {
  require(input.shape.size() == 2 && input.dim(0) == spec.in_channels,
          "conv input must be [in_channels x T]");
  const std::size_t len = input.dim(1);
  const std::size_t out_len = spec.out_len(len);
  require(grad_out.shape.size() == 2 && grad_out.dim(0) == spec.out_channels &&
              grad_out.dim(1) == out_len,
          "conv grad_out shape mismatch");
  require(weight.size() == spec.weight_count() &&
              grad_weight.size() == spec.weight_count() &&
              grad_bias.size() == spec.out_channels,
          "conv parameter size mismatch");
  if (grad_input) {
    require(grad_input->shape == input.shape, "conv grad_input shape mismatch");
  }
  const std::size_t k_size = spec.kernel;

  for (std::size_t o = 0; o < spec.out_channels; ++o) {
    const T* gy = grad_out.row(o);
    T bsum = 0;
    for (std::size_t t = 0; t < out_len; ++t) bsum += gy[t];
    grad_bias[o] += bsum;
    for (std::size_t c = 0; c < spec.in_channels; ++c) {
      const T* x = input.row(c);
      T* gx = grad_input ? grad_input->row(c) : nullptr;
      const std::size_t w_at = (o * spec.in_channels + c) * k_size;
      for (std::size_t k = 0; k < k_size; ++k) {
        if (spec.stride == 1) {
          const TapRange r = tap_range(k, spec.pad, len, out_len);
          if (r.t1 <= r.t0) continue;
          const std::size_t n = r.t1 - r.t0;
          const std::size_t in_at = r.t0 + k - spec.pad;
          grad_weight[w_at + k] += dot(gy + r.t0, x + in_at, n);
          if (gx) axpy(weight[w_at + k], gy + r.t0, gx + in_at, n);
        } else {
          T acc = 0;
          for (std::size_t t = 0; t < out_len; ++t) {
            const auto i = static_cast<std::ptrdiff_t>(t * spec.stride + k) -
                           static_cast<std::ptrdiff_t>(spec.pad);
            if (i < 0 || static_cast<std::size_t>(i) >= len) continue;
            acc += gy[t] * x[i];
            if (gx) gx[i] += weight[w_at + k] * gy[t];
          }
          grad_weight[w_at + k] += acc;
        }
      }
    }
  }
}

template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                               const Conv1dSpec& spec, std::span<const T> weight) {
  Conv1dGrads<T> g;
  g.input = Tensor<T>(input.shape);
  g.weight.assign(spec.weight_count(), T{0});
  g.bias.assign(spec.out_channels, T{0});
  conv1d_backward_accumulate<T>(grad_out, input, spec, weight, &g.input, g.weight,
                                g.bias);
  return g;
}

// --- relu / pool / fc ------------------------------------------------------

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input) {
  Tensor<T> out(input.shape);
  if constexpr (std::is_same_v<T, float>) {
    simd::kernels().relu_f32(input.data.data(), out.data.data(), input.size());
  } else {
    for (std::size_t i = 0; i < input.size(); ++i) {
      out.data[i] = input.data[i] > T{0} ? input.data[i] : T{0};
    }
  }
  return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input) {
  require(grad_out.shape == input.shape, "relu grad shape mismatch");
  Tensor<T> g(input.shape);
  for (std::size_t i = 0; i < input.size(); ++i) {
    g.data[i] = input.data[i] > T{0} ? grad_out.data[i] : T{0};
  }
  return g;
}

template <typename T>
PoolResult<T> maxpool1d_forward(const Tensor<T>& input, const MaxPool1dSpec& spec) {
  require(input.shape.size() == 2, "pool input must be [channels x T]");
  const std::size_t channels = input.dim(0);
  const std::size_t len = input.dim(1);
  const std::size_t out_len = spec.out_len(len);
  const std::size_t w = spec.effective_width(len);
  const std::size_t s = spec.effective_stride(len);
  PoolResult<T> r;
  r.output = Tensor<T>({channels, out_len});
  r.argmax.resize(channels * out_len);
  for (std::size_t c = 0; c < channels; ++c) {
    const T* x = input.row(c);
    for (std::size_t t = 0; t < out_len; ++t) {
      std::size_t best = t * s;
      for (std::size_t i = best + 1; i < t * s + w; ++i) {
        if (x[i] > x[best]) best = i;
      }
      r.output.data[c * out_len + t] = x[best];
      r.argmax[c * out_len + t] = c * len + best;
    }
  }
  return r;
}

template <typename T>
Tensor<T> maxpool1d_backward(const Tensor<T>& grad_out,
                             std::span<const std::size_t> argmax,
                             const std::vector<std::size_t>& input_shape) {
  require(grad_out.size() == argmax.size(), "pool grad size mismatch");
  Tensor<T> g(input_shape);
  for (std::size_t i = 0; i < argmax.size(); ++i) {
    require(argmax[i] < g.size(), "pool argmax out of range");
    g.data[argmax[i]] += grad_out.data[i];
  }
  return g;
}

template <typename T>
std::vector<T> fc_forward(std::span<const T> input, const FullyConnectedSpec& spec,
                          std::span<const T> weight, std::span<const T> bias) {
  require(input.size() == spec.in, "fc input size mismatch");
  require(weight.size() == spec.weight_count() && bias.size() == spec.out,
          "fc parameter size mismatch");
  std::vector<T> out(spec.out);
  for (std::size_t o = 0; o < spec.out; ++o) {
    out[o] = bias[o] + dot(weight.data() + o * spec.in, input.data(), spec.in);
  }
  return out;
}

template <typename T>
FcGrads<T> fc_backward(std::span<const T> grad_out, std::span<const T> input,
                       const FullyConnectedSpec& spec, std::span<const T> weight) {
  require(grad_out.size() == spec.out && input.size() == spec.in,
          "fc gradient size mismatch");
  require(weight.size() == spec.weight_count(), "fc parameter size mismatch");
  FcGrads<T> g;
  g.input.assign(spec.in, T{0});
  g.weight.assign(spec.weight_count(), T{0});
  g.bias.assign(grad_out.begin(), grad_out.end());
  for (std::size_t o = 0; o < spec.out; ++o) {
    axpy(grad_out[o], input.data(), g.weight.data() + o * spec.in, spec.in);
    axpy(grad_out[o], weight.data() + o * spec.in, g.input.data(), spec.in);
  }
  return g;
}

template <typename T>
XentResult<T> softmax_xent(std::span<const T> logits, std::size_t target) {
  require(!logits.empty() && target < logits.size(), "softmax target out of range");
  const T peak = *std::max_element(logits.begin(), logits.end());
  XentResult<T> r;
  r.probabilities.resize(logits.size());
  T sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    r.probabilities[i] = std::exp(logits[i] - peak);
    sum += r.probabilities[i];
  }
  for (T& p : r.probabilities) p /= sum;
  r.loss = -(logits[target] - peak - std::log(sum));
  r.grad = r.probabilities;
  r.grad[target] -= T{1};
  return r;
}

template <typename T>
std::size_t argmax(std::span<const T> logits) noexcept {
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

// --- model -----------------------------------------------------------------

std::vector<Conv1dSpec> ModelSpec::conv_layers() const {
  std::vector<Conv1dSpec> layers;
  std::size_t in = input_channels;
  for (std::size_t out : conv_channels) {
    layers.push_back({in, out, kernel, stride, pad});
    in = out;
  }
  return layers;
}

std::size_t ModelSpec::conv_out_len() const {
  std::size_t len = input_len;
  for (const auto& layer : conv_layers()) len = layer.out_len(len);
  return len;
}

FullyConnectedSpec ModelSpec::fc_layer() const {
  const std::size_t channels = conv_channels.empty() ? input_channels : conv_channels.back();
  return {channels * pool.out_len(conv_out_len()), n_classes};
}

std::size_t ModelSpec::parameter_count() const { return ParamLayout(*this).total; }

void ModelSpec::validate() const {
  require(input_channels > 0 && input_len > 0, "model input must be non-empty");
  require(!conv_channels.empty(), "model needs at least one convolution");
  require(n_classes == kNumEmotions, "model output must have one logit per emotion class");
  for (std::size_t c : conv_channels) require(c > 0, "conv channel count must be positive");
  (void)fc_layer();  // walks every layer's out_len
}

ParamLayout::ParamLayout(const ModelSpec& spec) {
  std::size_t at = 0;
  for (const auto& layer : spec.conv_layers()) {
    conv_weight.push_back({at, layer.weight_count()});
    at += layer.weight_count();
    conv_bias.push_back({at, layer.out_channels});
    at += layer.out_channels;
  }
  const auto fc = spec.fc_layer();
  fc_weight = {at, fc.weight_count()};
  at += fc.weight_count();
  fc_bias = {at, fc.out};
  at += fc.out;
  total = at;
}

std::vector<std::string> ParamLayout::names() const {
  std::vector<std::string> n;
  for (std::size_t i = 0; i < conv_weight.size(); ++i) {
    n.push_back("conv" + std::to_string(i) + ".weight");
    n.push_back("conv" + std::to_string(i) + ".bias");
  }
  n.emplace_back("fc.weight");
  n.emplace_back("fc.bias");
  return n;
}

std::vector<ParamRange> ParamLayout::ranges() const {
  std::vector<ParamRange> r;
  for (std::size_t i = 0; i < conv_weight.size(); ++i) {
    r.push_back(conv_weight[i]);
    r.push_back(conv_bias[i]);
  }
  r.push_back(fc_weight);
  r.push_back(fc_bias);
  return r;
}

template <typename T>
Model<T>::Model(ModelSpec spec)
    : spec_((spec.validate(), std::move(spec))), layout_(spec_), params_(layout_.total, T{0}) {}

template <typename T>
void Model<T>::init_he_uniform(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const auto fill = [&](ParamRange r, std::size_t fan_in) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < r.count; ++i) {
      params_[r.offset + i] = static_cast<T>(dist(rng));
    }
  };
  const auto convs = spec_.conv_layers();
  for (std::size_t i = 0; i < convs.size(); ++i) {
    fill(layout_.conv_weight[i], convs[i].in_channels * convs[i].kernel);
    std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layout_.conv_bias[i].offset),
                layout_.conv_bias[i].count, T{0});
  }
  fill(layout_.fc_weight, spec_.fc_layer().in);
  std::fill_n(params_.begin() + static_cast<std::ptrdiff_t>(layout_.fc_bias.offset),
              layout_.fc_bias.count, T{0});
}

template <typename T>
std::vector<T> Model<T>::forward(const Tensor<T>& input, Trace* trace) const {
  require(input.shape.size() == 2 && input.dim(0) == spec_.input_channels &&
              input.dim(1) == spec_.input_len,
          "model input shape mismatch");
  const auto convs = spec_.conv_layers();
  const std::span<const T> p(params_);
  if (trace) {
    trace->conv_inputs.clear();
    trace->pre_relu.clear();
  }
  Tensor<T> x = input;
  for (std::size_t i = 0; i < convs.size(); ++i) {
    const auto w = p.subspan(layout_.conv_weight[i].offset, layout_.conv_weight[i].count);
    const auto b = p.subspan(layout_.conv_bias[i].offset, layout_.conv_bias[i].count);
    Tensor<T> z = conv1d_forward<T>(x, convs[i], w, b);
    Tensor<T> a = relu_forward(z);
    if (trace) {
      trace->conv_inputs.push_back(std::move(x));
      trace->pre_relu.push_back(std::move(z));
    }
    x = std::move(a);
  }
  PoolResult<T> pooled = maxpool1d_forward(x, spec_.pool);
  const auto fc = spec_.fc_layer();
  std::vector<T> logits =
      fc_forward<T>(pooled.output.data, fc,
                    p.subspan(layout_.fc_weight.offset, layout_.fc_weight.count),
                    p.subspan(layout_.fc_bias.offset, layout_.fc_bias.count));
  if (trace) {
    trace->pool_argmax = std::move(pooled.argmax);
    trace->pool_input_shape = x.shape;
    trace->flat = std::move(pooled.output.data);
  }
  return logits;
}

template <typename T>
void Model<T>::backward(const Trace& trace, std::span<const T> grad_logits,
                        std::span<T> grads, Tensor<T>* grad_input) const {
  require(grads.size() == params_.size(), "gradient buffer size mismatch");
  require(grad_logits.size() == spec_.n_classes, "grad_logits size mismatch");
  const std::span<const T> p(params_);
  const auto fc = spec_.fc_layer();

  FcGrads<T> gfc = fc_backward<T>(grad_logits, trace.flat, fc,
                                  p.subspan(layout_.fc_weight.offset, layout_.fc_weight.count));
  for (std::size_t i = 0; i < gfc.weight.size(); ++i) grads[layout_.fc_weight.offset + i] += gfc.weight[i];
  for (std::size_t i = 0; i < gfc.bias.size(); ++i) grads[layout_.fc_bias.offset + i] += gfc.bias[i];

  Tensor<T> g_pool_out({trace.flat.size()}, std::move(gfc.input));
  Tensor<T> g = maxpool1d_backward(g_pool_out, trace.pool_argmax, trace.pool_input_shape);

  const auto convs = spec_.conv_layers();
  for (std::size_t li = convs.size(); li-- > 0;) {
    const Tensor<T>& z = trace.pre_relu[li];
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!(z.data[i] > T{0})) g.data[i] = T{0};
    }
    const bool need_input = li > 0 || grad_input != nullptr;
    Tensor<T> gx;
    if (need_input) gx = Tensor<T>(trace.conv_inputs[li].shape);
    conv1d_backward_accumulate<T>(
        g, trace.conv_inputs[li], convs[li],
        p.subspan(layout_.conv_weight[li].offset, layout_.conv_weight[li].count),
        need_input ? &gx : nullptr,
        grads.subspan(layout_.conv_weight[li].offset, layout_.conv_weight[li].count),
        grads.subspan(layout_.conv_bias[li].offset, layout_.conv_bias[li].count));
    g = std::move(gx);
  }
  if (grad_input) *grad_input = std::move(g);
}

template <typename T>
template <typename U>
Model<U> Model<T>::cast() const {
  Model<U> out(spec_);
  std::transform(params_.begin(), params_.end(), out.params().begin(),
                 [](T v) { return static_cast<U>(v); });
  return out;
}

template <typename T>
Tensor<T> model_forward(const Model<T>& model, std::span<const Tensor<T>> batch) {
  const std::size_t classes = model.spec().n_classes;
  Tensor<T> logits({batch.size(), classes});
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto row = model.forward(batch[b]);
    std::copy(row.begin(), row.end(), logits.row(b));
  }
  return logits;
}

template <typename T>
T model_loss_and_gradients(const Model<T>& model, std::span<const Tensor<T>> batch,
                           std::span<const std::size_t> targets, std::span<T> grads,
                           std::vector<std::size_t>* predictions) {
  require(!batch.empty() && batch.size() == targets.size(), "batch and targets differ");
  std::fill(grads.begin(), grads.end(), T{0});
  typename Model<T>::Trace trace;
  T total = 0;
  const T scale = T{1} / static_cast<T>(batch.size());
  if (predictions) predictions->clear();
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto logits = model.forward(batch[b], &trace);
    auto xent = softmax_xent<T>(logits, targets[b]);
    total += xent.loss;
    if (predictions) predictions->push_back(argmax<T>(logits));
    for (T& g : xent.grad) g *= scale;
    model.backward(trace, xent.grad, grads);
  }
  return total * scale;
}

void RmsProp::step(std::span<float> params, std::span<const float> grads) {
  require(params.size() == accum_.size() && grads.size() == accum_.size(),
          "optimizer state does not match parameters");
  simd::kernels().rmsprop_f32(params.data(), accum_.data(), grads.data(),
                              params.size(), cfg_.lr, cfg_.rho, cfg_.eps);
}

#define AFFECTLINE_NN_INSTANTIATE(T)                                              \
  template struct Tensor<T>;                                                      \
  template Tensor<T> to_tensor<T>(const FeatureMatrix&);                          \
  template Tensor<T> conv1d_forward<T>(const Tensor<T>&, const Conv1dSpec&,       \
                                       std::span<const T>, std::span<const T>);   \
  template Conv1dGrads<T> conv1d_backward<T>(const Tensor<T>&, const Tensor<T>&,  \
                                             const Conv1dSpec&, std::span<const T>); \
  template void conv1d_backward_accumulate<T>(                                    \
      const Tensor<T>&, const Tensor<T>&, const Conv1dSpec&, std::span<const T>,  \
      Tensor<T>*, std::span<T>, std::span<T>);                                    \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                           \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);        \
  template PoolResult<T> maxpool1d_forward<T>(const Tensor<T>&, const MaxPool1dSpec&); \
  template Tensor<T> maxpool1d_backward<T>(const Tensor<T>&,                      \
                                           std::span<const std::size_t>,          \
                                           const std::vector<std::size_t>&);      \
  template std::vector<T> fc_forward<T>(std::span<const T>, const FullyConnectedSpec&, \
                                        std::span<const T>, std::span<const T>);  \
  template FcGrads<T> fc_backward<T>(std::span<const T>, std::span<const T>,      \
                                     const FullyConnectedSpec&, std::span<const T>); \
  template XentResult<T> softmax_xent<T>(std::span<const T>, std::size_t);        \
  template std::size_t argmax<T>(std::span<const T>) noexcept;                    \
  template class Model<T>;                                                        \
  template Tensor<T> model_forward<T>(const Model<T>&, std::span<const Tensor<T>>); \
  template T model_loss_and_gradients<T>(const Model<T>&, std::span<const Tensor<T>>, \
                                         std::span<const std::size_t>, std::span<T>, \
                                         std::vector<std::size_t>*);

AFFECTLINE_NN_INSTANTIATE(float)
AFFECTLINE_NN_INSTANTIATE(double)
#undef AFFECTLINE_NN_INSTANTIATE

template Model<double> Model<float>::cast<double>() const;
template Model<float> Model<double>::cast<float>() const;

}  // namespace affectline::nn
