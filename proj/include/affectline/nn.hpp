#pragma once

// Minimal CNN kernel: 1-D convolution over time with feature rows as
// channels, ReLU, max pooling, a fully connected head, softmax
// cross-entropy, explicit backpropagation and RMSProp. Templates are
// instantiated for float (training) and double (gradient checks).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "affectline/features.hpp"

namespace affectline::nn {

template <typename T>
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s);
  Tensor(std::vector<std::size_t> s, std::vector<T> values);

  std::size_t size() const noexcept { return data.size(); }
  std::size_t dim(std::size_t i) const { return shape.at(i); }
  T* row(std::size_t r) { return data.data() + r * shape.back(); }
  const T* row(std::size_t r) const { return data.data() + r * shape.back(); }

  bool all_finite() const noexcept;
};

/// Copies a feature matrix into a [rows x cols] tensor.
template <typename T>
Tensor<T> to_tensor(const FeatureMatrix& m);

struct Conv1dSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t weight_count() const noexcept { return out_channels * in_channels * kernel; }
  /// Throws Error{shape_mismatch} when len + 2*pad < kernel.
  std::size_t out_len(std::size_t len) const;

  friend bool operator==(const Conv1dSpec&, const Conv1dSpec&) = default;
};

/// width == 0 means a global pool over the whole remaining time axis.
struct MaxPool1dSpec {
  std::size_t width = 0;
  std::size_t stride = 0;  // 0 means stride == width

  std::size_t effective_width(std::size_t len) const noexcept {
    return width == 0 ? len : width;
  }
  std::size_t effective_stride(std::size_t len) const noexcept {
    return stride == 0 ? effective_width(len) : stride;
  }
  std::size_t out_len(std::size_t len) const;

  friend bool operator==(const MaxPool1dSpec&, const MaxPool1dSpec&) = default;
};

struct FullyConnectedSpec {
  std::size_t in = 1;
  std::size_t out = 1;
  std::size_t weight_count() const noexcept { return in * out; }
};

// --- layer operations ------------------------------------------------------
// Weights are laid out [out_channels][in_channels][kernel] for convolution
// and [out][in] for the fully connected layer.

template <typename T>
Tensor<T> conv1d_forward(const Tensor<T>& input, const Conv1dSpec& spec,
                         std::span<const T> weight, std::span<const T> bias);

template <typename T>
struct Conv1dGrads {
  Tensor<T> input;
  std::vector<T> weight;
  std::vector<T> bias;
};

template <typename T>
Conv1dGrads<T> conv1d_backward(const Tensor<T>& grad_out, const Tensor<T>& input,
                               const Conv1dSpec& spec, std::span<const T> weight);

/// Accumulating form used by the model: adds into grad_weight/grad_bias and,
/// when grad_input is non-null, into *grad_input (same shape as input).
template <typename T>
void conv1d_backward_accumulate(const Tensor<T>& grad_out, const Tensor<T>& input,
                                const Conv1dSpec& spec, std::span<const T> weight,
                                Tensor<T>* grad_input, std::span<T> grad_weight,
                                std::span<T> grad_bias);

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& input);

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& grad_out, const Tensor<T>& input);

template <typename T>
struct PoolResult {
  Tensor<T> output;
  std::vector<std::size_t> argmax;  // flat input index per output element
};

/// Ties resolve to the first (lowest) index in the window.
template <typename T>
PoolResult<T> maxpool1d_forward(const Tensor<T>& input, const MaxPool1dSpec& spec);

template <typename T>
Tensor<T> maxpool1d_backward(const Tensor<T>& grad_out,
                             std::span<const std::size_t> argmax,
                             const std::vector<std::size_t>& input_shape);

template <typename T>
std::vector<T> fc_forward(std::span<const T> input, const FullyConnectedSpec& spec,
                          std::span<const T> weight, std::span<const T> bias);

template <typename T>
struct FcGrads {
  std::vector<T> input;
  std::vector<T> weight;
  std::vector<T> bias;
};

template <typename T>
FcGrads<T> fc_backward(std::span<const T> grad_out, std::span<const T> input,
                       const FullyConnectedSpec& spec, std::span<const T> weight);

template <typename T>
struct XentResult {
  T loss = 0;
  std::vector<T> grad;        // d loss / d logits
  std::vector<T> probabilities;
};

/// Max-shifted softmax followed by -log p[target].
template <typename T>
XentResult<T> softmax_xent(std::span<const T> logits, std::size_t target);

/// Index of the largest logit; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> logits) noexcept;

// --- model -----------------------------------------------------------------

/// [Conv1d -> ReLU] x N, one MaxPool1d, Flatten, FullyConnected.
struct ModelSpec {
  std::size_t input_channels = 41;
  std::size_t input_len = 300;
  std::vector<std::size_t> conv_channels{64, 64, 128, 128, 256, 256};
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 1;
  MaxPool1dSpec pool{};
  std::size_t n_classes = 6;

  std::vector<Conv1dSpec> conv_layers() const;
  /// Time length after the last convolution.
  std::size_t conv_out_len() const;
  FullyConnectedSpec fc_layer() const;
  std::size_t parameter_count() const;

  /// Throws Error{shape_mismatch} if any adjacent layers are incompatible.
  void validate() const;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct ParamRange {
  std::size_t offset = 0;
  std::size_t count = 0;
};

/// Offsets of each parameter tensor inside the flat parameter vector, in
/// declaration order: conv_0.weight, conv_0.bias, ..., fc.weight, fc.bias.
struct ParamLayout {
  std::vector<ParamRange> conv_weight;
  std::vector<ParamRange> conv_bias;
  ParamRange fc_weight;
  ParamRange fc_bias;
  std::size_t total = 0;

  explicit ParamLayout(const ModelSpec& spec);
  std::vector<std::string> names() const;
  std::vector<ParamRange> ranges() const;
};

template <typename T>
class Model {
 public:
  /// Parameters start at zero; call init_he_uniform for training.
  explicit Model(ModelSpec spec);

  const ModelSpec& spec() const noexcept { return spec_; }
  const ParamLayout& layout() const noexcept { return layout_; }
  std::span<T> params() noexcept { return params_; }
  std::span<const T> params() const noexcept { return params_; }

  /// He-uniform (limit sqrt(6 / fan_in)) weights, zero biases.
  void init_he_uniform(std::uint64_t seed);

  /// Activations cached by forward for use in backward.
  struct Trace {
    std::vector<Tensor<T>> conv_inputs;   // input of conv i
    std::vector<Tensor<T>> pre_relu;      // output of conv i
    std::vector<std::size_t> pool_argmax;
    std::vector<std::size_t> pool_input_shape;
    std::vector<T> flat;                  // FC input
  };

  /// Logits for one [input_channels x input_len] input.
  std::vector<T> forward(const Tensor<T>& input, Trace* trace = nullptr) const;

  /// Accumulates parameter gradients into `grads` (size == params().size()).
  /// Returns the gradient with respect to the input when requested.
  void backward(const Trace& trace, std::span<const T> grad_logits,
                std::span<T> grads, Tensor<T>* grad_input = nullptr) const;

  template <typename U>
  Model<U> cast() const;

 private:
  ModelSpec spec_;
  ParamLayout layout_;
  std::vector<T> params_;
};

/// Logits for a batch, shape [batch x n_classes].
template <typename T>
Tensor<T> model_forward(const Model<T>& model, std::span<const Tensor<T>> batch);

/// Mean cross-entropy over the batch; writes mean gradients into `grads`.
template <typename T>
T model_loss_and_gradients(const Model<T>& model, std::span<const Tensor<T>> batch,
                           std::span<const std::size_t> targets, std::span<T> grads,
                           std::vector<std::size_t>* predictions = nullptr);

// --- optimizer -------------------------------------------------------------

struct RmsPropConfig {
  float lr = 1e-4f;
  float rho = 0.9f;
  float eps = 1e-8f;
};

/// s <- rho*s + (1-rho)*g^2;  p <- p - lr*g / (sqrt(s) + eps)
class RmsProp {
 public:
  RmsProp(RmsPropConfig cfg, std::size_t n_params)
      : cfg_(cfg), accum_(n_params, 0.0f) {}

  void step(std::span<float> params, std::span<const float> grads);

  const RmsPropConfig& config() const noexcept { return cfg_; }
  std::span<const float> accumulator() const noexcept { return accum_; }

 private:
  RmsPropConfig cfg_;
  std::vector<float> accum_;
};

}  // namespace affectline::nn
