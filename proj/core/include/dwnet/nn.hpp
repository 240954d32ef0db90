#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dwnet/random.hpp"
#include "dwnet/tensor.hpp"

namespace dwnet {

// Layer set used to train the co-occurrence network. All tensors are NCHW,
// all arithmetic is double precision, and every routine is single-threaded with
// a fixed reduction order so equal inputs give bit-identical outputs.

/// 2-D convolution layer (cross-correlation, no kernel flip).
struct ConvLayer {
    Tensor weights;  // [out_channels, in_channels, kh, kw]
    Tensor bias;     // [out_channels]
    std::array<std::size_t, 2> stride{1, 1};
    std::array<std::size_t, 2> padding{0, 0};

    std::size_t out_channels() const { return weights.dim(0); }
    std::size_t in_channels() const { return weights.dim(1); }
    std::size_t kernel_h() const { return weights.dim(2); }
    std::size_t kernel_w() const { return weights.dim(3); }

    /// floor((in + 2*pad - k) / stride) + 1 per axis. Throws ShapeError if < 1.
    std::array<std::size_t, 2> output_hw(std::size_t in_h, std::size_t in_w) const;
};

struct ConvGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer);
ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& cached_input,
                          const ConvLayer& layer);

struct PoolResult {
    Tensor output;
    /// Flat index into the input for every output element.
    std::vector<std::size_t> argmax;
};

/// 2x2 max pooling with stride 2. Odd trailing rows/columns are dropped.
PoolResult maxpool2d(const Tensor& input);
Tensor maxpool2d_backward(const Tensor& grad_out, std::span<const std::size_t> argmax,
                          const Shape& input_shape);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& grad_out, const Tensor& input);

struct DropoutResult {
    Tensor output;
    /// Per-element multiplier: 0 for dropped units, 1/(1-rate) for survivors.
    Tensor mask;
};

/// Inverted dropout. Identity when `training` is false or `rate` is 0.
DropoutResult dropout(const Tensor& input, double rate, bool training, Rng& rng);
Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask);

/// Fully connected layer, output = input * weights + bias.
struct DenseLayer {
    Tensor weights;  // [in_dim, out_dim]
    Tensor bias;     // [out_dim]

    std::size_t in_dim() const { return weights.dim(0); }
    std::size_t out_dim() const { return weights.dim(1); }
};

struct DenseGrads {
    Tensor input;
    Tensor weights;
    Tensor bias;
};

Tensor dense_forward(const Tensor& input, const DenseLayer& layer);
DenseGrads dense_backward(const Tensor& grad_out, const Tensor& cached_input,
                          const DenseLayer& layer);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& logits);

struct LossResult {
    double loss = 0.0;   // mean negative log-likelihood
    Tensor grad_logits;  // (softmax - onehot) / N
};

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

struct SgdConfig {
    double learning_rate = 0.01;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    int epochs = 300;
    int batch_size = 32;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SgdState {
    std::vector<Tensor> velocity;
};

/// velocity = momentum*velocity - lr*(grad + weight_decay*param); param += velocity.
/// Velocity buffers are created on first use.
void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
              const SgdConfig& config, SgdState& state);

/// Glorot-uniform fill: uniform(-a, a), a = sqrt(6 / (fan_in + fan_out)).
void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng);

}  // namespace dwnet
