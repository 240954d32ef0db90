#include "dwnet/nn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Core>

#include "dwnet/error.hpp"

namespace dwnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

struct ConvGeometry {
    std::size_t n, c, h, w;
    std::size_t out_c, kh, kw, sh, sw, ph, pw;
    std::size_t out_h, out_w;

    std::size_t patch() const { return c * kh * kw; }
    std::size_t out_plane() const { return out_h * out_w; }
};

ConvGeometry conv_geometry(const Tensor& input, const ConvLayer& layer) {
    require_rank(input, 4, "conv2d input");
    require_rank(layer.weights, 4, "conv2d weights");
    if (layer.bias.shape() != Shape{layer.out_channels()}) {
        throw ShapeError("conv2d bias: expected shape [" + std::to_string(layer.out_channels()) +
                         "], got " + shape_to_string(layer.bias.shape()));
    }
    if (input.dim(1) != layer.in_channels()) {
        throw ShapeError("conv2d: input has " + std::to_string(input.dim(1)) +
                         " channels but layer expects " + std::to_string(layer.in_channels()) +
                         " (input shape " + shape_to_string(input.shape()) + ")");
    }
    const auto [oh, ow] = layer.output_hw(input.dim(2), input.dim(3));
    return ConvGeometry{input.dim(0),        input.dim(1),     input.dim(2),    input.dim(3),
                        layer.out_channels(), layer.kernel_h(), layer.kernel_w(), layer.stride[0],
                        layer.stride[1],      layer.padding[0], layer.padding[1], oh,
                        ow};
}

// Unfolds one sample [C, H, W] into a [C*kh*kw, out_h*out_w] patch matrix.
void im2col(const double* x, const ConvGeometry& g, double* cols) {
    const std::size_t plane = g.out_plane();
    for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                double* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) -
                                    static_cast<std::ptrdiff_t>(g.ph);
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) -
                                        static_cast<std::ptrdiff_t>(g.pw);
                        const bool inside = ih >= 0 && iw >= 0 &&
                                            ih < static_cast<std::ptrdiff_t>(g.h) &&
                                            iw < static_cast<std::ptrdiff_t>(g.w);
                        row[oh * g.out_w + ow] =
                            inside ? x[(c * g.h + static_cast<std::size_t>(ih)) * g.w +
                                       static_cast<std::size_t>(iw)]
                                   : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* cols, const ConvGeometry& g, double* x) {
    const std::size_t plane = g.out_plane();
    for (std::size_t c = 0; c < g.c; ++c) {
        for (std::size_t ki = 0; ki < g.kh; ++ki) {
            for (std::size_t kj = 0; kj < g.kw; ++kj) {
                const double* row = cols + ((c * g.kh + ki) * g.kw + kj) * plane;
                for (std::size_t oh = 0; oh < g.out_h; ++oh) {
                    const auto ih = static_cast<std::ptrdiff_t>(oh * g.sh + ki) -
                                    static_cast<std::ptrdiff_t>(g.ph);
                    if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(g.h)) {
                        continue;
                    }
                    for (std::size_t ow = 0; ow < g.out_w; ++ow) {
                        const auto iw = static_cast<std::ptrdiff_t>(ow * g.sw + kj) -
                                        static_cast<std::ptrdiff_t>(g.pw);
                        if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(g.w)) {
                            continue;
                        }
                        x[(c * g.h + static_cast<std::size_t>(ih)) * g.w +
                          static_cast<std::size_t>(iw)] += row[oh * g.out_w + ow];
                    }
                }
            }
        }
    }
}

}  // namespace

std::array<std::size_t, 2> ConvLayer::output_hw(std::size_t in_h, std::size_t in_w) const {
    std::array<std::size_t, 2> out{};
    const std::array<std::size_t, 2> in{in_h, in_w};
    const std::array<std::size_t, 2> k{kernel_h(), kernel_w()};
    for (std::size_t a = 0; a < 2; ++a) {
        if (stride[a] == 0) {
            throw ShapeError("conv2d: stride must be positive");
        }
        const std::size_t padded = in[a] + 2 * padding[a];
        if (padded < k[a]) {
            throw ShapeError("conv2d: kernel " + std::to_string(kernel_h()) + "x" +
                             std::to_string(kernel_w()) + " does not fit padded input " +
                             std::to_string(in_h + 2 * padding[0]) + "x" +
                             std::to_string(in_w + 2 * padding[1]));
        }
        out[a] = (padded - k[a]) / stride[a] + 1;
    }
    return out;
}

Tensor conv2d_forward(const Tensor& input, const ConvLayer& layer) {
    const ConvGeometry g = conv_geometry(input, layer);
    Tensor out({g.n, g.out_c, g.out_h, g.out_w});
    std::vector<double> cols(g.patch() * g.out_plane());
    const ConstMatrixMap w(layer.weights.data().data(), static_cast<Eigen::Index>(g.out_c),
                           static_cast<Eigen::Index>(g.patch()));
    const std::size_t in_stride = g.c * g.h * g.w;
    const std::size_t out_stride = g.out_c * g.out_plane();
    for (std::size_t n = 0; n < g.n; ++n) {
        im2col(input.data().data() + n * in_stride, g, cols.data());
        const ConstMatrixMap col_map(cols.data(), static_cast<Eigen::Index>(g.patch()),
                                     static_cast<Eigen::Index>(g.out_plane()));
        MatrixMap y(out.data().data() + n * out_stride, static_cast<Eigen::Index>(g.out_c),
                    static_cast<Eigen::Index>(g.out_plane()));
        y.noalias() = w * col_map;
        for (std::size_t oc = 0; oc < g.out_c; ++oc) {
            y.row(static_cast<Eigen::Index>(oc)).array() += layer.bias[oc];
        }
    }
    return out;
}

ConvGrads conv2d_backward(const Tensor& grad_out, const Tensor& cached_input,
                          const ConvLayer& layer) {
    const ConvGeometry g = conv_geometry(cached_input, layer);
    require_shape(grad_out, {g.n, g.out_c, g.out_h, g.out_w}, "conv2d_backward grad_out");

    ConvGrads grads{Tensor(cached_input.shape()), Tensor(layer.weights.shape()),
                    Tensor(layer.bias.shape())};
    std::vector<double> cols(g.patch() * g.out_plane());
    std::vector<double> grad_cols(cols.size());
    const ConstMatrixMap w(layer.weights.data().data(), static_cast<Eigen::Index>(g.out_c),
                           static_cast<Eigen::Index>(g.patch()));
    MatrixMap gw(grads.weights.data().data(), static_cast<Eigen::Index>(g.out_c),
                 static_cast<Eigen::Index>(g.patch()));
    const std::size_t in_stride = g.c * g.h * g.w;
    const std::size_t out_stride = g.out_c * g.out_plane();
    for (std::size_t n = 0; n < g.n; ++n) {
        im2col(cached_input.data().data() + n * in_stride, g, cols.data());
        const ConstMatrixMap col_map(cols.data(), static_cast<Eigen::Index>(g.patch()),
                                     static_cast<Eigen::Index>(g.out_plane()));
        const ConstMatrixMap dy(grad_out.data().data() + n * out_stride,
                                static_cast<Eigen::Index>(g.out_c),
                                static_cast<Eigen::Index>(g.out_plane()));
        gw.noalias() += dy * col_map.transpose();
        for (std::size_t oc = 0; oc < g.out_c; ++oc) {
            grads.bias[oc] += dy.row(static_cast<Eigen::Index>(oc)).sum();
        }
        MatrixMap dcols(grad_cols.data(), static_cast<Eigen::Index>(g.patch()),
                        static_cast<Eigen::Index>(g.out_plane()));
        dcols.noalias() = w.transpose() * dy;
        col2im(grad_cols.data(), g, grads.input.data().data() + n * in_stride);
    }
    return grads;
}

PoolResult maxpool2d(const Tensor& input) {
    require_rank(input, 4, "maxpool2d input");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    if (h < 2 || w < 2) {
        throw ShapeError("maxpool2d: spatial dims must be >= 2, got " +
                         shape_to_string(input.shape()));
    }
    const std::size_t oh = h / 2, ow = w / 2;
    PoolResult result{Tensor({n, c, oh, ow}), {}};
    result.argmax.resize(result.output.size());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t i = 0; i < oh; ++i) {
            for (std::size_t j = 0; j < ow; ++j, ++o) {
                std::size_t best = base + (2 * i) * w + 2 * j;
                for (std::size_t di = 0; di < 2; ++di) {
                    for (std::size_t dj = 0; dj < 2; ++dj) {
                        const std::size_t idx = base + (2 * i + di) * w + 2 * j + dj;
                        if (input[idx] > input[best]) {
                            best = idx;
                        }
                    }
                }
                result.output[o] = input[best];
                result.argmax[o] = best;
            }
        }
    }
    return result;
}

Tensor maxpool2d_backward(const Tensor& grad_out, std::span<const std::size_t> argmax,
                          const Shape& input_shape) {
    if (argmax.size() != grad_out.size()) {
        throw ShapeError("maxpool2d_backward: " + std::to_string(argmax.size()) +
                         " argmax indices for gradient of shape " +
                         shape_to_string(grad_out.shape()));
    }
    Tensor grad_in(input_shape);
    for (std::size_t o = 0; o < argmax.size(); ++o) {
        if (argmax[o] >= grad_in.size()) {
            throw ShapeError("maxpool2d_backward: argmax index out of range for input shape " +
                             shape_to_string(input_shape));
        }
        grad_in[argmax[o]] += grad_out[o];
    }
    return grad_in;
}

Tensor relu(const Tensor& input) {
    Tensor out = input;
    for (auto& v : out.data()) {
        v = v > 0.0 ? v : 0.0;
    }
    return out;
}

Tensor relu_backward(const Tensor& grad_out, const Tensor& input) {
    require_shape(grad_out, input.shape(), "relu_backward grad_out");
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!(input[i] > 0.0)) {
            grad[i] = 0.0;
        }
    }
    return grad;
}

DropoutResult dropout(const Tensor& input, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    }
    DropoutResult result{input, Tensor(input.shape(), 1.0)};
    if (!training || rate == 0.0) {
        return result;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double m = rng.uniform() < rate ? 0.0 : keep_scale;
        result.mask[i] = m;
        result.output[i] = input[i] * m;
    }
    return result;
}

Tensor dropout_backward(const Tensor& grad_out, const Tensor& mask) {
    require_shape(grad_out, mask.shape(), "dropout_backward grad_out");
    Tensor grad = grad_out;
    for (std::size_t i = 0; i < grad.size(); ++i) {
        grad[i] *= mask[i];
    }
    return grad;
}

namespace {

void check_dense(const Tensor& input, const DenseLayer& layer, const char* what) {
    require_rank(input, 2, what);
    require_rank(layer.weights, 2, "dense weights");
    if (layer.bias.shape() != Shape{layer.out_dim()}) {
        throw ShapeError("dense bias: expected shape [" + std::to_string(layer.out_dim()) +
                         "], got " + shape_to_string(layer.bias.shape()));
    }
    if (input.dim(1) != layer.in_dim()) {
        throw ShapeError(std::string(what) + ": input width " + std::to_string(input.dim(1)) +
                         " does not match layer in_dim " + std::to_string(layer.in_dim()));
    }
}

}  // namespace

// Rows are computed independently with a fixed i-k-j order so a batch gives the
// same bits as the rows evaluated one at a time.
Tensor dense_forward(const Tensor& input, const DenseLayer& layer) {
    check_dense(input, layer, "dense_forward");
    const std::size_t n = input.dim(0), in = layer.in_dim(), out = layer.out_dim();
    Tensor y({n, out});
    for (std::size_t r = 0; r < n; ++r) {
        double* yr = y.data().data() + r * out;
        std::copy(layer.bias.data().begin(), layer.bias.data().end(), yr);
        const double* xr = input.data().data() + r * in;
        for (std::size_t k = 0; k < in; ++k) {
            const double xv = xr[k];
            const double* wk = layer.weights.data().data() + k * out;
            for (std::size_t j = 0; j < out; ++j) {
                yr[j] += xv * wk[j];
            }
        }
    }
    return y;
}

DenseGrads dense_backward(const Tensor& grad_out, const Tensor& cached_input,
                          const DenseLayer& layer) {
    check_dense(cached_input, layer, "dense_backward");
    const std::size_t n = cached_input.dim(0), in = layer.in_dim(), out = layer.out_dim();
    require_shape(grad_out, {n, out}, "dense_backward grad_out");
    DenseGrads grads{Tensor(cached_input.shape()), Tensor(layer.weights.shape()),
                     Tensor(layer.bias.shape())};
    for (std::size_t r = 0; r < n; ++r) {
        const double* gr = grad_out.data().data() + r * out;
        const double* xr = cached_input.data().data() + r * in;
        double* gx = grads.input.data().data() + r * in;
        for (std::size_t j = 0; j < out; ++j) {
            grads.bias[j] += gr[j];
        }
        for (std::size_t k = 0; k < in; ++k) {
            const double* wk = layer.weights.data().data() + k * out;
            double* gwk = grads.weights.data().data() + k * out;
            double acc = 0.0;
            for (std::size_t j = 0; j < out; ++j) {
                acc += gr[j] * wk[j];
                gwk[j] += xr[k] * gr[j];
            }
            gx[k] = acc;
        }
    }
    return grads;
}

Tensor softmax(const Tensor& logits) {
    require_rank(logits, 2, "softmax logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    Tensor p(logits.shape());
    for (std::size_t r = 0; r < n; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
            mx = std::max(mx, logits.at(r, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            const double e = std::exp(logits.at(r, j) - mx);
            p.at(r, j) = e;
            total += e;
        }
        for (std::size_t j = 0; j < c; ++j) {
            p.at(r, j) /= total;
        }
    }
    return p;
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels) {
    require_rank(logits, 2, "softmax_cross_entropy logits");
    const std::size_t n = logits.dim(0), c = logits.dim(1);
    if (labels.size() != n) {
        throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                         " labels for " + std::to_string(n) + " rows");
    }
    LossResult result{0.0, Tensor(logits.shape())};
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t r = 0; r < n; ++r) {
        const int y = labels[r];
        if (y < 0 || static_cast<std::size_t>(y) >= c) {
            throw ConfigError("softmax_cross_entropy: label " + std::to_string(y) +
                              " at row " + std::to_string(r) + " outside [0, " +
                              std::to_string(c) + ")");
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) {
            mx = std::max(mx, logits.at(r, j));
        }
        double total = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            total += std::exp(logits.at(r, j) - mx);
        }
        const double log_z = mx + std::log(total);
        result.loss += (log_z - logits.at(r, static_cast<std::size_t>(y))) * inv_n;
        for (std::size_t j = 0; j < c; ++j) {
            const double pj = std::exp(logits.at(r, j) - log_z);
            const double target = j == static_cast<std::size_t>(y) ? 1.0 : 0.0;
            result.grad_logits.at(r, j) = (pj - target) * inv_n;
        }
    }
    return result;
}

void SgdConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("sgd: learning_rate must be a non-negative finite number");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) {
        throw ConfigError("sgd: momentum must be in [0, 1)");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("sgd: weight_decay must be non-negative");
    }
    if (epochs < 1) {
        throw ConfigError("sgd: epochs must be positive");
    }
    if (batch_size < 1) {
        throw ConfigError("sgd: batch_size must be positive");
    }
}

void sgd_step(std::span<Tensor* const> params, std::span<const Tensor> grads,
              const SgdConfig& config, SgdState& state) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameters but " +
                         std::to_string(grads.size()) + " gradients");
    }
    if (state.velocity.empty()) {
        state.velocity.reserve(params.size());
        for (const Tensor* p : params) {
            state.velocity.emplace_back(p->shape());
        }
    }
    if (state.velocity.size() != params.size()) {
        throw ShapeError("sgd_step: velocity state holds " +
                         std::to_string(state.velocity.size()) + " buffers for " +
                         std::to_string(params.size()) + " parameters");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        Tensor& v = state.velocity[i];
        require_shape(grads[i], p.shape(), "sgd_step gradient");
        require_shape(v, p.shape(), "sgd_step velocity");
        for (std::size_t k = 0; k < p.size(); ++k) {
            v[k] = config.momentum * v[k] -
                   config.learning_rate * (grads[i][k] + config.weight_decay * p[k]);
            p[k] += v[k];
        }
    }
}

void glorot_uniform(Tensor& t, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (auto& v : t.data()) {
        v = rng.uniform(-a, a);
    }
}

}  // namespace dwnet
