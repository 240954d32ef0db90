#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "dwnet/nn.hpp"
#include "dwnet/random.hpp"
#include "dwnet/skeleton.hpp"
#include "dwnet/tensor.hpp"

namespace testing {

using dwnet::Rng;
using dwnet::Shape;
using dwnet::Tensor;

inline Tensor random_tensor(const Shape& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(shape);
    for (auto& v : t.data()) v = rng.uniform(lo, hi);
    return t;
}

/// Values bounded away from zero, so ReLU kinks stay out of finite-difference reach.
inline Tensor away_from_zero(const Shape& shape, Rng& rng) {
    Tensor t(shape);
    for (auto& v : t.data()) {
        const double mag = rng.uniform(0.05, 1.0);
        v = rng.uniform() < 0.5 ? -mag : mag;
    }
    return t;
}

inline double dot(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

/// Direct nested-loop cross-correlation.
inline Tensor naive_conv(const Tensor& x, const dwnet::ConvLayer& layer) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t co = layer.weights.dim(0), kh = layer.weights.dim(2), kw = layer.weights.dim(3);
    const auto [sh, sw] = layer.stride;
    const auto [ph, pw] = layer.padding;
    const std::size_t oh = (h + 2 * ph - kh) / sh + 1, ow = (w + 2 * pw - kw) / sw + 1;
    Tensor y({n, co, oh, ow});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t i = 0; i < oh; ++i)
                for (std::size_t j = 0; j < ow; ++j) {
                    double s = layer.bias[o];
                    for (std::size_t c = 0; c < ci; ++c)
                        for (std::size_t u = 0; u < kh; ++u)
                            for (std::size_t v = 0; v < kw; ++v) {
                                const long r = static_cast<long>(i * sh + u) - static_cast<long>(ph);
                                const long q = static_cast<long>(j * sw + v) - static_cast<long>(pw);
                                if (r < 0 || q < 0 || r >= static_cast<long>(h) || q >= static_cast<long>(w)) continue;
                                s += layer.weights.at(o, c, u, v) *
                                     x.at(b, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q));
                            }
                    y.at(b, o, i, j) = s;
                }
    return y;
}

inline double rel_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// Largest relative error between `analytic` and central differences of the
/// scalar `loss` with respect to `param` (perturbed in place, then restored).
inline double max_fd_error(Tensor& param, const Tensor& analytic, const std::function<double()>& loss,
                           double step = 1e-5) {
    double worst = 0.0;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double keep = param[i];
        param[i] = keep + step;
        const double up = loss();
        param[i] = keep - step;
        const double down = loss();
        param[i] = keep;
        worst = std::max(worst, rel_error(analytic[i], (up - down) / (2.0 * step)));
    }
    return worst;
}

/// F frames of a single moving person with K joints, label `label`.
inline dwnet::SkeletonSequence make_sequence(std::size_t frames, std::size_t persons, std::size_t joints,
                                             Rng& rng, int label = 0) {
    dwnet::SkeletonSequence s;
    s.id = "seq";
    s.label = label;
    s.frames = frames;
    s.persons = persons;
    s.joints = joints;
    s.coords.resize(frames * persons * joints * 3);
    for (auto& v : s.coords) v = rng.uniform(-1.0, 1.0);
    return s;
}

}  // namespace testing
