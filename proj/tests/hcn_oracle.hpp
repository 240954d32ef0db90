#pragma once

#include <algorithm>

#include "dwnet/hcn.hpp"

namespace testing {

using namespace dwnet;

inline Tensor swap_axes(const Tensor& x) {
    const std::size_t n = x.dim(0), c = x.dim(1), t = x.dim(2), k = x.dim(3);
    Tensor y({n, k, t, c});
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < t; ++j)
                for (std::size_t q = 0; q < k; ++q) y.at(b, q, j, i) = x.at(b, i, j, q);
    return y;
}

inline Tensor stream_oracle(const HcnStream& s, const Tensor& x) {
    Tensor h = relu(conv2d_forward(x, s.conv1));
    h = conv2d_forward(h, s.conv2);
    h = swap_axes(h);
    h = conv2d_forward(h, s.conv3);
    h = relu(conv2d_forward(h, s.conv4));
    return maxpool2d(h).output;
}

inline Tensor person_slice(const Tensor& x, std::size_t p) {
    const std::size_t per = x.size() / x.dim(0);
    std::vector<double> v(x.values().begin() + static_cast<long>(p * per),
                          x.values().begin() + static_cast<long>((p + 1) * per));
    return Tensor({1, x.dim(1), x.dim(2), x.dim(3)}, std::move(v));
}

struct OracleOut {
    Tensor fc6;
    Tensor logits;
};

/// Layer-by-layer composition from tensor-nn primitives, inference mode.
inline OracleOut hcn_oracle(const HcnModel& m, const ClipTensors& clip) {
    Tensor fused;
    for (std::size_t p = 0; p < m.config.persons; ++p) {
        const Tensor a = stream_oracle(m.trunk.position, person_slice(clip.position, p));
        const Tensor b = stream_oracle(m.trunk.motion, person_slice(clip.motion, p));
        std::vector<double> cat(a.values());
        cat.insert(cat.end(), b.values().begin(), b.values().end());
        const Tensor joined({1, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)}, std::move(cat));
        const Tensor h = maxpool2d(relu(conv2d_forward(joined, m.trunk.conv5))).output;
        if (p == 0) {
            fused = h;
        } else {
            for (std::size_t i = 0; i < h.size(); ++i) fused[i] = std::max(fused[i], h[i]);
        }
    }
    const Tensor flat = fused.reshaped({1, fused.size()});
    const Tensor z = relu(dense_forward(flat, m.trunk.fc6));
    return {z, dense_forward(z, m.fc7)};
}

}  // namespace testing
