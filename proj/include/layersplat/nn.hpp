// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <random>

namespace layersplat {

/// 2D cross-correlation of x [Cin, H, W] with w [Cout, Cin, k, k] plus bias b [Cout], zero
/// padding `pad` on every side. Output is [Cout, (H + 2 pad - k) / stride + 1, ...].
Tensor conv2d(const Tensor &x, const Tensor &w, const Tensor &b, std::size_t stride = 1,
              std::size_t pad = 0);

/// Nearest-neighbour 2x upsampling of [C, H, W] to [C, 2H, 2W].
Tensor upsample2x(const Tensor &x);

struct Conv2dLayer {
    Tensor weight; // [Cout, Cin, k, k]
    Tensor bias;   // [Cout]
    std::size_t stride = 1;
    std::size_t pad = 0;

    /// He-uniform weights scaled by `gain`, zero bias; pad keeps "same" extents at stride 1.
    static Conv2dLayer init(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
                            std::mt19937_64 &rng, double gain = 1.0);

    Tensor operator()(const Tensor &x) const { return conv2d(x, weight, bias, stride, pad); }
};

} // namespace layersplat
