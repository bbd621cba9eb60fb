// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

namespace layersplat {

inline constexpr double kPsnrCap = 99.0;

struct SsimConfig {
    std::size_t window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

/// 10 log10(1 / MSE), capped at kPsnrCap when MSE < 1e-10. Images are [H, W, C].
double psnr(const Tensor &a, const Tensor &b);

/// Mean single-scale SSIM over every valid (fully inside) Gaussian window and channel.
/// Differentiable in both images. Throws ShapeError when an image is smaller than the window.
Tensor ssim(const Tensor &a, const Tensor &b, const SsimConfig &config = {});

double ssim_value(const Tensor &a, const Tensor &b, const SsimConfig &config = {});

/// Normalized 1D Gaussian window used by ssim.
std::vector<double> gaussian_window(std::size_t size, double sigma);

} // namespace layersplat
