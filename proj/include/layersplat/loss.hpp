// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/gaussians.hpp>
#include <layersplat/metrics.hpp>
#include <layersplat/tensor.hpp>

#include <string>
#include <utility>
#include <vector>

namespace layersplat {

struct LossConfig {
    double l1_weight = 0.85;
    double ssim_weight = 0.15;
    /// Weight of the mean squared position offset.
    double lambda1 = 1e-2;
    /// Weight of the hinge penalty on scales above scale_threshold.
    double lambda2 = 1e-2;
    double scale_threshold = 0.3;
    double normal_blend_weight = 0.01;

    /// Throws ShapeError on a negative weight.
    void validate() const;
};

/// Weighted loss terms in a fixed order ("l1", "ssim", "offset", "scale", "normal"); the total
/// is their sum.
struct LossBreakdown {
    Tensor total;
    std::vector<std::pair<std::string, double>> terms;
};

/// mean(1 - |<a_k, n>|) where a_k is the row of R(q) belonging to the smallest scale, i.e. the
/// covariance's shortest principal axis. Differentiable in rotation and normal; the choice of
/// axis is held fixed.
Tensor normal_alignment(const Tensor &scale, const Tensor &rotation, const Tensor &normal);

/// Photometric terms of one rendered/target pair: l1_weight * mean|r - t| and
/// ssim_weight * (1 - SSIM). Throws ShapeError on an extent mismatch.
std::pair<Tensor, Tensor> photometric_terms(const Tensor &rendered, const Tensor &target,
                                            const LossConfig &config);

/// Full objective for one or more rendered/target pairs; photometric terms are averaged over
/// the pairs.
LossBreakdown loss(const std::vector<Tensor> &rendered, const std::vector<Tensor> &targets,
                   const GaussianLayerStack &stack, const LossConfig &config);

inline LossBreakdown
loss(const Tensor &rendered, const Tensor &target, const GaussianLayerStack &stack,
     const LossConfig &config) {
    return loss(std::vector<Tensor>{rendered}, std::vector<Tensor>{target}, stack, config);
}

} // namespace layersplat
