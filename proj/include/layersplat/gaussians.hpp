// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/camera.hpp>
#include <layersplat/sh.hpp>
#include <layersplat/tensor.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>
#include <vector>

namespace layersplat {

/// Activation constants applied by decode_activations.
struct DecodeConfig {
    int k_layers = 2;
    int sh_order = 1;
    /// sigma = sigmoid(raw) * (1 - opacity_eps), so sigma < 1.
    double opacity_eps = 1e-6;
    /// Minimum depth gap between consecutive layers.
    double depth_eps = 1e-4;
    /// |offset| per axis is at most offset_cap * d_i.
    double offset_cap = 0.05;
    double scale_unit = 1.0;
    double raw_scale_min = -10.0;
    double raw_scale_max = 3.0;
};

/// Pre-activation parameter maps for K layers over an H x W image.
struct RawParamMaps {
    Tensor opacity;     // [K, H, W]
    Tensor delta_depth; // [K, H, W]; layer 0 is ignored (its offset is fixed to 0)
    Tensor offset;      // [K, H, W, 3]
    Tensor scale;       // [K, H, W, 3]
    Tensor rotation;    // [K, H, W, 4], (w, x, y, z)
    Tensor sh;          // [K, H, W, (L+1)^2, 3]

    std::size_t layers() const { return opacity.rank() == 3 ? opacity.shape()[0] : 0; }
    std::size_t height() const { return opacity.rank() == 3 ? opacity.shape()[1] : 0; }
    std::size_t width() const { return opacity.rank() == 3 ? opacity.shape()[2] : 0; }

    /// Throws ShapeError when any map disagrees with the [K, H, W] extents of `opacity`.
    void validate(int sh_order) const;
};

/// One decoded Gaussian in world (input-camera) coordinates.
struct DecodedGaussian {
    double opacity = 0.0;
    double depth = 0.0;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
    Eigen::Vector3d scale = Eigen::Vector3d::Ones();
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
    Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
    ShBlock sh;
};

/// Decoded Gaussians as parallel tensors, N = K * H * W in (layer, row, column) order.
struct GaussianLayerStack {
    Tensor opacity;    // [N]
    Tensor depth;      // [N]
    Tensor offset;     // [N, 3]
    Tensor mean;       // [N, 3]
    Tensor scale;      // [N, 3]
    Tensor rotation;   // [N, 4]
    Tensor covariance; // [N, 3, 3]
    Tensor normal;     // [N, 3]
    Tensor sh;         // [N, (L+1)^2, 3]
    Intrinsics intr;
    int k_layers = 0;
    int sh_order = 0;
    std::size_t height = 0;
    std::size_t width = 0;

    std::size_t size() const { return opacity.numel(); }
    DecodedGaussian gaussian(std::size_t i) const;

    /// Packs explicit Gaussians (one layer, width = count) into a stack. Covariance is rebuilt
    /// from scale and rotation.
    static GaussianLayerStack from_gaussians(const std::vector<DecodedGaussian> &gaussians,
                                             int sh_order);
};

/// Activates raw parameters into layered Gaussians along the input camera's pixel rays:
/// opacity, chained depths d_i = D(u) + sum_{j<=i} delta_j, capped offsets, means, scales,
/// unit rotations, covariances, normals and color. Throws DataError on a nonpositive depth or
/// non-unit normal (naming the pixel).
GaussianLayerStack decode_activations(const RawParamMaps &raw, const Tensor &depth_map,
                                      const Tensor &normal_map, const Intrinsics &intr,
                                      const DecodeConfig &config = {});

/// Sigma = R(theta)^T diag(s) R(theta), symmetrized. Throws ShapeError on a zero quaternion.
Eigen::Matrix3d build_covariance(const Eigen::Vector3d &s, const Eigen::Quaterniond &theta);

/// Batched, differentiable: scales [N, 3], quats [N, 4] (normalized internally) -> [N, 3, 3].
Tensor build_covariance(const Tensor &scales, const Tensor &quats);

/// Unnormalized Gaussian exp(-1/2 (x - mu)^T Sigma^-1 (x - mu)).
double eval_gaussian(const DecodedGaussian &g, const Eigen::Vector3d &x);

/// sum_i sigma_i g_i(x) over every Gaussian of the stack (not clamped).
double field_opacity(const GaussianLayerStack &stack, const Eigen::Vector3d &x);

/// Opacity-weighted mean of per-Gaussian SH colors at direction nu; `background` where the
/// opacity field vanishes.
Eigen::Vector3d field_radiance(const GaussianLayerStack &stack, const Eigen::Vector3d &x,
                               const Eigen::Vector3d &nu,
                               const Eigen::Vector3d &background = Eigen::Vector3d::Zero());

} // namespace layersplat
