// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/camera.hpp>
#include <layersplat/gaussians.hpp>
#include <layersplat/tensor.hpp>

#include <Eigen/Core>

#include <optional>

namespace layersplat {

/// Output image description and compositing constants.
struct RenderTarget {
    int width = 64;
    int height = 64;
    Eigen::Vector3d background = Eigen::Vector3d::Zero();
    int tile_size = 16;
    /// Added to both diagonal entries of every screen-space covariance, (0.3 px)^2.
    double blur_floor = 0.09;
    double alpha_max = 1.0 - 1e-4;
    /// Compositing of a pixel stops once its transmittance drops below this value.
    double min_transmittance = 1e-5;
    /// Footprints are truncated at this many standard deviations (Mahalanobis radius).
    double footprint_sigmas = 3.0;

    static RenderTarget matching(const Intrinsics &intr) {
        RenderTarget t;
        t.width = intr.width;
        t.height = intr.height;
        return t;
    }

    void validate() const;
};

struct ProjectedGaussian {
    Eigen::Vector2d center_px = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    double view_z = 0.0;
    double opacity = 0.0;
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    double radius_px = 0.0;
};

/// Screen-space footprint of one Gaussian: cov2d = J W Sigma W^T J^T + blur floor, with J the
/// perspective Jacobian at the view-space mean. Empty when behind the near plane or when the
/// footprint lies entirely outside the image.
std::optional<ProjectedGaussian> project_gaussian(const DecodedGaussian &g, const Pose &pose,
                                                  const Intrinsics &intr,
                                                  const RenderTarget &target);

/// Everything the rasterizer consumes, as parallel tensors over N Gaussians.
struct SplatScene {
    Tensor mean;       // [N, 3]
    Tensor covariance; // [N, 3, 3]
    Tensor opacity;    // [N]
    Tensor sh;         // [N, (L+1)^2, 3]
    int sh_order = 0;

    static SplatScene from_stack(const GaussianLayerStack &stack);
    std::size_t size() const { return opacity.numel(); }
};

struct RenderOutput {
    Tensor image; // [H, W, 3], linear RGB, unclamped
    Tensor alpha; // [H, W], accumulated opacity 1 - T
};

/// Unit view directions from the camera center to every mean, [N, 3].
Tensor view_directions(const Tensor &mean, const Pose &pose);

/// Depth-sorted front-to-back alpha compositing over screen tiles. Differentiable in means,
/// covariances, opacities and SH coefficients (the sort order is held fixed).
RenderOutput render(const SplatScene &scene, const Pose &pose, const Intrinsics &intr,
                    const RenderTarget &target);
RenderOutput render(const GaussianLayerStack &stack, const Pose &pose, const Intrinsics &intr,
                    const RenderTarget &target);

/// Per-pixel loop over every projected Gaussian with no tiling and no early termination.
/// Not differentiable; used as the reference for `render`.
RenderOutput render_reference(const SplatScene &scene, const Pose &pose, const Intrinsics &intr,
                              const RenderTarget &target);
RenderOutput render_reference(const GaussianLayerStack &stack, const Pose &pose,
                              const Intrinsics &intr, const RenderTarget &target);

} // namespace layersplat
