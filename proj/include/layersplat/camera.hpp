// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <optional>

namespace layersplat {

/// Points closer than this (view-space z, scene units) are culled by projection.
inline constexpr double kNearClip = 1e-4;

/// Pinhole intrinsics with a single focal length, K = [[f,0,cx],[0,f,cy],[0,0,1]].
/// Pixel (i, j) has its center at image coordinate (i, j).
struct Intrinsics {
    double f = 1.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 1;
    int height = 1;

    /// Principal point at the image center, (width-1)/2, (height-1)/2.
    static Intrinsics centered(double f, int width, int height);

    /// Throws DataError unless f > 0, 0 <= cx < width, 0 <= cy < height.
    void validate() const;

    bool operator==(const Intrinsics &) const = default;
};

/// World-to-camera rigid transform: x_view = R x + t.
struct Pose {
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static Pose identity() { return {}; }
    /// Pose of a camera placed at `center` with camera-to-world rotation `orientation`.
    static Pose looking_from(const Eigen::Matrix3d &orientation, const Eigen::Vector3d &center);

    Eigen::Matrix3d rotation_matrix() const { return rotation.toRotationMatrix(); }
    /// Camera center in world coordinates, -R^T t.
    Eigen::Vector3d camera_center() const;

    /// Throws DataError when the quaternion norm deviates from 1 by more than 1e-9.
    void validate() const;
};

/// Homogeneous pixel coordinate relative to the principal point; the last entry is exactly 1.
struct PixelRay {
    double ux = 0.0;
    double uy = 0.0;

    static PixelRay from_pixel(const Intrinsics &intr, double px, double py) {
        return {px - intr.cx, py - intr.cy};
    }
    Eigen::Vector3d homogeneous() const { return {ux, uy, 1.0}; }
};

/// (ux d / f, uy d / f, d) + delta. Throws DataError when depth <= 0.
Eigen::Vector3d unproject(const Intrinsics &intr, const PixelRay &u, double depth,
                          const Eigen::Vector3d &delta = Eigen::Vector3d::Zero());

Eigen::Vector3d world_to_view(const Pose &pose, const Eigen::Vector3d &x);
Eigen::Vector3d view_to_world(const Pose &pose, const Eigen::Vector3d &x);

struct Projection {
    Eigen::Vector2d pixel;
    double depth = 0.0;
};

/// Perspective projection of a view-space point; empty when z <= near_clip.
std::optional<Projection> project(const Intrinsics &intr, const Eigen::Vector3d &x_view,
                                  double near_clip = kNearClip);

/// Per-pixel ray directions scaled to unit depth, (ux/f, uy/f, 1); shape [H, W, 3].
Tensor pixel_rays(const Intrinsics &intr);

/// Differentiable unprojection of a depth map. `depth` has shape [..., H, W] and `offset`
/// either [..., H, W, 3] or is omitted. Result has shape [..., H, W, 3].
Tensor unproject(const Intrinsics &intr, const Tensor &depth,
                 const std::optional<Tensor> &offset = std::nullopt);

} // namespace layersplat
