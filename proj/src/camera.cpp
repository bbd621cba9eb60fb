// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/camera.hpp>
#include <layersplat/errors.hpp>
#include <layersplat/ops.hpp>

#include <cmath>
#include <string>

namespace layersplat {

Intrinsics
Intrinsics::centered(double f, int width, int height) {
    Intrinsics intr;
    intr.f = f;
    intr.width = width;
    intr.height = height;
    intr.cx = 0.5 * (width - 1);
    intr.cy = 0.5 * (height - 1);
    return intr;
}

void
Intrinsics::validate() const {
    if (!(f > 0.0)) {
        throw DataError("focal length must be positive, got " + std::to_string(f));
    }
    if (width <= 0 || height <= 0) {
        throw DataError("image extents must be positive");
    }
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        throw DataError("principal point (" + std::to_string(cx) + ", " + std::to_string(cy) +
                        ") lies outside the " + std::to_string(width) + "x" +
                        std::to_string(height) + " image");
    }
}

Pose
Pose::looking_from(const Eigen::Matrix3d &orientation, const Eigen::Vector3d &center) {
    Pose pose;
    const Eigen::Matrix3d world_to_cam = orientation.transpose();
    pose.rotation = Eigen::Quaterniond(world_to_cam).normalized();
    pose.translation = -(pose.rotation.toRotationMatrix() * center);
    return pose;
}

Eigen::Vector3d
Pose::camera_center() const {
    return -(rotation_matrix().transpose() * translation);
}

void
Pose::validate() const {
    if (std::abs(rotation.norm() - 1.0) > 1e-9) {
        throw DataError("pose quaternion is not unit length (norm " +
                        std::to_string(rotation.norm()) + ")");
    }
}

Eigen::Vector3d
unproject(const Intrinsics &intr, const PixelRay &u, double depth, const Eigen::Vector3d &delta) {
    if (!(depth > 0.0)) {
        throw DataError("unproject: depth must be positive, got " + std::to_string(depth));
    }
    return Eigen::Vector3d(u.ux * depth / intr.f, u.uy * depth / intr.f, depth) + delta;
}

Eigen::Vector3d
world_to_view(const Pose &pose, const Eigen::Vector3d &x) {
    return pose.rotation * x + pose.translation;
}

Eigen::Vector3d
view_to_world(const Pose &pose, const Eigen::Vector3d &x) {
    return pose.rotation.conjugate() * (x - pose.translation);
}

std::optional<Projection>
project(const Intrinsics &intr, const Eigen::Vector3d &x_view, double near_clip) {
    if (!(x_view.z() > near_clip)) {
        return std::nullopt;
    }
    Projection p;
    p.pixel = {intr.f * x_view.x() / x_view.z() + intr.cx, intr.f * x_view.y() / x_view.z() + intr.cy};
    p.depth = x_view.z();
    return p;
}

Tensor
pixel_rays(const Intrinsics &intr) {
    const auto h = static_cast<std::size_t>(intr.height);
    const auto w = static_cast<std::size_t>(intr.width);
    std::vector<double> rays(h * w * 3);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const auto u = PixelRay::from_pixel(intr, static_cast<double>(x), static_cast<double>(y));
            double *r = rays.data() + (y * w + x) * 3;
            r[0] = u.ux / intr.f;
            r[1] = u.uy / intr.f;
            r[2] = 1.0;
        }
    }
    return Tensor({h, w, 3}, std::move(rays));
}

Tensor
unproject(const Intrinsics &intr, const Tensor &depth, const std::optional<Tensor> &offset) {
    const auto h = static_cast<std::size_t>(intr.height);
    const auto w = static_cast<std::size_t>(intr.width);
    const Shape &ds = depth.shape();
    if (ds.size() < 2 || ds[ds.size() - 2] != h || ds[ds.size() - 1] != w) {
        throw ShapeError("unproject: depth shape " + shape_str(ds) + " does not end in [" +
                         std::to_string(h) + "," + std::to_string(w) + "]");
    }
    for (const double d : depth.data()) {
        if (!(d > 0.0)) {
            throw DataError("unproject: depth must be positive, got " + std::to_string(d));
        }
    }
    Shape column = ds;
    column.push_back(1);
    Tensor mean = reshape(depth, column) * pixel_rays(intr);
    if (offset) {
        mean = mean + *offset;
    }
    return mean;
}

} // namespace layersplat
