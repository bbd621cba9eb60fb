// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>

namespace layersplat::detail {

/// Rotation matrix of a unit quaternion (w, x, y, z), polynomial form.
inline Eigen::Matrix3d
quat_to_rotation(double w, double x, double y, double z) {
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Pulls dL/dR back through quat_to_rotation; returns dL/d(w, x, y, z).
inline Eigen::Vector4d
quat_to_rotation_vjp(double w, double x, double y, double z, const Eigen::Matrix3d &g) {
    Eigen::Vector4d d;
    d[0] = 2 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    d[1] = 2 * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2 * x * g(1, 1) - w * g(1, 2) +
                z * g(2, 0) + w * g(2, 1) - 2 * x * g(2, 2));
    d[2] = 2 * (-2 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) -
                w * g(2, 0) + z * g(2, 1) - 2 * y * g(2, 2));
    d[3] = 2 * (-2 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2 * z * g(1, 1) +
                y * g(1, 2) + x * g(2, 0) + y * g(2, 1));
    return d;
}

/// Pulls dL/d(q/|q|) back to dL/dq.
inline Eigen::Vector4d
normalize_vjp(const Eigen::Vector4d &q, const Eigen::Vector4d &g) {
    const double n = q.norm();
    const Eigen::Vector4d qn = q / n;
    return (g - qn * qn.dot(g)) / n;
}

} // namespace layersplat::detail
