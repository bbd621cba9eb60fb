// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <Eigen/Core>

#include <random>

namespace layersplat {

/// Axis-aligned box mapped onto the unit cube.
struct Bounds {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Ones();

    /// Bounding box of `points` ([N, 3]) grown by `dilation` of its extent on every side.
    static Bounds around(const Tensor &points, double dilation = 0.1);

    void validate() const;
};

/// Three axis-aligned feature planes, stored as one [3, C, R, R] tensor in the order xy, xz, yz.
/// Within a plane, columns follow the first named axis and rows the second; node k sits at
/// normalized coordinate k / (R - 1).
struct TriPlaneField {
    Tensor planes;
    Bounds bounds;

    std::size_t channels() const { return planes.shape()[1]; }
    std::size_t resolution() const { return planes.shape()[2]; }

    /// Planes drawn from N(0, stddev^2).
    static TriPlaneField random(std::size_t channels, std::size_t resolution, const Bounds &bounds,
                                std::mt19937_64 &rng, double stddev = 0.01);

    void validate() const;
};

/// Affine map of scene points [N, 3] into the unit cube; points outside are clamped.
Tensor normalize_points(const Bounds &bounds, const Tensor &points);

/// Bilinear lookup of every point on each plane, concatenated xy | xz | yz -> [N, 3C].
/// Differentiable in the plane contents and in unclamped point coordinates.
Tensor query(const Tensor &planes, const Bounds &bounds, const Tensor &points);

inline Tensor
query(const TriPlaneField &field, const Tensor &points) {
    return query(field.planes, field.bounds, points);
}

} // namespace layersplat
