// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <Eigen/Core>

#include <vector>

namespace layersplat {

inline constexpr int kMaxShOrder = 2;

/// Y_00 of the orthonormal real basis, 1 / (2 sqrt(pi)).
inline constexpr double kShC0 = 0.28209479177387814;
inline constexpr double kShC1 = 0.4886025119029199;

/// Number of basis functions up to `order`, (L+1)^2.
constexpr std::size_t
sh_basis_count(int order) {
    return static_cast<std::size_t>((order + 1) * (order + 1));
}

/// View-dependent color coefficients. Basis-major layout: the three channels of basis
/// function b live at coeffs[3b .. 3b+2].
struct ShBlock {
    int order = 0;
    std::vector<double> coeffs;

    /// Throws ShapeError unless 0 <= order <= kMaxShOrder and coeffs.size() == 3 (L+1)^2.
    void validate() const;
};

/// Orthonormal real SH basis (no Condon-Shortley phase) up to `order`, ordered by band then
/// m = -l..l. Band 1 is C1 (y, z, x). Throws ShapeError when |nu| deviates from 1 by > 1e-6.
std::vector<double> sh_basis(int order, const Eigen::Vector3d &nu);

Eigen::Vector3d sh_color(const ShBlock &block, const Eigen::Vector3d &nu);

/// Differentiable batched color: coeffs [N, (L+1)^2, 3], dirs [N, 3] -> [N, 3]. Directions are
/// assumed unit length; the direction gradient is the gradient of the basis polynomials.
Tensor sh_color(const Tensor &coeffs, const Tensor &dirs, int order);

} // namespace layersplat
