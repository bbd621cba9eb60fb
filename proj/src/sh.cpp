// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/sh.hpp>

#include <array>
#include <cmath>
#include <string>

namespace layersplat {

namespace {

constexpr double kShC2a = 1.0925484305920792; // xy, yz, xz
constexpr double kShC2b = 0.31539156525252005; // 3z^2 - 1
constexpr double kShC2c = 0.5462742152960396; // x^2 - y^2

void
check_order(int order) {
    if (order < 0 || order > kMaxShOrder) {
        throw ShapeError("SH order " + std::to_string(order) + " outside [0, " +
                         std::to_string(kMaxShOrder) + "]");
    }
}

// Basis values and their gradients with respect to the direction (row-major B x 3).
void
eval_basis(int order, double x, double y, double z, double *basis, double *jac) {
    basis[0] = kShC0;
    if (jac) {
        jac[0] = jac[1] = jac[2] = 0.0;
    }
    if (order < 1) {
        return;
    }
    basis[1] = kShC1 * y;
    basis[2] = kShC1 * z;
    basis[3] = kShC1 * x;
    if (jac) {
        const double rows[3][3] = {{0, kShC1, 0}, {0, 0, kShC1}, {kShC1, 0, 0}};
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < 3; ++c) jac[(1 + r) * 3 + c] = rows[r][c];
        }
    }
    if (order < 2) {
        return;
    }
    basis[4] = kShC2a * x * y;
    basis[5] = kShC2a * y * z;
    basis[6] = kShC2b * (3.0 * z * z - 1.0);
    basis[7] = kShC2a * x * z;
    basis[8] = kShC2c * (x * x - y * y);
    if (jac) {
        const double rows[5][3] = {{kShC2a * y, kShC2a * x, 0},
                                   {0, kShC2a * z, kShC2a * y},
                                   {0, 0, 6.0 * kShC2b * z},
                                   {kShC2a * z, 0, kShC2a * x},
                                   {2.0 * kShC2c * x, -2.0 * kShC2c * y, 0}};
        for (int r = 0; r < 5; ++r) {
            for (int c = 0; c < 3; ++c) jac[(4 + r) * 3 + c] = rows[r][c];
        }
    }
}

} // namespace

void
ShBlock::validate() const {
    check_order(order);
    if (coeffs.size() != 3 * sh_basis_count(order)) {
        throw ShapeError("SH block of order " + std::to_string(order) + " needs " +
                         std::to_string(3 * sh_basis_count(order)) + " coefficients, got " +
                         std::to_string(coeffs.size()));
    }
}

std::vector<double>
sh_basis(int order, const Eigen::Vector3d &nu) {
    check_order(order);
    if (std::abs(nu.norm() - 1.0) > 1e-6) {
        throw ShapeError("SH direction must be unit length (norm " + std::to_string(nu.norm()) +
                         ")");
    }
    std::vector<double> basis(sh_basis_count(order));
    eval_basis(order, nu.x(), nu.y(), nu.z(), basis.data(), nullptr);
    return basis;
}

Eigen::Vector3d
sh_color(const ShBlock &block, const Eigen::Vector3d &nu) {
    block.validate();
    const auto basis = sh_basis(block.order, nu);
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    for (std::size_t b = 0; b < basis.size(); ++b) {
        for (int c = 0; c < 3; ++c) {
            rgb[c] += block.coeffs[3 * b + c] * basis[b];
        }
    }
    return rgb;
}

Tensor
sh_color(const Tensor &coeffs, const Tensor &dirs, int order) {
    check_order(order);
    const std::size_t nb = sh_basis_count(order);
    if (coeffs.rank() != 3 || coeffs.shape()[1] != nb || coeffs.shape()[2] != 3 ||
        dirs.rank() != 2 || dirs.shape()[1] != 3 || dirs.shape()[0] != coeffs.shape()[0]) {
        throw ShapeError("sh_color: coeffs " + shape_str(coeffs.shape()) + " and dirs " +
                         shape_str(dirs.shape()) + " do not match order " + std::to_string(order));
    }
    const std::size_t n = dirs.shape()[0];
    const auto cv = coeffs.data();
    const auto dv = dirs.data();
    std::vector<double> out(n * 3, 0.0);
    std::array<double, 9> basis{};
    for (std::size_t i = 0; i < n; ++i) {
        eval_basis(order, dv[3 * i], dv[3 * i + 1], dv[3 * i + 2], basis.data(), nullptr);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t c = 0; c < 3; ++c) {
                out[3 * i + c] += cv[(i * nb + b) * 3 + c] * basis[b];
            }
        }
    }
    BackwardFn fn = [coeffs, dirs, order, nb, n](std::span<const double> g,
                                                 std::span<std::vector<double> *> gin) {
        const auto cv = coeffs.data();
        const auto dv = dirs.data();
        std::array<double, 9> basis{};
        std::array<double, 27> jac{};
        for (std::size_t i = 0; i < n; ++i) {
            eval_basis(order, dv[3 * i], dv[3 * i + 1], dv[3 * i + 2], basis.data(), jac.data());
            const double *gi = g.data() + 3 * i;
            if (gin[0]) {
                auto &gc = *gin[0];
                for (std::size_t b = 0; b < nb; ++b) {
                    for (std::size_t c = 0; c < 3; ++c) gc[(i * nb + b) * 3 + c] += gi[c] * basis[b];
                }
            }
            if (gin[1]) {
                auto &gd = *gin[1];
                for (std::size_t b = 0; b < nb; ++b) {
                    double w = 0.0;
                    for (std::size_t c = 0; c < 3; ++c) w += gi[c] * cv[(i * nb + b) * 3 + c];
                    for (std::size_t k = 0; k < 3; ++k) gd[3 * i + k] += w * jac[b * 3 + k];
                }
            }
        }
    };
    return make_result({coeffs, dirs}, {n, 3}, std::move(out), std::move(fn));
}

} // namespace layersplat
