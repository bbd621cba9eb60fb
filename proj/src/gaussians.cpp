// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/detail/quaternion.hpp>
#include <layersplat/errors.hpp>
#include <layersplat/gaussians.hpp>
#include <layersplat/ops.hpp>

#include <Eigen/LU>

#include <cmath>
#include <string>

namespace layersplat {

namespace {

void
expect_shape(const Tensor &t, const Shape &shape, const char *what) {
    if (t.shape() != shape) {
        throw ShapeError(std::string(what) + " has shape " + shape_str(t.shape()) + ", expected " +
                         shape_str(shape));
    }
}

} // namespace

void
RawParamMaps::validate(int sh_order) const {
    if (opacity.rank() != 3) {
        throw ShapeError("raw opacity must be [K,H,W], got " + shape_str(opacity.shape()));
    }
    const std::size_t k = layers();
    const std::size_t h = height();
    const std::size_t w = width();
    expect_shape(delta_depth, {k, h, w}, "raw delta_depth");
    expect_shape(offset, {k, h, w, 3}, "raw offset");
    expect_shape(scale, {k, h, w, 3}, "raw scale");
    expect_shape(rotation, {k, h, w, 4}, "raw rotation");
    expect_shape(sh, {k, h, w, sh_basis_count(sh_order), 3}, "raw sh");
}

DecodedGaussian
GaussianLayerStack::gaussian(std::size_t i) const {
    DecodedGaussian g;
    g.opacity = opacity[i];
    g.depth = depth[i];
    for (int a = 0; a < 3; ++a) {
        g.mean[a] = mean[3 * i + a];
        g.offset[a] = offset[3 * i + a];
        g.scale[a] = scale[3 * i + a];
        g.normal[a] = normal[3 * i + a];
        for (int b = 0; b < 3; ++b) {
            g.covariance(a, b) = covariance[9 * i + 3 * a + b];
        }
    }
    g.rotation = Eigen::Quaterniond(rotation[4 * i], rotation[4 * i + 1], rotation[4 * i + 2],
                                    rotation[4 * i + 3]);
    const std::size_t nb = sh_basis_count(sh_order);
    g.sh.order = sh_order;
    g.sh.coeffs.assign(sh.data().begin() + static_cast<std::ptrdiff_t>(i * nb * 3),
                       sh.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * nb * 3));
    return g;
}

GaussianLayerStack
GaussianLayerStack::from_gaussians(const std::vector<DecodedGaussian> &gaussians, int sh_order) {
    const std::size_t n = gaussians.size();
    const std::size_t nb = sh_basis_count(sh_order);
    std::vector<double> op(n), dep(n), off(3 * n), mu(3 * n), sc(3 * n), rot(4 * n), nrm(3 * n),
        shv;
    shv.reserve(n * nb * 3);
    for (std::size_t i = 0; i < n; ++i) {
        const auto &g = gaussians[i];
        g.sh.validate();
        if (g.sh.order != sh_order) {
            throw ShapeError("from_gaussians: mixed SH orders");
        }
        op[i] = g.opacity;
        dep[i] = g.depth;
        for (int a = 0; a < 3; ++a) {
            off[3 * i + a] = g.offset[a];
            mu[3 * i + a] = g.mean[a];
            sc[3 * i + a] = g.scale[a];
            nrm[3 * i + a] = g.normal[a];
        }
        const Eigen::Quaterniond q = g.rotation.normalized();
        rot[4 * i] = q.w();
        rot[4 * i + 1] = q.x();
        rot[4 * i + 2] = q.y();
        rot[4 * i + 3] = q.z();
        shv.insert(shv.end(), g.sh.coeffs.begin(), g.sh.coeffs.end());
    }
    GaussianLayerStack s;
    s.opacity = Tensor({n}, std::move(op));
    s.depth = Tensor({n}, std::move(dep));
    s.offset = Tensor({n, 3}, std::move(off));
    s.mean = Tensor({n, 3}, std::move(mu));
    s.scale = Tensor({n, 3}, std::move(sc));
    s.rotation = Tensor({n, 4}, std::move(rot));
    s.covariance = build_covariance(s.scale, s.rotation);
    s.normal = Tensor({n, 3}, std::move(nrm));
    s.sh = Tensor({n, nb, 3}, std::move(shv));
    s.k_layers = 1;
    s.sh_order = sh_order;
    s.height = 1;
    s.width = n;
    return s;
}

GaussianLayerStack
decode_activations(const RawParamMaps &raw, const Tensor &depth_map, const Tensor &normal_map,
                   const Intrinsics &intr, const DecodeConfig &config) {
    raw.validate(config.sh_order);
    const std::size_t k = raw.layers();
    const std::size_t h = raw.height();
    const std::size_t w = raw.width();
    if (k != static_cast<std::size_t>(config.k_layers)) {
        throw ShapeError("raw maps hold " + std::to_string(k) + " layers, config expects " +
                         std::to_string(config.k_layers));
    }
    if (h != static_cast<std::size_t>(intr.height) || w != static_cast<std::size_t>(intr.width)) {
        throw ShapeError("raw maps are " + std::to_string(h) + "x" + std::to_string(w) +
                         " but the camera is " + std::to_string(intr.height) + "x" +
                         std::to_string(intr.width));
    }
    expect_shape(depth_map, {h, w}, "depth map");
    expect_shape(normal_map, {h, w, 3}, "normal map");

    const auto dv = depth_map.data();
    const auto nv = normal_map.data();
    for (std::size_t p = 0; p < h * w; ++p) {
        if (!(dv[p] > 0.0)) {
            throw DataError("depth map is not positive at pixel (row " + std::to_string(p / w) +
                            ", col " + std::to_string(p % w) + "): " + std::to_string(dv[p]));
        }
        const double len = std::sqrt(nv[3 * p] * nv[3 * p] + nv[3 * p + 1] * nv[3 * p + 1] +
                                     nv[3 * p + 2] * nv[3 * p + 2]);
        if (std::abs(len - 1.0) > 1e-6) {
            throw DataError("normal map is not unit length at pixel (row " +
                            std::to_string(p / w) + ", col " + std::to_string(p % w) + ")");
        }
    }
    const auto rv = raw.rotation.data();
    for (std::size_t i = 0; i < k * h * w; ++i) {
        if (rv[4 * i] == 0.0 && rv[4 * i + 1] == 0.0 && rv[4 * i + 2] == 0.0 &&
            rv[4 * i + 3] == 0.0) {
            throw ShapeError("raw rotation " + std::to_string(i) + " is the zero quaternion");
        }
    }

    const std::size_t n = k * h * w;
    GaussianLayerStack stack;
    stack.intr = intr;
    stack.k_layers = config.k_layers;
    stack.sh_order = config.sh_order;
    stack.height = h;
    stack.width = w;

    stack.opacity = reshape(sigmoid(raw.opacity) * (1.0 - config.opacity_eps), {n});

    // d_1 = D(u); d_i = d_{i-1} + softplus(raw_i) + eps for i >= 2.
    std::vector<Tensor> layer_depths;
    Tensor current = depth_map;
    layer_depths.push_back(reshape(current, {1, h, w}));
    for (std::size_t i = 1; i < k; ++i) {
        const Tensor gap = softplus(reshape(slice(raw.delta_depth, 0, i, i + 1), {h, w})) +
                           config.depth_eps;
        current = current + gap;
        layer_depths.push_back(reshape(current, {1, h, w}));
    }
    const Tensor depth = concat(layer_depths, 0); // [K, H, W]
    stack.depth = reshape(depth, {n});

    const Tensor cap = reshape(depth, {k, h, w, 1}) * config.offset_cap;
    const Tensor offset = tanh(raw.offset) * cap;
    stack.offset = reshape(offset, {n, 3});
    stack.mean = reshape(unproject(intr, depth, offset), {n, 3});

    stack.scale = reshape(
        exp(clamp(raw.scale, config.raw_scale_min, config.raw_scale_max)) * config.scale_unit,
        {n, 3});

    const Tensor q = reshape(raw.rotation, {n, 4});
    stack.rotation = q / sqrt(sum(q * q, 1, true));
    stack.covariance = build_covariance(stack.scale, stack.rotation);

    const Tensor normals = reshape(normal_map, {1, h, w, 3});
    stack.normal = reshape(concat(std::vector<Tensor>(k, normals), 0), {n, 3});

    stack.sh = reshape(raw.sh, {n, sh_basis_count(config.sh_order), 3});
    return stack;
}

Eigen::Matrix3d
build_covariance(const Eigen::Vector3d &s, const Eigen::Quaterniond &theta) {
    const double norm = theta.norm();
    if (!(norm > 0.0)) {
        throw ShapeError("build_covariance: zero-norm quaternion");
    }
    const Eigen::Quaterniond q(theta.w() / norm, theta.x() / norm, theta.y() / norm,
                               theta.z() / norm);
    const Eigen::Matrix3d r = detail::quat_to_rotation(q.w(), q.x(), q.y(), q.z());
    const Eigen::Matrix3d cov = r.transpose() * s.asDiagonal() * r;
    return 0.5 * (cov + cov.transpose());
}

Tensor
build_covariance(const Tensor &scales, const Tensor &quats) {
    if (scales.rank() != 2 || scales.shape()[1] != 3 || quats.rank() != 2 ||
        quats.shape()[1] != 4 || quats.shape()[0] != scales.shape()[0]) {
        throw ShapeError("build_covariance: scales " + shape_str(scales.shape()) + " and quats " +
                         shape_str(quats.shape()) + " must be [N,3] and [N,4]");
    }
    const std::size_t n = scales.shape()[0];
    const auto sv = scales.data();
    const auto qv = quats.data();
    std::vector<double> out(9 * n);
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d s(sv[3 * i], sv[3 * i + 1], sv[3 * i + 2]);
        const Eigen::Quaterniond q(qv[4 * i], qv[4 * i + 1], qv[4 * i + 2], qv[4 * i + 3]);
        const Eigen::Matrix3d cov = build_covariance(s, q);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) out[9 * i + 3 * a + b] = cov(a, b);
        }
    }
    BackwardFn fn = [scales, quats, n](std::span<const double> g,
                                       std::span<std::vector<double> *> gin) {
        const auto sv = scales.data();
        const auto qv = quats.data();
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::Matrix3d gm;
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) gm(a, b) = g[9 * i + 3 * a + b];
            }
            const Eigen::Matrix3d gs = 0.5 * (gm + gm.transpose());
            const Eigen::Vector4d q(qv[4 * i], qv[4 * i + 1], qv[4 * i + 2], qv[4 * i + 3]);
            const Eigen::Vector4d qn = q / q.norm();
            const Eigen::Matrix3d r = detail::quat_to_rotation(qn[0], qn[1], qn[2], qn[3]);
            const Eigen::Vector3d s(sv[3 * i], sv[3 * i + 1], sv[3 * i + 2]);
            if (gin[0]) {
                const Eigen::Matrix3d rgr = r * gs * r.transpose();
                for (int a = 0; a < 3; ++a) (*gin[0])[3 * i + a] += rgr(a, a);
            }
            if (gin[1]) {
                const Eigen::Matrix3d gr = 2.0 * s.asDiagonal() * r * gs;
                const Eigen::Vector4d gqn =
                    detail::quat_to_rotation_vjp(qn[0], qn[1], qn[2], qn[3], gr);
                const Eigen::Vector4d gq = detail::normalize_vjp(q, gqn);
                for (int a = 0; a < 4; ++a) (*gin[1])[4 * i + a] += gq[a];
            }
        }
    };
    return make_result({scales, quats}, {n, 3, 3}, std::move(out), std::move(fn));
}

double
eval_gaussian(const DecodedGaussian &g, const Eigen::Vector3d &x) {
    const Eigen::Vector3d d = x - g.mean;
    const double m2 = d.dot(g.covariance.inverse() * d);
    return std::exp(-0.5 * m2);
}

double
field_opacity(const GaussianLayerStack &stack, const Eigen::Vector3d &x) {
    double total = 0.0;
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const DecodedGaussian g = stack.gaussian(i);
        total += g.opacity * eval_gaussian(g, x);
    }
    return total;
}

Eigen::Vector3d
field_radiance(const GaussianLayerStack &stack, const Eigen::Vector3d &x, const Eigen::Vector3d &nu,
               const Eigen::Vector3d &background) {
    double weight = 0.0;
    Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < stack.size(); ++i) {
        const DecodedGaussian g = stack.gaussian(i);
        const double w = g.opacity * eval_gaussian(g, x);
        rgb += w * sh_color(g.sh, nu);
        weight += w;
    }
    if (!(weight > 0.0)) {
        return background;
    }
    return rgb / weight;
}

} // namespace layersplat
