// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/detail/quaternion.hpp>
#include <layersplat/errors.hpp>
#include <layersplat/loss.hpp>
#include <layersplat/ops.hpp>

#include <cmath>

namespace layersplat {

void
LossConfig::validate() const {
    for (double v : {l1_weight, ssim_weight, lambda1, lambda2, normal_blend_weight}) {
        if (!(v >= 0.0)) {
            throw ShapeError("loss weights must be nonnegative");
        }
    }
}

Tensor
normal_alignment(const Tensor &scale, const Tensor &rotation, const Tensor &normal) {
    const std::size_t n = scale.rank() == 2 ? scale.shape()[0] : 0;
    if (scale.shape() != Shape{n, 3} || rotation.shape() != Shape{n, 4} || normal.shape() != Shape{n, 3}) {
        throw ShapeError("normal_alignment: scale " + shape_str(scale.shape()) + ", rotation " +
                         shape_str(rotation.shape()) + ", normal " + shape_str(normal.shape()));
    }
    if (n == 0) {
        return Tensor::scalar(0.0);
    }
    const auto sv = scale.data();
    const auto qv = rotation.data();
    const auto nv = normal.data();
    auto axis = std::make_shared<std::vector<int>>(n);
    auto sign = std::make_shared<std::vector<double>>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        int k = 0;
        for (int a = 1; a < 3; ++a) {
            if (sv[3 * i + a] < sv[3 * i + k]) k = a;
        }
        const Eigen::Matrix3d r = detail::quat_to_rotation(qv[4 * i], qv[4 * i + 1], qv[4 * i + 2], qv[4 * i + 3]);
        const double dot = r(k, 0) * nv[3 * i] + r(k, 1) * nv[3 * i + 1] + r(k, 2) * nv[3 * i + 2];
        (*axis)[i] = k;
        (*sign)[i] = dot > 0.0 ? 1.0 : (dot < 0.0 ? -1.0 : 0.0);
        total += 1.0 - std::abs(dot);
    }
    BackwardFn fn = [rotation, normal, axis, sign, n](std::span<const double> g,
                                                      std::span<std::vector<double> *> gin) {
        const auto qv = rotation.data();
        const auto nv = normal.data();
        const double scale = -g[0] / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const int k = (*axis)[i];
            const double c = scale * (*sign)[i];
            const Eigen::Matrix3d r = detail::quat_to_rotation(qv[4 * i], qv[4 * i + 1], qv[4 * i + 2], qv[4 * i + 3]);
            if (gin[1]) {
                Eigen::Matrix3d gr = Eigen::Matrix3d::Zero();
                for (int a = 0; a < 3; ++a) gr(k, a) = c * nv[3 * i + a];
                const Eigen::Vector4d gq = detail::quat_to_rotation_vjp(qv[4 * i], qv[4 * i + 1], qv[4 * i + 2], qv[4 * i + 3], gr);
                for (int a = 0; a < 4; ++a) (*gin[1])[4 * i + a] += gq[a];
            }
            if (gin[2]) {
                for (int a = 0; a < 3; ++a) (*gin[2])[3 * i + a] += c * r(k, a);
            }
        }
    };
    return make_result({scale, rotation, normal}, {}, {total / static_cast<double>(n)}, std::move(fn));
}

std::pair<Tensor, Tensor>
photometric_terms(const Tensor &rendered, const Tensor &target, const LossConfig &config) {
    if (rendered.shape() != target.shape()) {
        throw ShapeError("loss: rendered " + shape_str(rendered.shape()) + " and target " +
                         shape_str(target.shape()) + " differ in extent");
    }
    const Tensor l1 = mean(abs(rendered - target)) * config.l1_weight;
    const Tensor structural = (1.0 - ssim(rendered, target)) * config.ssim_weight;
    return {l1, structural};
}

LossBreakdown
loss(const std::vector<Tensor> &rendered, const std::vector<Tensor> &targets,
     const GaussianLayerStack &stack, const LossConfig &config) {
    config.validate();
    if (rendered.empty() || rendered.size() != targets.size()) {
        throw ShapeError("loss needs one target per rendered image");
    }
    Tensor l1 = Tensor::scalar(0.0);
    Tensor structural = Tensor::scalar(0.0);
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        auto [a, b] = photometric_terms(rendered[i], targets[i], config);
        l1 = l1 + a;
        structural = structural + b;
    }
    const double views = static_cast<double>(rendered.size());
    l1 = l1 / views;
    structural = structural / views;

    const double count = static_cast<double>(stack.size());
    const Tensor offset = sum(stack.offset * stack.offset) * (config.lambda1 / count);
    const Tensor scale =
        mean(relu(stack.scale - config.scale_threshold)) * config.lambda2;
    const Tensor normal =
        normal_alignment(stack.scale, stack.rotation, stack.normal) * config.normal_blend_weight;

    LossBreakdown out;
    out.total = l1 + structural + offset + scale + normal;
    out.terms = {{"l1", l1.item()},
                 {"ssim", structural.item()},
                 {"offset", offset.item()},
                 {"scale", scale.item()},
                 {"normal", normal.item()}};
    return out;
}

} // namespace layersplat
