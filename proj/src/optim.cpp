// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/optim.hpp>

#include <cmath>
#include <stdexcept>

namespace layersplat {

const Tensor &
find_parameter(const ParameterSet &params, const std::string &name) {
    for (const auto &p : params) {
        if (p.name == name) return p.value;
    }
    throw std::out_of_range("no parameter named '" + name + "'");
}

void
Adam::step(ParameterSet &params, const std::vector<std::span<const double>> &grads) {
    if (grads.size() != params.size()) {
        throw ShapeError("adam: " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
    }
    if (m_.empty()) {
        for (const auto &p : params) {
            m_.emplace_back(p.value.numel(), 0.0);
            v_.emplace_back(p.value.numel(), 0.0);
        }
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (grads[i].size() != params[i].value.numel() || m_[i].size() != grads[i].size()) {
            throw ShapeError("adam: gradient of '" + params[i].name + "' has " +
                             std::to_string(grads[i].size()) + " entries, parameter has " +
                             std::to_string(params[i].value.numel()));
        }
        for (double g : grads[i]) {
            if (!std::isfinite(g)) {
                throw NumericalError("adam: non-finite gradient in '" + params[i].name + "'");
            }
        }
    }
    ++steps_;
    const double t = static_cast<double>(steps_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto cur = params[i].value.data();
        std::vector<double> next(cur.begin(), cur.end());
        auto &m = m_[i];
        auto &v = v_[i];
        for (std::size_t j = 0; j < next.size(); ++j) {
            const double g = grads[i][j];
            m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * g;
            v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * g * g;
            next[j] -= config_.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
        }
        params[i].value = Tensor(params[i].value.shape(), std::move(next));
    }
}

} // namespace layersplat
