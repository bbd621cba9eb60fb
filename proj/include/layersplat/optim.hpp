// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace layersplat {

struct Parameter {
    std::string name;
    Tensor value;
};

/// Trainable tensors in a stable order.
using ParameterSet = std::vector<Parameter>;

/// Throws std::out_of_range when no parameter carries `name`.
const Tensor &find_parameter(const ParameterSet &params, const std::string &name);

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction and one (m, v) moment pair per parameter.
class Adam {
  public:
    explicit Adam(AdamConfig config = {}) : config_(config) {}

    /// Applies one update in place. `grads[i]` belongs to `params[i]`. Throws ShapeError on a
    /// size mismatch and NumericalError naming the parameter when a gradient is not finite;
    /// nothing is modified in either case.
    void step(ParameterSet &params, const std::vector<std::span<const double>> &grads);

    std::uint64_t steps() const { return steps_; }
    const AdamConfig &config() const { return config_; }

  private:
    AdamConfig config_;
    std::uint64_t steps_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

} // namespace layersplat
