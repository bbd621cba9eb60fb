// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/tensor.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace layersplat {

struct GradcheckOptions {
    double step = 1e-5;
    double rel_tol = 1e-4;
    /// Denominator floor of the relative error, so near-zero gradients compare absolutely.
    double abs_floor = 1e-6;
    std::size_t samples = 100;
    std::uint64_t seed = 0;
    /// Skip coordinates whose one-sided differences disagree (the perturbation crossed a clamp,
    /// cull or footprint boundary). At most `max_skip_fraction` of attempts may be skipped.
    bool skip_kinks = false;
    double max_skip_fraction = 0.2;
};

struct GradcheckReport {
    std::string name;
    std::size_t checked = 0;
    std::size_t skipped = 0;
    double max_rel_err = 0.0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    bool passed = false;
};

/// Scalar-valued function of the inputs; called with tape-attached leaves for the analytic
/// pass and with plain tensors for the finite-difference passes.
using ScalarFn = std::function<Tensor(const std::vector<Tensor> &)>;

/// Compares reverse-mode gradients of `fn` with central finite differences on randomly sampled
/// input coordinates (all coordinates when there are fewer than `samples`).
GradcheckReport check_gradients(std::string name, const ScalarFn &fn,
                                const std::vector<Tensor> &inputs,
                                const GradcheckOptions &options = {});

/// Names of the built-in gradient suites, one per differentiable module.
std::vector<std::string> gradcheck_suite_names();

/// Runs the named built-in suite (or every suite when `name` is empty).
std::vector<GradcheckReport> run_gradcheck_suite(const std::string &name = {});

} // namespace layersplat
