// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/gradcheck.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace layersplat {

namespace {

Tensor
perturbed(const Tensor &t, std::size_t index, double delta) {
    std::vector<double> v(t.data().begin(), t.data().end());
    v[index] += delta;
    return Tensor(t.shape(), std::move(v));
}

double
evaluate(const ScalarFn &fn, const std::vector<Tensor> &inputs, std::size_t which,
         std::size_t index, double delta) {
    std::vector<Tensor> args;
    args.reserve(inputs.size());
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        args.push_back(k == which ? perturbed(inputs[k], index, delta) : inputs[k].detach());
    }
    return fn(args).item();
}

} // namespace

GradcheckReport
check_gradients(std::string name, const ScalarFn &fn, const std::vector<Tensor> &inputs,
                const GradcheckOptions &options) {
    GradcheckReport report;
    report.name = std::move(name);

    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(inputs.size());
    for (const auto &in : inputs) {
        leaves.push_back(tape.leaf(in));
    }
    const Tensor loss = fn(leaves);
    tape.backward(loss);
    const double f0 = loss.item();

    std::vector<std::pair<std::size_t, std::size_t>> coords;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        for (std::size_t i = 0; i < inputs[k].numel(); ++i) {
            coords.emplace_back(k, i);
        }
    }
    std::mt19937_64 rng(options.seed);
    std::shuffle(coords.begin(), coords.end(), rng);

    const double h = options.step;
    std::size_t attempts = 0;
    for (const auto &[k, i] : coords) {
        if (report.checked >= options.samples) {
            break;
        }
        ++attempts;
        const double fp = evaluate(fn, inputs, k, i, h);
        const double fm = evaluate(fn, inputs, k, i, -h);
        if (options.skip_kinks) {
            const double right = (fp - f0) / h;
            const double left = (f0 - fm) / h;
            if (std::abs(right - left) > 0.25 * (std::abs(right) + std::abs(left)) + 1e-4) {
                ++report.skipped;
                continue;
            }
        }
        const double numeric = (fp - fm) / (2.0 * h);
        const double analytic = tape.grad(leaves[k])[i];
        const double denom = std::max({std::abs(analytic), std::abs(numeric), options.abs_floor});
        const double err = std::abs(analytic - numeric) / denom;
        ++report.checked;
        if (std::isnan(err) || err > report.max_rel_err) {
            report.max_rel_err = std::isnan(err) ? INFINITY : err;
            report.worst_input = k;
            report.worst_index = i;
            report.worst_analytic = analytic;
            report.worst_numeric = numeric;
        }
    }

    const bool enough = report.checked >= std::min(options.samples, coords.size() - report.skipped);
    const bool few_skips =
        attempts == 0 ||
        static_cast<double>(report.skipped) <= options.max_skip_fraction * static_cast<double>(attempts);
    report.passed = enough && few_skips && report.max_rel_err <= options.rel_tol;
    return report;
}

} // namespace layersplat
