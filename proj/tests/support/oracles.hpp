// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <layersplat/synthetic.hpp>
#include <layersplat/tensor.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <vector>

namespace layersplat::oracle {

inline Tensor
random_tensor(Shape shape, std::mt19937_64 &rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> dist(lo, hi);
    std::vector<double> v(shape_numel(shape));
    for (auto &x : v) x = dist(rng);
    return Tensor(std::move(shape), std::move(v));
}

inline double
psnr(const Tensor &a, const Tensor &b) {
    double se = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) se += (a[i] - b[i]) * (a[i] - b[i]);
    const double mse = se / static_cast<double>(a.numel());
    return mse < 1e-10 ? 99.0 : -10.0 * std::log10(mse);
}

/// Direct 2D evaluation of every 11x11 window, one channel at a time.
inline double
ssim(const Tensor &a, const Tensor &b) {
    const int k = 11;
    const double sigma = 1.5;
    const double c1 = 0.01 * 0.01;
    const double c2 = 0.03 * 0.03;
    std::vector<double> w2(k * k);
    double total = 0.0;
    for (int y = 0; y < k; ++y) {
        for (int x = 0; x < k; ++x) {
            const double dy = y - (k - 1) / 2.0;
            const double dx = x - (k - 1) / 2.0;
            w2[y * k + x] = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma));
            total += w2[y * k + x];
        }
    }
    for (auto &v : w2) v /= total;
    const int h = static_cast<int>(a.shape()[0]);
    const int w = static_cast<int>(a.shape()[1]);
    const int ch = static_cast<int>(a.shape()[2]);
    const auto at = [&](const Tensor &t, int y, int x, int c) { return t[(y * w + x) * ch + c]; };
    double sum = 0.0;
    int count = 0;
    for (int c = 0; c < ch; ++c) {
        for (int y0 = 0; y0 + k <= h; ++y0) {
            for (int x0 = 0; x0 + k <= w; ++x0) {
                double ma = 0, mb = 0;
                for (int y = 0; y < k; ++y)
                    for (int x = 0; x < k; ++x) {
                        ma += w2[y * k + x] * at(a, y0 + y, x0 + x, c);
                        mb += w2[y * k + x] * at(b, y0 + y, x0 + x, c);
                    }
                double va = 0, vb = 0, cov = 0;
                for (int y = 0; y < k; ++y)
                    for (int x = 0; x < k; ++x) {
                        const double da = at(a, y0 + y, x0 + x, c) - ma;
                        const double db = at(b, y0 + y, x0 + x, c) - mb;
                        va += w2[y * k + x] * da * da;
                        vb += w2[y * k + x] * db * db;
                        cov += w2[y * k + x] * da * db;
                    }
                sum += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
                ++count;
            }
        }
    }
    return sum / count;
}

/// Nearest positive hit distance over every plane and every bounded box face.
inline std::optional<double>
first_hit(const RoomSpec &room, const Eigen::Vector3d &o, const Eigen::Vector3d &d) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto &p : room.planes) {
        if (d[p.axis] == 0.0) continue;
        const double t = (p.offset - o[p.axis]) / d[p.axis];
        if (t > 0.0) best = std::min(best, t);
    }
    for (const auto &b : room.boxes) {
        for (int axis = 0; axis < 3; ++axis) {
            if (d[axis] == 0.0) continue;
            for (double face : {b.min[axis], b.max[axis]}) {
                const double t = (face - o[axis]) / d[axis];
                if (t <= 0.0) continue;
                const Eigen::Vector3d x = o + t * d;
                bool inside = true;
                for (int a = 0; a < 3; ++a) {
                    if (a != axis && (x[a] < b.min[a] || x[a] > b.max[a])) inside = false;
                }
                if (inside) best = std::min(best, t);
            }
        }
    }
    if (!std::isfinite(best)) return std::nullopt;
    return best;
}

} // namespace layersplat::oracle
