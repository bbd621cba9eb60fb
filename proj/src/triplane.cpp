// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/ops.hpp>
#include <layersplat/triplane.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

namespace layersplat {

namespace {

// (column axis, row axis) of each plane.
constexpr std::array<std::array<int, 2>, 3> kPlaneAxes = {{{0, 1}, {0, 2}, {1, 2}}};

struct Corner {
    std::size_t col0 = 0;
    std::size_t row0 = 0;
    double fu = 0.0;
    double fv = 0.0;
};

Corner
locate(double u, double v, std::size_t res) {
    const double scale = static_cast<double>(res - 1);
    const double cu = u * scale;
    const double cv = v * scale;
    Corner c;
    c.col0 = std::min(static_cast<std::size_t>(std::floor(cu)), res - 2);
    c.row0 = std::min(static_cast<std::size_t>(std::floor(cv)), res - 2);
    c.fu = cu - static_cast<double>(c.col0);
    c.fv = cv - static_cast<double>(c.row0);
    return c;
}

} // namespace

Bounds
Bounds::around(const Tensor &points, double dilation) {
    if (points.rank() != 2 || points.shape()[1] != 3 || points.shape()[0] == 0) {
        throw ShapeError("Bounds::around expects non-empty [N,3] points, got " +
                         shape_str(points.shape()));
    }
    Bounds b;
    b.min.setConstant(std::numeric_limits<double>::infinity());
    b.max.setConstant(-std::numeric_limits<double>::infinity());
    const auto pv = points.data();
    for (std::size_t i = 0; i < points.shape()[0]; ++i) {
        for (int a = 0; a < 3; ++a) {
            b.min[a] = std::min(b.min[a], pv[3 * i + a]);
            b.max[a] = std::max(b.max[a], pv[3 * i + a]);
        }
    }
    for (int a = 0; a < 3; ++a) {
        double extent = b.max[a] - b.min[a];
        if (!(extent > 0.0)) {
            extent = 1e-3;
        }
        b.min[a] -= dilation * extent;
        b.max[a] += dilation * extent;
    }
    return b;
}

void
Bounds::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (!(max[a] > min[a])) {
            throw ShapeError("bounds must have positive extent on every axis");
        }
    }
}

TriPlaneField
TriPlaneField::random(std::size_t channels, std::size_t resolution, const Bounds &bounds,
                      std::mt19937_64 &rng, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<double> v(3 * channels * resolution * resolution);
    for (auto &x : v) {
        x = dist(rng);
    }
    TriPlaneField field{Tensor({3, channels, resolution, resolution}, std::move(v)), bounds};
    field.validate();
    return field;
}

void
TriPlaneField::validate() const {
    if (planes.rank() != 4 || planes.shape()[0] != 3 || planes.shape()[2] != planes.shape()[3] ||
        planes.shape()[2] < 2) {
        throw ShapeError("tri-plane tensor must be [3, C, R, R] with R >= 2, got " +
                         shape_str(planes.shape()));
    }
    bounds.validate();
}

Tensor
normalize_points(const Bounds &bounds, const Tensor &points) {
    bounds.validate();
    const Tensor lo({3}, {bounds.min.x(), bounds.min.y(), bounds.min.z()});
    const Tensor extent({3}, {bounds.max.x() - bounds.min.x(), bounds.max.y() - bounds.min.y(),
                              bounds.max.z() - bounds.min.z()});
    return clamp((points - lo) / extent, 0.0, 1.0);
}

Tensor
query(const Tensor &planes, const Bounds &bounds, const Tensor &points) {
    TriPlaneField{planes, bounds}.validate();
    if (points.rank() != 2 || points.shape()[1] != 3) {
        throw ShapeError("query points must be [N,3], got " + shape_str(points.shape()));
    }
    const std::size_t n = points.shape()[0];
    const std::size_t c = planes.shape()[1];
    const std::size_t res = planes.shape()[2];
    const std::size_t plane_size = c * res * res;

    // Normalized coordinates and whether each was clamped.
    auto unit = std::make_shared<std::vector<double>>(3 * n);
    auto inside = std::make_shared<std::vector<bool>>(3 * n);
    const auto pv = points.data();
    for (std::size_t i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            const double t = (pv[3 * i + a] - bounds.min[a]) / (bounds.max[a] - bounds.min[a]);
            (*unit)[3 * i + a] = std::clamp(t, 0.0, 1.0);
            (*inside)[3 * i + a] = t >= 0.0 && t <= 1.0;
        }
    }

    const auto tv = planes.data();
    std::vector<double> out(n * 3 * c);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t p = 0; p < 3; ++p) {
            const auto [ax_u, ax_v] = kPlaneAxes[p];
            const Corner k = locate((*unit)[3 * i + ax_u], (*unit)[3 * i + ax_v], res);
            const double w00 = (1 - k.fu) * (1 - k.fv);
            const double w01 = k.fu * (1 - k.fv);
            const double w10 = (1 - k.fu) * k.fv;
            const double w11 = k.fu * k.fv;
            for (std::size_t ch = 0; ch < c; ++ch) {
                const double *grid = tv.data() + p * plane_size + ch * res * res;
                const std::size_t base = k.row0 * res + k.col0;
                out[i * 3 * c + p * c + ch] = w00 * grid[base] + w01 * grid[base + 1] +
                                              w10 * grid[base + res] + w11 * grid[base + res + 1];
            }
        }
    }

    const Eigen::Vector3d extent = bounds.max - bounds.min;
    BackwardFn fn = [planes, unit, inside, n, c, res, plane_size,
                     extent](std::span<const double> g, std::span<std::vector<double> *> gin) {
        const auto tv = planes.data();
        const double scale = static_cast<double>(res - 1);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t p = 0; p < 3; ++p) {
                const auto [ax_u, ax_v] = kPlaneAxes[p];
                const Corner k = locate((*unit)[3 * i + ax_u], (*unit)[3 * i + ax_v], res);
                const double w00 = (1 - k.fu) * (1 - k.fv);
                const double w01 = k.fu * (1 - k.fv);
                const double w10 = (1 - k.fu) * k.fv;
                const double w11 = k.fu * k.fv;
                const std::size_t base = k.row0 * res + k.col0;
                double du = 0.0;
                double dv = 0.0;
                for (std::size_t ch = 0; ch < c; ++ch) {
                    const double go = g[i * 3 * c + p * c + ch];
                    const std::size_t off = p * plane_size + ch * res * res + base;
                    if (gin[0]) {
                        auto &gt = *gin[0];
                        gt[off] += go * w00;
                        gt[off + 1] += go * w01;
                        gt[off + res] += go * w10;
                        gt[off + res + 1] += go * w11;
                    }
                    const double t00 = tv[off];
                    const double t01 = tv[off + 1];
                    const double t10 = tv[off + res];
                    const double t11 = tv[off + res + 1];
                    du += go * ((1 - k.fv) * (t01 - t00) + k.fv * (t11 - t10));
                    dv += go * ((1 - k.fu) * (t10 - t00) + k.fu * (t11 - t01));
                }
                if (gin[1]) {
                    auto &gp = *gin[1];
                    if ((*inside)[3 * i + ax_u]) {
                        gp[3 * i + ax_u] += du * scale / extent[ax_u];
                    }
                    if ((*inside)[3 * i + ax_v]) {
                        gp[3 * i + ax_v] += dv * scale / extent[ax_v];
                    }
                }
            }
        }
    };
    return make_result({planes, points}, {n, 3 * c}, std::move(out), std::move(fn));
}

} // namespace layersplat
