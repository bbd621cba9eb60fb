// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/ops.hpp>
#include <layersplat/render.hpp>
#include <layersplat/sh.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace layersplat {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

struct Footprint {
    bool visible = false;
    Eigen::Vector3d view = Eigen::Vector3d::Zero();
    Mat23 jac = Mat23::Zero();
    Mat23 affine = Mat23::Zero(); // J W
    Eigen::Vector2d center = Eigen::Vector2d::Zero();
    Eigen::Matrix2d cov2d = Eigen::Matrix2d::Identity();
    Eigen::Matrix2d conic = Eigen::Matrix2d::Identity();
    double radius = 0.0;
};

Footprint
project_footprint(const double *mu, const double *cov, const Eigen::Matrix3d &rot,
                  const Eigen::Vector3d &trans, const Intrinsics &intr, const RenderTarget &target) {
    Footprint fp;
    fp.view = rot * Eigen::Vector3d(mu[0], mu[1], mu[2]) + trans;
    const double z = fp.view.z();
    if (!(z > kNearClip)) {
        return fp;
    }
    const double x = fp.view.x();
    const double y = fp.view.y();
    const double f = intr.f;
    fp.jac << f / z, 0.0, -f * x / (z * z), 0.0, f / z, -f * y / (z * z);
    fp.affine = fp.jac * rot;

    Eigen::Matrix3d sigma;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) sigma(a, b) = cov[3 * a + b];
    }
    fp.cov2d = fp.affine * sigma * fp.affine.transpose();
    fp.cov2d(0, 1) = fp.cov2d(1, 0) = 0.5 * (fp.cov2d(0, 1) + fp.cov2d(1, 0));
    fp.cov2d(0, 0) += target.blur_floor;
    fp.cov2d(1, 1) += target.blur_floor;

    const double det = fp.cov2d.determinant();
    if (!(det > 0.0)) {
        return fp;
    }
    fp.conic << fp.cov2d(1, 1) / det, -fp.cov2d(0, 1) / det, -fp.cov2d(0, 1) / det,
        fp.cov2d(0, 0) / det;
    const double mid = 0.5 * (fp.cov2d(0, 0) + fp.cov2d(1, 1));
    const double lambda_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
    fp.radius = target.footprint_sigmas * std::sqrt(lambda_max);
    fp.center = {f * x / z + intr.cx, f * y / z + intr.cy};

    const double last_x = target.width - 1;
    const double last_y = target.height - 1;
    fp.visible = !(fp.center.x() + fp.radius < 0.0 || fp.center.x() - fp.radius > last_x ||
                   fp.center.y() + fp.radius < 0.0 || fp.center.y() - fp.radius > last_y);
    return fp;
}

struct AlphaSample {
    double alpha = 0.0;
    double falloff = 0.0; // exp(-power)
    double dx = 0.0;
    double dy = 0.0;
    bool clamped = false;
    bool inside = false;
};

// Opacity of one footprint at pixel center (px, py); zero outside the truncated footprint.
inline AlphaSample
sample_alpha(const Footprint &fp, double opacity, double px, double py,
             const RenderTarget &target) {
    AlphaSample s;
    s.dx = px - fp.center.x();
    s.dy = py - fp.center.y();
    const double m2 = fp.conic(0, 0) * s.dx * s.dx + 2.0 * fp.conic(0, 1) * s.dx * s.dy +
                      fp.conic(1, 1) * s.dy * s.dy;
    if (m2 > target.footprint_sigmas * target.footprint_sigmas) {
        return s;
    }
    s.inside = true;
    s.falloff = std::exp(-0.5 * m2);
    s.alpha = std::max(opacity * s.falloff, 0.0);
    if (s.alpha > target.alpha_max) {
        s.alpha = target.alpha_max;
        s.clamped = true;
    }
    return s;
}

struct Prepared {
    std::vector<Footprint> footprints;
    std::vector<std::uint32_t> order; // visible Gaussians, front to back
};

void
check_scene(const SplatScene &scene) {
    const std::size_t n = scene.opacity.numel();
    const std::size_t nb = sh_basis_count(scene.sh_order);
    if (scene.opacity.shape() != Shape{n} || scene.mean.shape() != Shape{n, 3} ||
        scene.covariance.shape() != Shape{n, 3, 3} || scene.sh.shape() != Shape{n, nb, 3}) {
        throw ShapeError("splat scene tensors are inconsistent: mean " +
                         shape_str(scene.mean.shape()) + ", covariance " +
                         shape_str(scene.covariance.shape()) + ", opacity " +
                         shape_str(scene.opacity.shape()) + ", sh " + shape_str(scene.sh.shape()));
    }
}

Prepared
prepare(const Tensor &mean, const Tensor &cov, const Pose &pose, const Intrinsics &intr,
        const RenderTarget &target) {
    const std::size_t n = mean.shape()[0];
    const Eigen::Matrix3d rot = pose.rotation_matrix();
    Prepared p;
    p.footprints.resize(n);
    const auto mv = mean.data();
    const auto cv = cov.data();
    for (std::size_t i = 0; i < n; ++i) {
        p.footprints[i] =
            project_footprint(mv.data() + 3 * i, cv.data() + 9 * i, rot, pose.translation, intr, target);
        if (p.footprints[i].visible) {
            p.order.push_back(static_cast<std::uint32_t>(i));
        }
    }
    std::stable_sort(p.order.begin(), p.order.end(), [&](std::uint32_t a, std::uint32_t b) {
        return p.footprints[a].view.z() < p.footprints[b].view.z();
    });
    return p;
}

struct TiledState {
    Prepared prep;
    std::size_t tiles_x = 0;
    std::vector<std::vector<std::uint32_t>> tiles;
    std::vector<std::uint32_t> last;  // per pixel: entries of the tile list consumed
    std::vector<double> final_t;      // per pixel transmittance after compositing
};

std::size_t
tile_of(const TiledState &s, int x, int y, int tile_size) {
    return static_cast<std::size_t>(y / tile_size) * s.tiles_x + static_cast<std::size_t>(x / tile_size);
}

// Composite into `out` ([H, W, 4]: rgb, alpha).
void
rasterize_forward(TiledState &s, const Tensor &opacity, const Tensor &rgb,
                  const RenderTarget &target, std::vector<double> &out) {
    const int w = target.width;
    const int h = target.height;
    const int ts = target.tile_size;
    s.tiles_x = static_cast<std::size_t>((w + ts - 1) / ts);
    const std::size_t tiles_y = static_cast<std::size_t>((h + ts - 1) / ts);
    s.tiles.assign(s.tiles_x * tiles_y, {});
    for (const auto g : s.prep.order) {
        const Footprint &fp = s.prep.footprints[g];
        const int x0 = std::max(0, static_cast<int>(std::ceil(fp.center.x() - fp.radius)));
        const int x1 = std::min(w - 1, static_cast<int>(std::floor(fp.center.x() + fp.radius)));
        const int y0 = std::max(0, static_cast<int>(std::ceil(fp.center.y() - fp.radius)));
        const int y1 = std::min(h - 1, static_cast<int>(std::floor(fp.center.y() + fp.radius)));
        if (x0 > x1 || y0 > y1) {
            continue;
        }
        for (int ty = y0 / ts; ty <= y1 / ts; ++ty) {
            for (int tx = x0 / ts; tx <= x1 / ts; ++tx) {
                s.tiles[static_cast<std::size_t>(ty) * s.tiles_x + static_cast<std::size_t>(tx)].push_back(g);
            }
        }
    }

    const auto ov = opacity.data();
    const auto cv = rgb.data();
    const std::size_t npix = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    s.last.assign(npix, 0);
    s.final_t.assign(npix, 1.0);
    out.assign(npix * 4, 0.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto &list = s.tiles[tile_of(s, x, y, ts)];
            const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
            double t = 1.0;
            double c[3] = {0.0, 0.0, 0.0};
            std::uint32_t used = 0;
            for (std::uint32_t j = 0; j < list.size(); ++j) {
                const std::uint32_t g = list[j];
                used = j + 1;
                const AlphaSample a = sample_alpha(s.prep.footprints[g], ov[g], x, y, target);
                if (!a.inside) {
                    continue;
                }
                for (int ch = 0; ch < 3; ++ch) c[ch] += a.alpha * cv[3 * g + ch] * t;
                t *= 1.0 - a.alpha;
                if (t < target.min_transmittance) {
                    break;
                }
            }
            s.last[pix] = used;
            s.final_t[pix] = t;
            for (int ch = 0; ch < 3; ++ch) out[4 * pix + ch] = c[ch] + t * target.background[ch];
            out[4 * pix + 3] = 1.0 - t;
        }
    }
}

struct Entry {
    std::uint32_t g;
    AlphaSample a;
    double t_before;
};

void
rasterize_backward(const TiledState &s, const Tensor &cov, const Tensor &opacity,
                   const Tensor &rgb, const Pose &pose, const Intrinsics &intr,
                   const RenderTarget &target, std::span<const double> g,
                   std::span<std::vector<double> *> gin) {
    const std::size_t n = opacity.numel();
    const auto ov = opacity.data();
    const auto cv = rgb.data();
    const int w = target.width;
    const int h = target.height;

    std::vector<double> g_opacity(n, 0.0);
    std::vector<double> g_rgb(3 * n, 0.0);
    std::vector<Eigen::Vector2d> g_center(n, Eigen::Vector2d::Zero());
    std::vector<Eigen::Matrix2d> g_conic(n, Eigen::Matrix2d::Zero()); // d/d(full symmetric conic)

    std::vector<Entry> entries;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t pix = static_cast<std::size_t>(y) * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
            const double *gc = g.data() + 4 * pix;
            const double g_alpha_out = gc[3];
            if (gc[0] == 0.0 && gc[1] == 0.0 && gc[2] == 0.0 && g_alpha_out == 0.0) {
                continue;
            }
            const auto &list = s.tiles[tile_of(s, x, y, target.tile_size)];
            entries.clear();
            double t = 1.0;
            for (std::uint32_t j = 0; j < s.last[pix]; ++j) {
                const std::uint32_t gi = list[j];
                const AlphaSample a = sample_alpha(s.prep.footprints[gi], ov[gi], x, y, target);
                if (!a.inside) {
                    continue;
                }
                entries.push_back({gi, a, t});
                t *= 1.0 - a.alpha;
            }
            const double t_final = s.final_t[pix];
            const double bg_dot = gc[0] * target.background[0] + gc[1] * target.background[1] +
                                  gc[2] * target.background[2];
            double rest[3] = {0.0, 0.0, 0.0};
            for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
                const std::uint32_t gi = it->g;
                const double alpha = it->a.alpha;
                const double tb = it->t_before;
                const double *col = cv.data() + 3 * gi;
                double g_alpha = 0.0;
                for (int ch = 0; ch < 3; ++ch) {
                    g_rgb[3 * gi + ch] += gc[ch] * alpha * tb;
                    g_alpha += gc[ch] * tb * (col[ch] - rest[ch]);
                }
                const double behind = t_final / (1.0 - alpha);
                g_alpha += (g_alpha_out - bg_dot) * behind;
                for (int ch = 0; ch < 3; ++ch) rest[ch] = alpha * col[ch] + (1.0 - alpha) * rest[ch];

                if (it->a.clamped || ov[gi] < 0.0) {
                    continue;
                }
                g_opacity[gi] += g_alpha * it->a.falloff;
                // alpha = sigma exp(-m2/2), m2 = d^T Q d with d = pixel - center
                const double g_m2 = -0.5 * alpha * g_alpha;
                const double dx = it->a.dx;
                const double dy = it->a.dy;
                const Eigen::Matrix2d &q = s.prep.footprints[gi].conic;
                Eigen::Matrix2d &gq = g_conic[gi];
                gq(0, 0) += g_m2 * dx * dx;
                gq(0, 1) += g_m2 * dx * dy;
                gq(1, 0) += g_m2 * dx * dy;
                gq(1, 1) += g_m2 * dy * dy;
                g_center[gi].x() += -2.0 * g_m2 * (q(0, 0) * dx + q(0, 1) * dy);
                g_center[gi].y() += -2.0 * g_m2 * (q(1, 0) * dx + q(1, 1) * dy);
            }
        }
    }

    if (gin[2]) {
        for (std::size_t i = 0; i < n; ++i) (*gin[2])[i] += g_opacity[i];
    }
    if (gin[3]) {
        for (std::size_t i = 0; i < 3 * n; ++i) (*gin[3])[i] += g_rgb[i];
    }
    if (!gin[0] && !gin[1]) {
        return;
    }

    const Eigen::Matrix3d rot = pose.rotation_matrix();
    const auto cvv = cov.data();
    const double f = intr.f;
    for (const auto gi : s.prep.order) {
        const Footprint &fp = s.prep.footprints[gi];
        const Eigen::Matrix2d &q = fp.conic;
        // cov2d -> conic: dL/dM = -Q dL/dQ Q
        const Eigen::Matrix2d g_cov2d = -q * g_conic[gi] * q;
        Eigen::Matrix3d sigma;
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) sigma(a, b) = cvv[9 * gi + 3 * a + b];
        }
        if (gin[1]) {
            const Eigen::Matrix3d g_sigma = fp.affine.transpose() * g_cov2d * fp.affine;
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) (*gin[1])[9 * gi + 3 * a + b] += g_sigma(a, b);
            }
        }
        if (!gin[0]) {
            continue;
        }
        const Mat23 g_affine = 2.0 * g_cov2d * fp.affine * sigma;
        const Mat23 g_jac = g_affine * rot.transpose();
        const double x = fp.view.x();
        const double y = fp.view.y();
        const double z = fp.view.z();
        const double z2 = z * z;
        const double z3 = z2 * z;
        Eigen::Vector3d g_view;
        g_view.x() = -f / z2 * g_jac(0, 2) + f / z * g_center[gi].x();
        g_view.y() = -f / z2 * g_jac(1, 2) + f / z * g_center[gi].y();
        g_view.z() = -f / z2 * (g_jac(0, 0) + g_jac(1, 1)) + 2.0 * f * x / z3 * g_jac(0, 2) +
                     2.0 * f * y / z3 * g_jac(1, 2) - f * x / z2 * g_center[gi].x() -
                     f * y / z2 * g_center[gi].y();
        const Eigen::Vector3d g_mean = rot.transpose() * g_view;
        for (int a = 0; a < 3; ++a) (*gin[0])[3 * gi + a] += g_mean[a];
    }
}

Tensor
rasterize(const Tensor &mean, const Tensor &cov, const Tensor &opacity, const Tensor &rgb,
          const Pose &pose, const Intrinsics &intr, const RenderTarget &target) {
    auto state = std::make_shared<TiledState>();
    state->prep = prepare(mean, cov, pose, intr, target);
    std::vector<double> out;
    rasterize_forward(*state, opacity, rgb, target, out);
    const Shape shape{static_cast<std::size_t>(target.height), static_cast<std::size_t>(target.width), 4};
    BackwardFn fn = [state, mean, cov, opacity, rgb, pose, intr,
                     target](std::span<const double> g, std::span<std::vector<double> *> gin) {
        rasterize_backward(*state, cov, opacity, rgb, pose, intr, target, g, gin);
    };
    return make_result({mean, cov, opacity, rgb}, shape, std::move(out), std::move(fn));
}

RenderOutput
split_output(const Tensor &rgba, const RenderTarget &target) {
    const auto h = static_cast<std::size_t>(target.height);
    const auto w = static_cast<std::size_t>(target.width);
    return {slice(rgba, 2, 0, 3), reshape(slice(rgba, 2, 3, 4), {h, w})};
}

} // namespace

void
RenderTarget::validate() const {
    if (width <= 0 || height <= 0 || tile_size <= 0) {
        throw ShapeError("render target extents and tile size must be positive");
    }
    if (!(alpha_max > 0.0 && alpha_max < 1.0) || !(blur_floor >= 0.0)) {
        throw ShapeError("render target compositing constants out of range");
    }
}

std::optional<ProjectedGaussian>
project_gaussian(const DecodedGaussian &g, const Pose &pose, const Intrinsics &intr,
                 const RenderTarget &target) {
    const double mu[3] = {g.mean.x(), g.mean.y(), g.mean.z()};
    double cov[9];
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) cov[3 * a + b] = g.covariance(a, b);
    }
    const Footprint fp = project_footprint(mu, cov, pose.rotation_matrix(), pose.translation, intr, target);
    if (!fp.visible) {
        return std::nullopt;
    }
    ProjectedGaussian p;
    p.center_px = fp.center;
    p.cov2d = fp.cov2d;
    p.view_z = fp.view.z();
    p.opacity = g.opacity;
    p.radius_px = fp.radius;
    const Eigen::Vector3d dir = (g.mean - pose.camera_center()).normalized();
    p.rgb = sh_color(g.sh, dir);
    return p;
}

SplatScene
SplatScene::from_stack(const GaussianLayerStack &stack) {
    return {stack.mean, stack.covariance, stack.opacity, stack.sh, stack.sh_order};
}

Tensor
view_directions(const Tensor &mean, const Pose &pose) {
    const Eigen::Vector3d c = pose.camera_center();
    const Tensor rel = mean - Tensor({3}, {c.x(), c.y(), c.z()});
    return rel / sqrt(sum(rel * rel, 1, true));
}

RenderOutput
render(const SplatScene &scene, const Pose &pose, const Intrinsics &intr,
       const RenderTarget &target) {
    check_scene(scene);
    target.validate();
    const Tensor rgb = sh_color(scene.sh, view_directions(scene.mean, pose), scene.sh_order);
    const Tensor rgba = rasterize(scene.mean, scene.covariance, scene.opacity, rgb, pose, intr, target);
    return split_output(rgba, target);
}

RenderOutput
render(const GaussianLayerStack &stack, const Pose &pose, const Intrinsics &intr,
       const RenderTarget &target) {
    return render(SplatScene::from_stack(stack), pose, intr, target);
}

RenderOutput
render_reference(const SplatScene &scene, const Pose &pose, const Intrinsics &intr,
                 const RenderTarget &target) {
    check_scene(scene);
    target.validate();
    const Tensor rgb =
        sh_color(scene.sh.detach(), view_directions(scene.mean.detach(), pose), scene.sh_order);
    const Prepared prep = prepare(scene.mean, scene.covariance, pose, intr, target);
    const auto ov = scene.opacity.data();
    const auto cv = rgb.data();
    const std::size_t w = static_cast<std::size_t>(target.width);
    const std::size_t h = static_cast<std::size_t>(target.height);
    std::vector<double> image(h * w * 3);
    std::vector<double> alpha(h * w);
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            double t = 1.0;
            double c[3] = {0.0, 0.0, 0.0};
            for (const auto g : prep.order) {
                const AlphaSample a = sample_alpha(prep.footprints[g], ov[g], static_cast<double>(x),
                                                   static_cast<double>(y), target);
                if (!a.inside) {
                    continue;
                }
                for (int ch = 0; ch < 3; ++ch) c[ch] += a.alpha * cv[3 * g + ch] * t;
                t *= 1.0 - a.alpha;
            }
            const std::size_t pix = y * w + x;
            for (int ch = 0; ch < 3; ++ch) image[3 * pix + ch] = c[ch] + t * target.background[ch];
            alpha[pix] = 1.0 - t;
        }
    }
    return {Tensor({h, w, 3}, std::move(image)), Tensor({h, w}, std::move(alpha))};
}

RenderOutput
render_reference(const GaussianLayerStack &stack, const Pose &pose, const Intrinsics &intr,
                 const RenderTarget &target) {
    return render_reference(SplatScene::from_stack(stack), pose, intr, target);
}

} // namespace layersplat
