// Copyright Contributors to the layersplat project
// SPDX-License-Identifier: Apache-2.0

#include <layersplat/errors.hpp>
#include <layersplat/metrics.hpp>

#include <cmath>

namespace layersplat {

namespace {

void
check_pair(const Tensor &a, const Tensor &b, const char *what) {
    if (a.shape() != b.shape() || a.rank() != 3) {
        throw ShapeError(std::string(what) + ": images must share [H,W,C] extents, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    }
}

// Valid separable correlation of one channel (stride `cs` between channels) with `win`.
// src is [H, W, C] at channel offset c; dst is [(H-k+1), (W-k+1)].
void
filter_valid(const double *src, std::size_t h, std::size_t w, std::size_t cs,
             const std::vector<double> &win, std::vector<double> &tmp, std::vector<double> &dst) {
    const std::size_t k = win.size();
    const std::size_t wo = w - k + 1;
    const std::size_t ho = h - k + 1;
    tmp.assign(h * wo, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += win[t] * src[(y * w + x + t) * cs];
            tmp[y * wo + x] = acc;
        }
    dst.assign(ho * wo, 0.0);
    for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x) {
            double acc = 0.0;
            for (std::size_t t = 0; t < k; ++t) acc += win[t] * tmp[(y + t) * wo + x];
            dst[y * wo + x] = acc;
        }
}

// Adjoint of filter_valid: scatters g [(H-k+1), (W-k+1)] back to an [H, W] plane.
void
filter_valid_adjoint(const std::vector<double> &g, std::size_t h, std::size_t w,
                     const std::vector<double> &win, std::vector<double> &tmp, std::vector<double> &dst) {
    const std::size_t k = win.size();
    const std::size_t wo = w - k + 1;
    const std::size_t ho = h - k + 1;
    tmp.assign(h * wo, 0.0);
    for (std::size_t y = 0; y < ho; ++y)
        for (std::size_t x = 0; x < wo; ++x)
            for (std::size_t t = 0; t < k; ++t) tmp[(y + t) * wo + x] += win[t] * g[y * wo + x];
    dst.assign(h * w, 0.0);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < wo; ++x)
            for (std::size_t t = 0; t < k; ++t) dst[y * w + x + t] += win[t] * tmp[y * wo + x];
}

} // namespace

std::vector<double>
gaussian_window(std::size_t size, double sigma) {
    std::vector<double> win(size);
    const double c = 0.5 * static_cast<double>(size - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - c;
        win[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        total += win[i];
    }
    for (auto &v : win) v /= total;
    return win;
}

double
psnr(const Tensor &a, const Tensor &b) {
    check_pair(a, b, "psnr");
    const auto av = a.data();
    const auto bv = b.data();
    double se = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        const double d = av[i] - bv[i];
        se += d * d;
    }
    const double mse = se / static_cast<double>(av.size());
    if (mse < 1e-10) {
        return kPsnrCap;
    }
    return 10.0 * std::log10(1.0 / mse);
}

Tensor
ssim(const Tensor &a, const Tensor &b, const SsimConfig &config) {
    check_pair(a, b, "ssim");
    const std::size_t h = a.shape()[0];
    const std::size_t w = a.shape()[1];
    const std::size_t nc = a.shape()[2];
    const std::size_t k = config.window;
    if (h < k || w < k) {
        throw ShapeError("ssim: image " + shape_str(a.shape()) + " is smaller than the " +
                         std::to_string(k) + "x" + std::to_string(k) + " window");
    }
    const std::vector<double> win = gaussian_window(k, config.sigma);
    const double c1 = std::pow(config.k1 * config.dynamic_range, 2);
    const double c2 = std::pow(config.k2 * config.dynamic_range, 2);
    const std::size_t ho = h - k + 1;
    const std::size_t wo = w - k + 1;
    const double count = static_cast<double>(ho * wo * nc);

    // Per channel: d(mean SSIM)/d(filtered moments), kept for the backward pass.
    struct Partials {
        std::vector<double> ma, mb, eaa, ebb, eab;
    };
    auto partials = std::make_shared<std::vector<Partials>>(nc);

    const auto av = a.data();
    const auto bv = b.data();
    std::vector<double> prod_aa(h * w), prod_bb(h * w), prod_ab(h * w), tmp;
    std::vector<double> ma, mb, faa, fbb, fab;
    double total = 0.0;
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t p = 0; p < h * w; ++p) {
            const double x = av[p * nc + c];
            const double y = bv[p * nc + c];
            prod_aa[p] = x * x;
            prod_bb[p] = y * y;
            prod_ab[p] = x * y;
        }
        filter_valid(av.data() + c, h, w, nc, win, tmp, ma);
        filter_valid(bv.data() + c, h, w, nc, win, tmp, mb);
        filter_valid(prod_aa.data(), h, w, 1, win, tmp, faa);
        filter_valid(prod_bb.data(), h, w, 1, win, tmp, fbb);
        filter_valid(prod_ab.data(), h, w, 1, win, tmp, fab);
        Partials &pt = (*partials)[c];
        for (auto *v : {&pt.ma, &pt.mb, &pt.eaa, &pt.ebb, &pt.eab}) v->assign(ho * wo, 0.0);
        for (std::size_t p = 0; p < ho * wo; ++p) {
            const double mx = ma[p];
            const double my = mb[p];
            const double sxx = faa[p] - mx * mx;
            const double syy = fbb[p] - my * my;
            const double sxy = fab[p] - mx * my;
            const double a1 = 2.0 * mx * my + c1;
            const double a2 = 2.0 * sxy + c2;
            const double b1 = mx * mx + my * my + c1;
            const double b2 = sxx + syy + c2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            const double inv = 1.0 / (b1 * b2);
            const double shift = s * (1.0 / b1 - 1.0 / b2);
            pt.ma[p] = (2.0 * my * a2 - 2.0 * my * a1) * inv - 2.0 * mx * shift;
            pt.mb[p] = (2.0 * mx * a2 - 2.0 * mx * a1) * inv - 2.0 * my * shift;
            pt.eaa[p] = -s / b2;
            pt.ebb[p] = -s / b2;
            pt.eab[p] = 2.0 * a1 * inv;
        }
    }

    BackwardFn fn = [a, b, partials, win, h, w, nc, count](std::span<const double> g,
                                                            std::span<std::vector<double> *> gin) {
        const double scale = g[0] / count;
        const auto av = a.data();
        const auto bv = b.data();
        std::vector<double> tmp, scaled, ma, mb, eaa, ebb, eab;
        auto adjoint = [&](const std::vector<double> &src, std::vector<double> &dst) {
            scaled.resize(src.size());
            for (std::size_t i = 0; i < src.size(); ++i) scaled[i] = src[i] * scale;
            filter_valid_adjoint(scaled, h, w, win, tmp, dst);
        };
        for (std::size_t c = 0; c < nc; ++c) {
            const Partials &pt = (*partials)[c];
            adjoint(pt.ma, ma);
            adjoint(pt.mb, mb);
            adjoint(pt.eaa, eaa);
            adjoint(pt.ebb, ebb);
            adjoint(pt.eab, eab);
            for (std::size_t p = 0; p < h * w; ++p) {
                const double x = av[p * nc + c];
                const double y = bv[p * nc + c];
                if (gin[0]) (*gin[0])[p * nc + c] += ma[p] + 2.0 * x * eaa[p] + y * eab[p];
                if (gin[1]) (*gin[1])[p * nc + c] += mb[p] + 2.0 * y * ebb[p] + x * eab[p];
            }
        }
    };
    return make_result({a, b}, {}, {total / count}, std::move(fn));
}

double
ssim_value(const Tensor &a, const Tensor &b, const SsimConfig &config) {
    return ssim(a.detach(), b.detach(), config).item();
}

} // namespace layersplat
